#include "sensorfuse/box.hpp"

#include <cmath>
#include <numbers>

#include "sensorfuse/errors.hpp"

namespace sensorfuse {

std::string_view class_name(ObjectClass c) {
  return c == ObjectClass::kCar ? "car" : "pedestrian";
}

ObjectClass parse_class(std::string_view name) {
  if (name == "car") return ObjectClass::kCar;
  if (name == "pedestrian") return ObjectClass::kPedestrian;
  throw ValidationError("class", "unknown class '" + std::string(name) + "'");
}

double wrap_yaw(double yaw) {
  constexpr double kPi = std::numbers::pi;
  double w = std::remainder(yaw, 2.0 * kPi);  // [-pi, pi]
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

double Box3D::bev_range() const { return std::hypot(x, z); }

void Box3D::validate() const {
  if (!(w > 0) || !(l > 0) || !(h > 0)) throw ContractViolation("box sizes must be positive");
  if (!(yaw > -std::numbers::pi && yaw <= std::numbers::pi)) {
    throw ContractViolation("box yaw is not wrapped to (-pi, pi]");
  }
  if (!(score >= 0.0 && score <= 1.0)) throw ContractViolation("box score outside [0, 1]");
}

}  // namespace sensorfuse
