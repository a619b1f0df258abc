#pragma once

#include <array>
#include <string>
#include <string_view>

namespace sensorfuse {

enum class ObjectClass : int { kCar = 0, kPedestrian = 1 };
inline constexpr int kNumClasses = 2;

std::string_view class_name(ObjectClass c);
ObjectClass parse_class(std::string_view name);

/// Oriented 3D box in the LiDAR frame (y down). `w` spans local x, `l`
/// spans local z, `h` spans y. `yaw` rotates the local (x, z) axes
/// counter-clockwise in the (x, z) plane and is wrapped to (-pi, pi].
struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 1.0;
  double l = 1.0;
  double h = 1.0;
  double yaw = 0.0;
  ObjectClass cls = ObjectClass::kCar;
  double score = 1.0;

  /// Ego distance in the BEV plane.
  double bev_range() const;
  /// Throws ContractViolation on non-positive sizes, unwrapped yaw or
  /// score outside [0, 1].
  void validate() const;
  bool operator==(const Box3D&) const = default;
};

double wrap_yaw(double yaw);

}  // namespace sensorfuse
