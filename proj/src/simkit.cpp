#include "sensorfuse/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include "sensorfuse/errors.hpp"
#include "sensorfuse/iou.hpp"

namespace sensorfuse::simkit {

namespace {

using Rng = std::mt19937_64;
constexpr double kDeg = std::numbers::pi / 180.0;

enum Stream : std::uint64_t {
  kObjects = 1,
  kLidar = 2,
  kRadar = 3,
  kRgb = 4,
  kGated = 5,
  kWeather = 6,
  kObjectMotion = 7,
};

double uniform(Rng& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}
double normal(Rng& rng, double sigma) {
  if (sigma <= 0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

enum class Surface { kNone, kGround, kCar, kPedestrian };

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Surface surface = Surface::kNone;
  int object = -1;
  double rel_height = 0.0;  // 0 at the bottom of an object, 1 at the top
};

Surface surface_of(ObjectClass c) {
  return c == ObjectClass::kCar ? Surface::kCar : Surface::kPedestrian;
}

// Ray vs oriented box (slab test in the box frame). Returns entry distance.
std::optional<double> ray_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Eigen::Vector3d rel = o - Eigen::Vector3d(b.x, b.y, b.z);
  // local = R^T (world - center), R rotating (x, z) counter-clockwise.
  const Eigen::Vector3d lo(c * rel.x() + s * rel.z(), rel.y(), -s * rel.x() + c * rel.z());
  const Eigen::Vector3d ld(c * d.x() + s * d.z(), d.y(), -s * d.x() + c * d.z());
  const Eigen::Vector3d half(b.w / 2, b.h / 2, b.l / 2);
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(ld[a]) < 1e-15) {
      if (std::abs(lo[a]) > half[a]) return std::nullopt;
      continue;
    }
    double ta = (-half[a] - lo[a]) / ld[a];
    double tb = (half[a] - lo[a]) / ld[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (t0 <= 0.0) return std::nullopt;
  return t0;
}

Hit cast(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Scene& scene, double max_t) {
  Hit hit;
  for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
    const Box3D& b = scene.objects[i];
    if (auto t = ray_box(o, d, b); t && *t < hit.t && *t <= max_t) {
      hit.t = *t;
      hit.surface = surface_of(b.cls);
      hit.object = i;
      const double y = o.y() + *t * d.y();
      hit.rel_height = std::clamp((b.y + b.h / 2 - y) / b.h, 0.0, 1.0);
    }
  }
  if (d.y() > 1e-12) {
    const double t = -o.y() / d.y();
    if (t > 0 && t < hit.t && t <= max_t) {
      hit.t = t;
      hit.surface = Surface::kGround;
      hit.object = -1;
    }
  }
  return hit;
}

std::array<double, 3> rgb_color(Surface s, double rel_height) {
  switch (s) {
    case Surface::kCar: {
      const double shade = 0.7 + 0.3 * rel_height;
      return {0.8 * shade, 0.25 * shade, 0.2};
    }
    case Surface::kPedestrian: {
      const double shade = 0.75 + 0.25 * rel_height;
      return {0.25, 0.7 * shade, 0.35 * shade};
    }
    case Surface::kGround: return {0.35, 0.35, 0.3};
    case Surface::kNone: return {0.55, 0.65, 0.9};
  }
  return {0, 0, 0};
}

double gated_reflectivity(Surface s) {
  switch (s) {
    case Surface::kCar: return 0.9;
    case Surface::kPedestrian: return 0.7;
    case Surface::kGround: return 0.25;
    case Surface::kNone: return 0.0;
  }
  return 0.0;
}

// Range-gate sensitivity profiles: the gated image encodes distance in the
// relative intensity of its slices.
constexpr std::array<double, 3> kGateCenter{12.0, 35.0, 65.0};
constexpr std::array<double, 3> kGateWidth{10.0, 14.0, 20.0};

double lidar_reflectivity(Surface s) {
  switch (s) {
    case Surface::kCar: return 0.8;
    case Surface::kPedestrian: return 0.55;
    case Surface::kGround: return 0.15;
    case Surface::kNone: return 0.0;
  }
  return 0.0;
}

struct CameraRender {
  geometry::DepthMap depth;
  Image image;
};

CameraRender render_camera(const Scene& scene, const geometry::CameraModel& cam, bool gated,
                           double depth_noise, double appearance_noise, double max_depth,
                           Rng& rng) {
  CameraRender out{geometry::DepthMap(cam.width, cam.height),
                   Image(cam.width, cam.height, gated ? kGatedChannels : kRgbChannels)};
  const Eigen::Vector3d origin = cam.cam_to_lidar.translation();
  const Eigen::Matrix3d rot = cam.cam_to_lidar.linear();
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      // Camera-frame ray with unit z, so the ray parameter equals z-depth.
      const Eigen::Vector3d dc((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
      const Eigen::Vector3d d = rot * dc;
      const Hit hit = cast(origin, d, scene, max_depth);
      const bool has_depth = hit.surface != Surface::kNone;
      const double noise_d = normal(rng, 1.0);
      if (has_depth) {
        const double noisy = hit.t * (1.0 + depth_noise * noise_d);
        if (noisy > 0.0 && std::isfinite(noisy)) out.depth.set(u, v, noisy);
      }
      if (gated) {
        const double rho = gated_reflectivity(hit.surface);
        for (int c = 0; c < kGatedChannels; ++c) {
          double signal = 0.0;
          if (has_depth) {
            const double x = (hit.t - kGateCenter[c]) / kGateWidth[c];
            signal = rho * std::exp(-0.5 * x * x);
          }
          out.image.at(u, v, c) = signal + normal(rng, appearance_noise);
        }
      } else {
        const auto col = rgb_color(hit.surface, hit.rel_height);
        for (int c = 0; c < kRgbChannels; ++c)
          out.image.at(u, v, c) = col[c] + normal(rng, appearance_noise);
      }
    }
  return out;
}

void enforce_radar_sparsity(SensorFrame& f, double max_fraction) {
  const auto cap = static_cast<std::size_t>(std::floor(max_fraction * f.lidar.size()));
  if (f.radar.size() <= cap) return;
  // Clutter is dropped first; object returns only if the cap demands it.
  f.radar.points.resize(cap);
  f.radar_object_returns = std::min(f.radar_object_returns, cap);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string Condition::to_string() const {
  std::ostringstream os;
  switch (kind) {
    case Weather::kClearDay: return "clear_day";
    case Weather::kNight: return "night";
    case Weather::kFog: os << "fog@"; break;
    case Weather::kSnow: os << "snow@"; break;
  }
  os << std::setprecision(6) << value;
  return os.str();
}

Condition Condition::parse(const std::string& text) {
  if (text == "clear_day") return {Weather::kClearDay, 0.0};
  if (text == "night") return {Weather::kNight, 0.0};
  const auto at = text.find('@');
  if (at == std::string::npos) throw ValidationError("condition", "unknown condition '" + text + "'");
  const std::string kind = text.substr(0, at);
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(text.substr(at + 1), &used);
    if (used != text.size() - at - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ValidationError("condition", "bad severity in '" + text + "'");
  }
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ValidationError("condition", "severity must be finite and >= 0 in '" + text + "'");
  }
  if (kind == "fog") return {Weather::kFog, v};
  if (kind == "snow") return {Weather::kSnow, v};
  throw ValidationError("condition", "unknown condition '" + text + "'");
}

bool SensorFrame::operator==(const SensorFrame& o) const {
  auto same_cloud = [](const geometry::PointCloud& a, const geometry::PointCloud& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& p = a.points[i];
      const auto& q = b.points[i];
      if (p.x != q.x || p.y != q.y || p.z != q.z || p.intensity != q.intensity ||
          p.velocity != q.velocity)
        return false;
    }
    return true;
  };
  auto same_depth = [](const geometry::DepthMap& a, const geometry::DepthMap& b) {
    return a.width == b.width && a.height == b.height && a.values == b.values && a.valid == b.valid;
  };
  auto same_image = [](const Image& a, const Image& b) {
    return a.width == b.width && a.height == b.height && a.channels == b.channels &&
           a.data == b.data;
  };
  return seed == o.seed && condition == o.condition && same_depth(rgb_depth, o.rgb_depth) &&
         same_depth(gated_depth, o.gated_depth) && same_image(rgb, o.rgb) &&
         same_image(gated, o.gated) && same_cloud(lidar, o.lidar) && same_cloud(radar, o.radar) &&
         rgb_depth_sigma == o.rgb_depth_sigma && gated_depth_sigma == o.gated_depth_sigma &&
         rgb_signal_gain == o.rgb_signal_gain && radar_object_returns == o.radar_object_returns;
}

RigConfig RigConfig::desk() {
  RigConfig rig;
  geometry::CameraModel cam;
  cam.width = 128;
  cam.height = 48;
  cam.fx = 64.0;
  cam.fy = 64.0;
  cam.cx = 63.5;
  cam.cy = 19.5;
  cam.cam_to_lidar = Eigen::Isometry3d::Identity();
  cam.cam_to_lidar.translation() = Eigen::Vector3d(0.0, -1.5, 0.0);
  rig.rgb = cam;
  rig.gated = cam;
  rig.gated.cam_to_lidar.translation() = Eigen::Vector3d(0.2, -1.4, 0.0);
  return rig;
}

RigConfig RigConfig::toy() {
  RigConfig rig;
  geometry::CameraModel cam;
  cam.width = 16;
  cam.height = 8;
  cam.fx = 8.0;
  cam.fy = 8.0;
  cam.cx = 7.5;
  cam.cy = 2.5;
  cam.cam_to_lidar = Eigen::Isometry3d::Identity();
  cam.cam_to_lidar.translation() = Eigen::Vector3d(0.0, -1.5, -1.0);
  rig.rgb = cam;
  rig.gated = cam;
  rig.gated.cam_to_lidar.translation() = Eigen::Vector3d(0.1, -1.4, -1.0);
  rig.lidar.azimuth_fov_deg = 100.0;
  rig.lidar.azimuth_step_deg = 2.0;
  rig.lidar.beams = 10;
  rig.lidar.elevation_min_deg = -40.0;
  rig.lidar.elevation_max_deg = 0.0;
  rig.lidar.max_range = 12.0;
  rig.radar.clutter_mean = 1.0;
  rig.radar.max_fraction_of_lidar = 0.2;
  rig.lidar_grid.x_min = -3.0;
  rig.lidar_grid.x_max = 3.0;
  rig.lidar_grid.z_min = 0.0;
  rig.lidar_grid.z_max = 6.0;
  rig.radar_grid = rig.lidar_grid;
  rig.radar_grid.y_min = -0.2;
  rig.radar_grid.y_max = 0.4;
  rig.max_depth = 12.0;
  return rig;
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed, Condition condition) {
  if (config.cars < 0 || config.pedestrians < 0) {
    throw ContractViolation("generate_scene: class counts must be >= 0");
  }
  if (!(config.x_max > config.x_min) || !(config.z_max > config.z_min) ||
      !(config.max_azimuth_deg > 0.0 && config.max_azimuth_deg < 90.0)) {
    throw ContractViolation("generate_scene: empty placement region");
  }
  Scene scene;
  scene.seed = seed;
  scene.condition = condition;
  Rng rng(derive_seed(seed, kObjects));
  auto place = [&](ObjectClass cls) {
    for (int attempt = 0; attempt < config.retry_budget; ++attempt) {
      Box3D b;
      b.cls = cls;
      if (cls == ObjectClass::kCar) {
        b.w = uniform(rng, 1.7, 1.9);
        b.l = uniform(rng, 4.2, 4.8);
        b.h = uniform(rng, 1.4, 1.7);
      } else {
        b.w = uniform(rng, 0.5, 0.7);
        b.l = uniform(rng, 0.5, 0.7);
        b.h = uniform(rng, 1.6, 1.9);
      }
      b.x = uniform(rng, config.x_min, config.x_max);
      b.z = uniform(rng, config.z_min, config.z_max);
      b.y = -b.h / 2.0;
      const bool in_fov = std::abs(b.x) <= b.z * std::tan(config.max_azimuth_deg * kDeg);
      b.yaw = wrap_yaw(uniform(rng, -std::numbers::pi, std::numbers::pi));
      b.score = 1.0;
      bool ok = in_fov;
      for (const Box3D& o : scene.objects) {
        if (!ok) break;
        if (iou::bev_iou(iou::rect_of(b), iou::rect_of(o)) > config.max_overlap_iou) {
          ok = false;
          break;
        }
      }
      if (ok) {
        scene.objects.push_back(b);
        return;
      }
    }
    throw PlacementError("generate_scene: could not place object within " +
                         std::to_string(config.retry_budget) + " retries");
  };
  for (int i = 0; i < config.cars; ++i) place(ObjectClass::kCar);
  for (int i = 0; i < config.pedestrians; ++i) place(ObjectClass::kPedestrian);
  return scene;
}

bool scene_satisfies_invariants(const Scene& scene, const SceneConfig& config) {
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const Box3D& a = scene.objects[i];
    if (a.x < config.x_min || a.x > config.x_max || a.z < config.z_min || a.z > config.z_max)
      return false;
    if (std::abs(a.x) > a.z * std::tan(config.max_azimuth_deg * kDeg)) return false;
    for (std::size_t j = i + 1; j < scene.objects.size(); ++j) {
      if (iou::bev_iou(iou::rect_of(a), iou::rect_of(scene.objects[j])) > config.max_overlap_iou)
        return false;
    }
  }
  return true;
}

Eigen::Vector3d lidar_origin(const LidarRig& rig) { return {0.0, -rig.mount_height, 0.0}; }

std::vector<Eigen::Vector3d> lidar_ray_directions(const LidarRig& rig) {
  std::vector<Eigen::Vector3d> dirs;
  const int cols = static_cast<int>(std::floor(rig.azimuth_fov_deg / rig.azimuth_step_deg + 1e-9)) + 1;
  const double az0 = -rig.azimuth_fov_deg / 2.0;
  dirs.reserve(static_cast<std::size_t>(cols) * rig.beams);
  for (int b = 0; b < rig.beams; ++b) {
    const double el = rig.beams == 1 ? rig.elevation_min_deg
                                     : rig.elevation_min_deg + (rig.elevation_max_deg - rig.elevation_min_deg) *
                                                                   b / (rig.beams - 1);
    for (int c = 0; c < cols; ++c) {
      const double az = (az0 + c * rig.azimuth_step_deg) * kDeg;
      const double e = el * kDeg;
      // Positive elevation points up, i.e. towards negative y.
      dirs.emplace_back(std::cos(e) * std::sin(az), -std::sin(e), std::cos(e) * std::cos(az));
    }
  }
  return dirs;
}

double fog_survival(double beta, double range) { return std::exp(-2.0 * beta * range); }

SensorFrame render_sensors(const Scene& scene, const RigConfig& rig) {
  SensorFrame f;
  f.seed = scene.seed;
  f.condition = Condition{};
  f.rgb_depth_sigma = rig.rgb_depth_noise;
  f.gated_depth_sigma = rig.gated_depth_noise;
  f.rgb_signal_gain = 1.0;

  {
    Rng rng(derive_seed(scene.seed, kRgb));
    auto r = render_camera(scene, rig.rgb, false, rig.rgb_depth_noise, rig.rgb_appearance_noise,
                           rig.max_depth, rng);
    f.rgb_depth = std::move(r.depth);
    f.rgb = std::move(r.image);
  }
  {
    Rng rng(derive_seed(scene.seed, kGated));
    auto r = render_camera(scene, rig.gated, true, rig.gated_depth_noise,
                           rig.gated_appearance_noise, rig.max_depth, rng);
    f.gated_depth = std::move(r.depth);
    f.gated = std::move(r.image);
  }

  {
    Rng rng(derive_seed(scene.seed, kLidar));
    const Eigen::Vector3d o = lidar_origin(rig.lidar);
    for (const Eigen::Vector3d& d : lidar_ray_directions(rig.lidar)) {
      const Hit hit = cast(o, d, scene, rig.lidar.max_range);
      const double n_range = normal(rng, rig.lidar.range_noise);
      const double n_int = normal(rng, 0.05);
      if (hit.surface == Surface::kNone) continue;
      const Eigen::Vector3d p = o + (hit.t + n_range) * d;
      f.lidar.points.push_back(
          {p.x(), p.y(), p.z(), std::clamp(lidar_reflectivity(hit.surface) + n_int, 0.0, 1.0), 0.0});
    }
  }

  {
    Rng rng(derive_seed(scene.seed, kRadar));
    const RadarRig& rr = rig.radar;
    const Eigen::Vector3d origin(0.0, -rr.mount_height, 0.0);
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      const Box3D& b = scene.objects[i];
      Rng motion(derive_seed(derive_seed(scene.seed, kObjectMotion), i));
      const bool car = b.cls == ObjectClass::kCar;
      const double speed = car ? uniform(motion, 0.0, 10.0) : uniform(motion, 0.5, 2.0);
      const double heading = uniform(motion, -std::numbers::pi, std::numbers::pi);
      const bool detected = car || uniform(rng, 0.0, 1.0) < rr.pedestrian_detect_prob;
      const int n = car ? rr.car_returns : rr.pedestrian_returns;
      if (!detected || std::hypot(b.x, b.z) > rr.max_range) continue;
      const Eigen::Vector2d los = Eigen::Vector2d(b.x, b.z).normalized();
      const double radial = speed * (std::cos(heading) * los.x() + std::sin(heading) * los.y());
      for (int k = 0; k < n; ++k) {
        // Scatter centres spread over the footprint, then measurement noise.
        const double lx = uniform(rng, -0.3, 0.3) * b.w;
        const double lz = uniform(rng, -0.3, 0.3) * b.l;
        const double c = std::cos(b.yaw), s = std::sin(b.yaw);
        geometry::Point p;
        p.x = b.x + c * lx - s * lz + normal(rng, rr.position_noise);
        p.z = b.z + s * lx + c * lz + normal(rng, rr.position_noise);
        p.y = uniform(rng, rr.return_y_min, rr.return_y_max);
        p.intensity = std::max(0.0, (car ? 1.0 : 0.35) + normal(rng, car ? 0.15 : 0.1));
        p.velocity = radial + normal(rng, 0.1);
        f.radar.points.push_back(p);
      }
    }
    (void)origin;
    f.radar_object_returns = f.radar.size();
    const int clutter = std::poisson_distribution<int>(rr.clutter_mean)(rng);
    const auto& g = rig.radar_grid;
    for (int k = 0; k < clutter; ++k) {
      geometry::Point p;
      p.x = uniform(rng, g.x_min, g.effective_x_max());
      p.z = uniform(rng, g.z_min, g.effective_z_max());
      p.y = uniform(rng, rr.return_y_min, rr.return_y_max);
      p.intensity = uniform(rng, 0.0, 1.0);
      p.velocity = normal(rng, 0.3);
      f.radar.points.push_back(p);
    }
    enforce_radar_sparsity(f, rr.max_fraction_of_lidar);
  }
  return f;
}

SensorFrame apply_weather(const SensorFrame& frame, const Condition& condition,
                          const RigConfig& rig) {
  SensorFrame f = frame;
  f.condition = condition;
  Rng rng(derive_seed(derive_seed(frame.seed, kWeather),
                      static_cast<std::uint64_t>(condition.kind)));
  switch (condition.kind) {
    case Weather::kClearDay:
      break;
    case Weather::kNight: {
      // Signal x0.25 while keeping the noise level: SNR drops by 4.
      constexpr double kGain = 0.25;
      const double sigma = rig.rgb_appearance_noise;
      const double extra = sigma * std::sqrt(1.0 - kGain * kGain);
      for (double& v : f.rgb.data) v = kGain * v + normal(rng, extra);
      f.rgb_signal_gain *= kGain;
      break;
    }
    case Weather::kFog: {
      const double beta = condition.value;
      const Eigen::Vector3d o = lidar_origin(rig.lidar);
      geometry::PointCloud kept;
      kept.points.reserve(f.lidar.size());
      // One uniform per point: survival is pathwise monotone in beta.
      for (const geometry::Point& p : f.lidar.points) {
        const double r = (Eigen::Vector3d(p.x, p.y, p.z) - o).norm();
        const double u = uniform(rng, 0.0, 1.0);
        if (u < fog_survival(beta, r)) kept.points.push_back(p);
      }
      constexpr double kBackscatterRate = 3000.0;  // points per unit beta
      constexpr double kBackscatterRange = 15.0;
      const int n = beta > 0 ? std::poisson_distribution<int>(kBackscatterRate * beta)(rng) : 0;
      const auto& lr = rig.lidar;
      for (int k = 0; k < n; ++k) {
        const double r = uniform(rng, 1.0, kBackscatterRange);
        const double az = uniform(rng, -lr.azimuth_fov_deg / 2, lr.azimuth_fov_deg / 2) * kDeg;
        const double el = uniform(rng, lr.elevation_min_deg, lr.elevation_max_deg) * kDeg;
        const Eigen::Vector3d d(std::cos(el) * std::sin(az), -std::sin(el),
                                std::cos(el) * std::cos(az));
        const Eigen::Vector3d p = o + r * d;
        kept.points.push_back({p.x(), p.y(), p.z(), uniform(rng, 0.0, 0.1), 0.0});
      }
      f.lidar = std::move(kept);
      // Total RGB depth noise doubles: add independent noise with sqrt(3) sigma.
      const double extra = std::sqrt(3.0) * f.rgb_depth_sigma;
      for (std::size_t i = 0; i < f.rgb_depth.values.size(); ++i) {
        const double n_i = normal(rng, 1.0);
        if (!f.rgb_depth.valid[i]) continue;
        const double d = f.rgb_depth.values[i] * (1.0 + extra * n_i);
        if (d > 0.0) {
          f.rgb_depth.values[i] = d;
        } else {
          f.rgb_depth.values[i] = 0.0;
          f.rgb_depth.valid[i] = 0;
        }
      }
      f.rgb_depth_sigma *= 2.0;
      break;
    }
    case Weather::kSnow: {
      const double lambda = condition.value;
      auto add_clutter = [&](geometry::PointCloud& pc, const geometry::BEVGridSpec& g,
                             double intensity_max) {
        const double volume = (g.effective_x_max() - g.x_min) * (g.effective_z_max() - g.z_min) *
                              (g.y_max - g.y_min);
        const int n = lambda > 0 ? std::poisson_distribution<int>(lambda * volume)(rng) : 0;
        for (int k = 0; k < n; ++k) {
          pc.points.push_back({uniform(rng, g.x_min, g.effective_x_max()),
                               uniform(rng, g.y_min, g.y_max),
                               uniform(rng, g.z_min, g.effective_z_max()),
                               uniform(rng, 0.0, intensity_max), normal(rng, 0.5)});
        }
      };
      add_clutter(f.lidar, rig.lidar_grid, 0.3);
      add_clutter(f.radar, rig.radar_grid, 0.5);
      break;
    }
  }
  enforce_radar_sparsity(f, rig.radar.max_fraction_of_lidar);
  return f;
}

SensorFrame simulate(const Scene& scene, const RigConfig& rig) {
  return apply_weather(render_sensors(scene, rig), scene.condition, rig);
}

}  // namespace sensorfuse::simkit
