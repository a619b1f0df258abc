#pragma once

// Deterministic synthetic scenes and four-sensor rendering (RGB camera,
// gated NIR camera, LiDAR, radar) with parametric weather degradation.
//
// Every random draw is taken from a stream derived from the scene seed with
// derive_seed(), so results do not depend on generation order or threads.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sensorfuse/box.hpp"
#include "sensorfuse/geometry.hpp"

namespace sensorfuse::simkit {

/// splitmix64 finaliser over (seed, stream): independent, reproducible
/// per-purpose RNG streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

enum class Weather { kClearDay, kNight, kFog, kSnow };

struct Condition {
  Weather kind = Weather::kClearDay;
  /// Fog: extinction beta [1/m]. Snow: clutter rate lambda [1/m^3].
  double value = 0.0;

  /// "clear_day", "night", "fog@0.05", "snow@0.01".
  std::string to_string() const;
  static Condition parse(const std::string& text);
  bool operator==(const Condition&) const = default;
};

struct SceneConfig {
  int cars = 3;
  int pedestrians = 3;
  /// Object centers are drawn inside this BEV region.
  double x_min = -18.0;
  double x_max = 18.0;
  double z_min = 5.0;
  double z_max = 78.0;
  /// Centers also satisfy |x| <= z * tan(max_azimuth_deg), keeping objects
  /// inside the sensors' horizontal field of view.
  double max_azimuth_deg = 40.0;
  double max_overlap_iou = 0.1;
  int retry_budget = 2000;
};

struct Scene {
  std::vector<Box3D> objects;
  std::uint64_t seed = 0;
  Condition condition;
};

/// Row-major H x W x C float image.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0) {}
  double& at(int u, int v, int c) {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
  double at(int u, int v, int c) const {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
};

struct LidarRig {
  double mount_height = 1.8;
  double azimuth_fov_deg = 90.0;
  double azimuth_step_deg = 0.25;
  int beams = 24;
  double elevation_min_deg = -12.0;
  double elevation_max_deg = 3.0;
  double max_range = 100.0;
  double range_noise = 0.02;
};

struct RadarRig {
  double mount_height = 0.5;
  int car_returns = 4;
  int pedestrian_returns = 2;
  double position_noise = 0.15;
  double pedestrian_detect_prob = 0.5;
  double clutter_mean = 10.0;
  double max_range = 100.0;
  /// Returns are placed in this height band (y down).
  double return_y_min = -0.15;
  double return_y_max = 0.3;
  /// Radar point count may not exceed this fraction of the LiDAR count.
  double max_fraction_of_lidar = 0.05;
};

struct RigConfig {
  geometry::CameraModel rgb;
  geometry::CameraModel gated;
  int feature_downsample = 4;
  LidarRig lidar;
  RadarRig radar;
  geometry::BEVGridSpec lidar_grid = geometry::BEVGridSpec::desk_lidar();
  geometry::BEVGridSpec radar_grid = geometry::BEVGridSpec::desk_radar();
  double max_depth = 100.0;
  /// Relative (fraction of depth) Gaussian depth noise.
  double rgb_depth_noise = 0.04;
  double gated_depth_noise = 0.03;
  double rgb_appearance_noise = 0.05;
  double gated_appearance_noise = 0.03;

  /// 128x48 cameras (90 deg horizontal field of view) on the desk BEV grid.
  static RigConfig desk();
  /// Miniature rig matching a 6 m x 6 m BEV grid, for gradient checks.
  static RigConfig toy();
};

inline constexpr int kRgbChannels = 3;
inline constexpr int kGatedChannels = 3;

struct SensorFrame {
  std::uint64_t seed = 0;
  Condition condition;
  geometry::DepthMap rgb_depth;
  geometry::DepthMap gated_depth;
  Image rgb;
  Image gated;
  geometry::PointCloud lidar;
  geometry::PointCloud radar;
  /// Current noise levels (relative depth sigma, appearance signal gain).
  double rgb_depth_sigma = 0.0;
  double gated_depth_sigma = 0.0;
  double rgb_signal_gain = 1.0;
  /// Number of leading radar points that are object returns (rest clutter).
  std::size_t radar_object_returns = 0;

  bool operator==(const SensorFrame& o) const;
};

Scene generate_scene(const SceneConfig& config, std::uint64_t seed,
                     Condition condition = {});

/// Checks ROI containment and the pairwise BEV overlap bound.
bool scene_satisfies_invariants(const Scene& scene, const SceneConfig& config);

/// Clear-weather rendering of all four sensors.
SensorFrame render_sensors(const Scene& scene, const RigConfig& rig);

/// Applies `condition` on top of a clear frame (degradations compose).
SensorFrame apply_weather(const SensorFrame& frame, const Condition& condition,
                          const RigConfig& rig);

/// render_sensors followed by apply_weather(scene.condition).
SensorFrame simulate(const Scene& scene, const RigConfig& rig);

/// LiDAR ray directions (LiDAR frame, unit length) in emission order.
std::vector<Eigen::Vector3d> lidar_ray_directions(const LidarRig& rig);
Eigen::Vector3d lidar_origin(const LidarRig& rig);

/// Two-way Beer-Lambert survival probability of a return at range r.
double fog_survival(double beta, double range);

}  // namespace sensorfuse::simkit
