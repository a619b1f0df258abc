#pragma once

// Frames: the LiDAR/ego frame has x to the right, y pointing down and z
// forward, with the origin on the ground plane (y = 0) below the sensors.
// Camera frames use the same axis convention. The BEV plane is (x, z).

#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "sensorfuse/feature_map.hpp"

namespace sensorfuse::geometry {

/// Pinhole camera; `cam_to_lidar` maps camera-frame points to the LiDAR frame.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Eigen::Isometry3d cam_to_lidar = Eigen::Isometry3d::Identity();

  /// Throws ContractViolation on non-positive focal lengths, empty image or
  /// a rotation that is not orthonormal with det +1 (tolerance 1e-9).
  void validate() const;

  /// Same camera seen through an image downsampled by `factor`: feature
  /// pixel u' corresponds to raw pixel u = factor * u' + factor / 2.
  CameraModel downsampled(int factor) const;
};

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  double at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
  bool is_valid(int u, int v) const { return valid[static_cast<std::size_t>(v) * width + u] != 0; }
  void set(int u, int v, double d) {
    const std::size_t i = static_cast<std::size_t>(v) * width + u;
    values[i] = d;
    valid[i] = 1;
  }
  std::size_t valid_count() const;
  /// Sampled at feature resolution using the downsampled() pixel convention.
  DepthMap downsampled(int factor) const;
};

/// A 3D point in the LiDAR frame with one reflectance-like attribute
/// (LiDAR intensity or radar cross-section proxy) and a radial-velocity proxy.
struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
  double velocity = 0.0;
};

struct PointCloud {
  std::vector<Point> points;
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// BEV voxel grid. Extents are half-open [min, max). The number of cells
/// along each axis is floor(range / cell); the effective extent is
/// cells * cell starting at the minimum, so the cell size is kept exact.
struct BEVGridSpec {
  double x_min = -40.0;
  double x_max = 40.0;
  double z_min = 0.0;
  double z_max = 100.0;
  double y_min = -3.0;
  double y_max = 1.0;
  double cell_x = 0.075;
  double cell_z = 0.075;
  double cell_y = 0.2;

  int nx() const;
  int nz() const;
  int cells() const { return nx() * nz(); }
  double effective_x_max() const { return x_min + nx() * cell_x; }
  double effective_z_max() const { return z_min + nz() * cell_z; }
  double cell_center_x(int ix) const { return x_min + (ix + 0.5) * cell_x; }
  double cell_center_z(int iz) const { return z_min + (iz + 0.5) * cell_z; }
  int cell_index(int ix, int iz) const { return iz * nx() + ix; }
  bool contains_bev(double x, double z) const;

  /// Throws ContractViolation when a dimension is not a positive integer.
  void validate() const;
  /// Same x/z layout (so maps on both specs can be combined).
  bool same_layout(const BEVGridSpec& o) const;

  static BEVGridSpec full_lidar();
  static BEVGridSpec full_radar();
  /// Coarse grid for fast experiments: 1 m cells, x in [-20,20), z in [0,80).
  static BEVGridSpec desk_lidar();
  static BEVGridSpec desk_radar();
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool in_frustum = false;
};

/// Lifts every valid depth pixel to the LiDAR frame (row-major pixel order).
PointCloud lift_pixels(const CameraModel& cam, const DepthMap& depth);
/// Lifts a single pixel (camera-frame pinhole back-projection, then extrinsic).
Eigen::Vector3d lift_pixel(const CameraModel& cam, double u, double v, double depth);

std::vector<Projection> project_points(const CameraModel& cam, const PointCloud& pts);
Projection project_point(const CameraModel& cam, const Eigen::Vector3d& p_lidar);

/// Bilinear support of a BEV query: up to four (cell index, weight) pairs.
/// Queries outside the grid clamp to the border cells.
std::vector<std::pair<int, double>> bev_bilinear_weights(const BEVGridSpec& spec, double x,
                                                         double z);
/// Bilinear support of a continuous image coordinate, clamped to the image.
std::vector<std::pair<int, double>> image_bilinear_weights(int width, int height, double u,
                                                           double v);

std::vector<double> bev_sample(const FeatureMap& map, const BEVGridSpec& spec, double x,
                               double z);

struct CellAssignment {
  int cell = 0;
  int point = 0;
};

/// Assigns each point inside the x/z extent and y range to its BEV cell.
/// Points are visited in input order, so the output is deterministic.
std::vector<CellAssignment> squash_to_bev(const PointCloud& pts, const BEVGridSpec& spec);

}  // namespace sensorfuse::geometry
