#include "sensorfuse/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "sensorfuse/errors.hpp"

namespace sensorfuse::geometry {

namespace {

// Slack for floor(range / cell) so that exact multiples survive rounding
// (0.6 / 0.2 evaluates to 2.9999999999999996).
constexpr double kFloorSlack = 1e-9;

int grid_count(double range, double cell) {
  return static_cast<int>(std::floor(range / cell + kFloorSlack));
}

}  // namespace

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ContractViolation("camera focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw ContractViolation("camera image size must be positive");
  const Eigen::Matrix3d r = cam_to_lidar.linear();
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) throw ContractViolation("camera rotation is not orthonormal");
  if (std::abs(r.determinant() - 1.0) > 1e-9) {
    throw ContractViolation("camera rotation determinant is not +1");
  }
}

CameraModel CameraModel::downsampled(int factor) const {
  if (factor <= 0) throw ContractViolation("downsample factor must be positive");
  CameraModel c = *this;
  const double half = 0.5 * factor;
  c.fx = fx / factor;
  c.fy = fy / factor;
  c.cx = (cx - half) / factor;
  c.cy = (cy - half) / factor;
  c.width = width / factor;
  c.height = height / factor;
  return c;
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

DepthMap DepthMap::downsampled(int factor) const {
  DepthMap out(width / factor, height / factor);
  for (int v = 0; v < out.height; ++v)
    for (int u = 0; u < out.width; ++u) {
      const int ru = factor * u + factor / 2;
      const int rv = factor * v + factor / 2;
      if (ru < width && rv < height && is_valid(ru, rv)) out.set(u, v, at(ru, rv));
    }
  return out;
}

int BEVGridSpec::nx() const { return grid_count(x_max - x_min, cell_x); }
int BEVGridSpec::nz() const { return grid_count(z_max - z_min, cell_z); }

bool BEVGridSpec::contains_bev(double x, double z) const {
  return x >= x_min && x < effective_x_max() && z >= z_min && z < effective_z_max();
}

void BEVGridSpec::validate() const {
  if (!(cell_x > 0) || !(cell_z > 0) || !(cell_y > 0)) {
    throw ContractViolation("BEV cell sizes must be positive");
  }
  if (nx() < 1 || nz() < 1) throw ContractViolation("BEV grid has no cells");
  if (!(y_max > y_min)) throw ContractViolation("BEV height range is empty");
}

bool BEVGridSpec::same_layout(const BEVGridSpec& o) const {
  return x_min == o.x_min && z_min == o.z_min && cell_x == o.cell_x && cell_z == o.cell_z &&
         nx() == o.nx() && nz() == o.nz();
}

BEVGridSpec BEVGridSpec::full_lidar() { return BEVGridSpec{}; }

BEVGridSpec BEVGridSpec::full_radar() {
  BEVGridSpec s;
  s.y_min = -0.2;
  s.y_max = 0.4;
  return s;
}

BEVGridSpec BEVGridSpec::desk_lidar() {
  BEVGridSpec s;
  s.x_min = -20.0;
  s.x_max = 20.0;
  s.z_min = 0.0;
  s.z_max = 80.0;
  s.cell_x = 1.0;
  s.cell_z = 1.0;
  return s;
}

BEVGridSpec BEVGridSpec::desk_radar() {
  BEVGridSpec s = desk_lidar();
  s.y_min = -0.2;
  s.y_max = 0.4;
  return s;
}

Eigen::Vector3d lift_pixel(const CameraModel& cam, double u, double v, double depth) {
  const double z = depth;
  const double x = (u - cam.cx) * z / cam.fx;
  const double y = (v - cam.cy) * z / cam.fy;
  return cam.cam_to_lidar * Eigen::Vector3d(x, y, z);
}

PointCloud lift_pixels(const CameraModel& cam, const DepthMap& depth) {
  if (depth.width != cam.width || depth.height != cam.height) {
    throw ShapeError("lift_pixels: depth map is " + std::to_string(depth.width) + "x" +
                     std::to_string(depth.height) + ", camera is " + std::to_string(cam.width) +
                     "x" + std::to_string(cam.height));
  }
  PointCloud out;
  out.points.reserve(depth.valid_count());
  for (int v = 0; v < depth.height; ++v)
    for (int u = 0; u < depth.width; ++u) {
      if (!depth.is_valid(u, v)) continue;
      const Eigen::Vector3d p = lift_pixel(cam, u, v, depth.at(u, v));
      out.points.push_back({p.x(), p.y(), p.z(), 0.0, 0.0});
    }
  return out;
}

Projection project_point(const CameraModel& cam, const Eigen::Vector3d& p_lidar) {
  const Eigen::Vector3d pc = cam.cam_to_lidar.inverse() * p_lidar;
  Projection pr;
  pr.depth = pc.z();
  if (pc.z() <= 0.0) return pr;
  pr.u = cam.fx * pc.x() / pc.z() + cam.cx;
  pr.v = cam.fy * pc.y() / pc.z() + cam.cy;
  pr.in_frustum = pr.u >= 0.0 && pr.u < cam.width && pr.v >= 0.0 && pr.v < cam.height;
  return pr;
}

std::vector<Projection> project_points(const CameraModel& cam, const PointCloud& pts) {
  std::vector<Projection> out;
  out.reserve(pts.size());
  const Eigen::Isometry3d to_cam = cam.cam_to_lidar.inverse();
  for (const Point& p : pts.points) {
    const Eigen::Vector3d pc = to_cam * Eigen::Vector3d(p.x, p.y, p.z);
    Projection pr;
    pr.depth = pc.z();
    if (pc.z() > 0.0) {
      pr.u = cam.fx * pc.x() / pc.z() + cam.cx;
      pr.v = cam.fy * pc.y() / pc.z() + cam.cy;
      pr.in_frustum = pr.u >= 0.0 && pr.u < cam.width && pr.v >= 0.0 && pr.v < cam.height;
    }
    out.push_back(pr);
  }
  return out;
}

namespace {

// Bilinear corners along one axis of `n` samples at integer positions.
void axis_support(double g, int n, int& i0, int& i1, double& t) {
  g = std::clamp(g, 0.0, static_cast<double>(n - 1));
  i0 = static_cast<int>(std::floor(g));
  if (i0 >= n - 1) {
    i0 = n - 1;
    i1 = n - 1;
    t = 0.0;
    return;
  }
  i1 = i0 + 1;
  t = g - i0;
}

std::vector<std::pair<int, double>> bilinear(int nx, int nz, double gx, double gz) {
  int x0, x1, z0, z1;
  double tx, tz;
  axis_support(gx, nx, x0, x1, tx);
  axis_support(gz, nz, z0, z1, tz);
  std::vector<std::pair<int, double>> w;
  w.reserve(4);
  auto push = [&](int ix, int iz, double weight) {
    if (weight == 0.0) return;
    const int cell = iz * nx + ix;
    for (auto& e : w)
      if (e.first == cell) {
        e.second += weight;
        return;
      }
    w.emplace_back(cell, weight);
  };
  push(x0, z0, (1 - tx) * (1 - tz));
  push(x1, z0, tx * (1 - tz));
  push(x0, z1, (1 - tx) * tz);
  push(x1, z1, tx * tz);
  return w;
}

}  // namespace

std::vector<std::pair<int, double>> bev_bilinear_weights(const BEVGridSpec& spec, double x,
                                                         double z) {
  const double gx = (x - spec.x_min) / spec.cell_x - 0.5;
  const double gz = (z - spec.z_min) / spec.cell_z - 0.5;
  return bilinear(spec.nx(), spec.nz(), gx, gz);
}

std::vector<std::pair<int, double>> image_bilinear_weights(int width, int height, double u,
                                                           double v) {
  return bilinear(width, height, u, v);
}

std::vector<double> bev_sample(const FeatureMap& map, const BEVGridSpec& spec, double x,
                               double z) {
  if (map.plane != Plane::kBev || map.rows != spec.nz() || map.cols != spec.nx()) {
    throw ShapeError("bev_sample: map does not match grid spec");
  }
  std::vector<double> out(map.channels, 0.0);
  for (const auto& [cell, w] : bev_bilinear_weights(spec, x, z)) {
    auto f = map.at(cell);
    for (int c = 0; c < map.channels; ++c) out[c] += w * f[c];
  }
  return out;
}

std::vector<CellAssignment> squash_to_bev(const PointCloud& pts, const BEVGridSpec& spec) {
  std::vector<CellAssignment> out;
  const int nx = spec.nx(), nz = spec.nz();
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    const Point& p = pts.points[i];
    if (!(p.y >= spec.y_min && p.y < spec.y_max)) continue;
    if (!spec.contains_bev(p.x, p.z)) continue;
    const int ix = std::min(static_cast<int>(std::floor((p.x - spec.x_min) / spec.cell_x)), nx - 1);
    const int iz = std::min(static_cast<int>(std::floor((p.z - spec.z_min) / spec.cell_z)), nz - 1);
    out.push_back({iz * nx + ix, i});
  }
  return out;
}

}  // namespace sensorfuse::geometry
