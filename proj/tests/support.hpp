#pragma once

// Independent reference implementations and fixtures shared by the tests
// and the acceptance binary. Nothing here calls the code it checks.

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "sensorfuse/autodiff.hpp"
#include "sensorfuse/box.hpp"
#include "sensorfuse/feature_map.hpp"
#include "sensorfuse/geometry.hpp"
#include "sensorfuse/hungarian.hpp"

namespace support {

using sensorfuse::Box3D;
using sensorfuse::FeatureMap;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline sensorfuse::geometry::CameraModel random_camera(std::mt19937_64& rng) {
  sensorfuse::geometry::CameraModel cam;
  cam.width = 64 + static_cast<int>(uniform(rng, 0, 1000));
  cam.height = 48 + static_cast<int>(uniform(rng, 0, 700));
  cam.fx = uniform(rng, 50.0, 2000.0);
  cam.fy = uniform(rng, 50.0, 2000.0);
  cam.cx = uniform(rng, 0.0, cam.width);
  cam.cy = uniform(rng, 0.0, cam.height);
  cam.cam_to_lidar = Eigen::Isometry3d::Identity();
  cam.cam_to_lidar.linear() = random_rotation(rng);
  cam.cam_to_lidar.translation() = Eigen::Vector3d(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2));
  return cam;
}

inline FeatureMap random_map(std::mt19937_64& rng, sensorfuse::Plane plane, int rows, int cols, int d,
                             double mask_prob = 0.0) {
  FeatureMap m(plane, rows, cols, d);
  for (double& x : m.data) x = uniform(rng, -1.0, 1.0);
  for (auto& v : m.mask) v = uniform(rng, 0.0, 1.0) < mask_prob ? 0 : 1;
  return m;
}

inline std::vector<double> random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::vector<double> m(static_cast<std::size_t>(rows) * cols);
  for (double& x : m) x = uniform(rng, -scale, scale);
  return m;
}

/// y = x W^T for row-major x [n, k] and W [m, k].
inline std::vector<double> project(const std::vector<double>& x, int n, int k, const std::vector<double>& w,
                                   int m) {
  std::vector<double> y(static_cast<std::size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      for (int t = 0; t < k; ++t) y[i * m + j] += x[i * k + t] * w[j * k + t];
  return y;
}

/// Brute-force windowed attention: for every query cell, softmax over the
/// unmasked context cells of its k x k window of (Wq q . Wk c) / sqrt(d),
/// weighted sum of Wv c. Masked queries and empty windows copy the query.
/// A non-empty `extra` (one value per cell) is appended to the query before
/// the Q projection, so `wq` is then d x (d + 1).
inline FeatureMap naive_window_attention(const FeatureMap& query, const FeatureMap& source,
                                         const std::vector<double>& wq, const std::vector<double>& wk,
                                         const std::vector<double>& wv, int k,
                                         const std::vector<double>& extra = {}) {
  const int d = query.channels;
  const int n = query.cells();
  std::vector<double> qin = query.data;
  int qw = d;
  if (!extra.empty()) {
    qw = d + 1;
    qin.clear();
    for (int i = 0; i < n; ++i) {
      qin.insert(qin.end(), query.data.begin() + i * d, query.data.begin() + (i + 1) * d);
      qin.push_back(extra[i]);
    }
  }
  const auto q = project(qin, n, qw, wq, d);
  const auto kk = project(source.data, n, d, wk, d);
  const auto v = project(source.data, n, d, wv, d);
  FeatureMap out = query;
  const int r = k / 2;
  for (int i = 0; i < query.rows; ++i) {
    for (int j = 0; j < query.cols; ++j) {
      const int cell = i * query.cols + j;
      if (!query.mask[cell]) continue;
      std::vector<int> ctx;
      std::vector<double> logit;
      for (int a = i - r; a <= i + r; ++a) {
        for (int b = j - r; b <= j + r; ++b) {
          if (a < 0 || b < 0 || a >= query.rows || b >= query.cols) continue;
          const int c = a * query.cols + b;
          if (!source.mask[c]) continue;
          double s = 0.0;
          for (int t = 0; t < d; ++t) s += q[cell * d + t] * kk[c * d + t];
          ctx.push_back(c);
          logit.push_back(s / std::sqrt(static_cast<double>(d)));
        }
      }
      if (ctx.empty()) continue;
      const double mx = *std::max_element(logit.begin(), logit.end());
      double z = 0.0;
      for (double& l : logit) z += (l = std::exp(l - mx));
      for (int t = 0; t < d; ++t) {
        double acc = 0.0;
        for (std::size_t s = 0; s < ctx.size(); ++s) acc += logit[s] / z * v[ctx[s] * d + t];
        out.data[cell * d + t] = acc;
      }
    }
  }
  return out;
}

/// Minimum assignment cost by enumerating every injective mapping of the
/// smaller side into the larger.
inline double brute_force_assignment(const sensorfuse::CostMatrix& m) {
  const bool transpose = m.rows > m.cols;
  const int small = transpose ? m.cols : m.rows;
  const int large = transpose ? m.rows : m.cols;
  std::vector<int> perm(large);
  for (int i = 0; i < large; ++i) perm[i] = i;
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < small; ++i) c += transpose ? m.at(perm[i], i) : m.at(i, perm[i]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// BEV IoU by point sampling on an n x n grid over the joint bounding box.
inline double raster_bev_iou(const Box3D& a, const Box3D& b, int n = 400) {
  const auto inside = [](const Box3D& box, double x, double z) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const double dx = x - box.x, dz = z - box.z;
    const double lx = c * dx + s * dz;
    const double lz = -s * dx + c * dz;
    return std::abs(lx) <= box.w / 2 && std::abs(lz) <= box.l / 2;
  };
  const double ra = 0.5 * std::hypot(a.w, a.l), rb = 0.5 * std::hypot(b.w, b.l);
  const double x0 = std::min(a.x - ra, b.x - rb), x1 = std::max(a.x + ra, b.x + rb);
  const double z0 = std::min(a.z - ra, b.z - rb), z1 = std::max(a.z + ra, b.z + rb);
  long inter = 0, uni = 0;
  for (int i = 0; i < n; ++i) {
    const double x = x0 + (i + 0.5) * (x1 - x0) / n;
    for (int j = 0; j < n; ++j) {
      const double z = z0 + (j + 0.5) * (z1 - z0) / n;
      const bool ia = inside(a, x, z), ib = inside(b, x, z);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

/// AP by explicit PR construction: the precision/recall point after every
/// prediction prefix, then for each recall level the best precision among
/// all points reaching it.
inline double brute_force_ap(const std::vector<bool>& hits, std::size_t labels, int positions) {
  std::vector<std::pair<double, double>> pr;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    tp += hits[i];
    pr.emplace_back(static_cast<double>(tp) / labels, static_cast<double>(tp) / (i + 1));
  }
  double sum = 0.0;
  for (int k = 1; k <= positions; ++k) {
    const double r = static_cast<double>(k) / positions;
    double best = 0.0;
    for (const auto& [rec, prec] : pr)
      if (rec >= r - 1e-12) best = std::max(best, prec);
    sum += best;
  }
  return sum / positions;
}

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;
  std::vector<std::string> failures;
};

/// Central finite differences (step h) against analytic gradients for a
/// random `fraction` of parameter entries plus the first entry of every
/// tensor. The relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult gradient_check(sensorfuse::ad::ParamRegistry& reg,
                                      const std::function<double()>& loss,
                                      const sensorfuse::ad::Gradients& analytic, double fraction,
                                      std::uint64_t seed, double h = 1e-5, double tol = 1e-4,
                                      double floor = 1e-6) {
  std::mt19937_64 rng(seed);
  GradCheckResult r;
  for (auto& p : reg) {
    auto& val = p->value();
    for (std::size_t j = 0; j < val.size(); ++j) {
      if (!(uniform(rng, 0.0, 1.0) < fraction || j == 0)) continue;
      const double saved = val[j];
      val[j] = saved + h;
      const double lp = loss();
      val[j] = saved - h;
      const double lm = loss();
      val[j] = saved;
      const double num = (lp - lm) / (2 * h);
      const double ana = analytic[p->index()][j];
      const double err = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      ++r.checked;
      r.worst = std::max(r.worst, err);
      if (err > tol) {
        ++r.failed;
        r.failures.push_back(p->name() + "[" + std::to_string(j) + "] analytic=" + std::to_string(ana) +
                             " numeric=" + std::to_string(num));
      }
    }
  }
  return r;
}

}  // namespace support
