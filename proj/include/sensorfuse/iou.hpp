#pragma once

// Rotated-rectangle overlap via Sutherland-Hodgman clipping. Templated on
// the scalar so the same code path runs on doubles and on dual numbers.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "sensorfuse/box.hpp"
#include "sensorfuse/dual.hpp"

namespace sensorfuse::iou {

template <class T>
struct Vec2 {
  T x{}, z{};
};

template <class T>
struct BevRect {
  T x, z, w, l, yaw;
};

/// Corners in counter-clockwise order in the (x, z) plane.
template <class T>
std::array<Vec2<T>, 4> corners(const BevRect<T>& r) {
  using std::cos;
  using std::sin;
  const T c = cos(r.yaw);
  const T s = sin(r.yaw);
  const T hw = r.w * 0.5;
  const T hl = r.l * 0.5;
  const std::array<std::array<double, 2>, 4> signs{{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
  std::array<Vec2<T>, 4> out;
  for (int i = 0; i < 4; ++i) {
    const T lx = hw * signs[i][0];
    const T lz = hl * signs[i][1];
    out[i].x = r.x + c * lx - s * lz;
    out[i].z = r.z + s * lx + c * lz;
  }
  return out;
}

template <class T>
T cross(const Vec2<T>& o, const Vec2<T>& a, const Vec2<T>& b) {
  return (a.x - o.x) * (b.z - o.z) - (a.z - o.z) * (b.x - o.x);
}

template <class T>
T polygon_area(const std::vector<Vec2<T>>& poly) {
  if (poly.size() < 3) return T(0.0);
  T a(0.0);
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p.x * q.z - q.x * p.z;
  }
  using std::abs;
  return abs(a) * 0.5;
}

/// Intersection area of two convex counter-clockwise quads.
template <class T>
T intersection_area(const std::array<Vec2<T>, 4>& a, const std::array<Vec2<T>, 4>& b) {
  std::vector<Vec2<T>> poly(a.begin(), a.end());
  for (int e = 0; e < 4 && !poly.empty(); ++e) {
    const Vec2<T>& p1 = b[e];
    const Vec2<T>& p2 = b[(e + 1) % 4];
    std::vector<Vec2<T>> next;
    next.reserve(poly.size() + 2);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2<T>& cur = poly[i];
      const Vec2<T>& prev = poly[(i + poly.size() - 1) % poly.size()];
      const T dc = cross(p1, p2, cur);
      const T dp = cross(p1, p2, prev);
      const bool cur_in = value_of(dc) >= 0.0;
      const bool prev_in = value_of(dp) >= 0.0;
      if (cur_in != prev_in) {
        const T t = dp / (dp - dc);
        next.push_back({prev.x + t * (cur.x - prev.x), prev.z + t * (cur.z - prev.z)});
      }
      if (cur_in) next.push_back(cur);
    }
    poly = std::move(next);
  }
  return polygon_area(poly);
}

template <class T>
T bev_iou(const BevRect<T>& a, const BevRect<T>& b) {
  const T inter = intersection_area(corners(a), corners(b));
  const T uni = a.w * a.l + b.w * b.l - inter;
  if (value_of(uni) <= 0.0) return T(0.0);
  return inter / uni;
}

inline BevRect<double> rect_of(const Box3D& b) { return {b.x, b.z, b.w, b.l, b.yaw}; }

}  // namespace sensorfuse::iou
