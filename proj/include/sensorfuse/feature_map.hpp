#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sensorfuse/errors.hpp"

namespace sensorfuse {

enum class Plane { kCamera, kBev };

/// Dense rows x cols grid of `channels`-wide feature vectors, row-major,
/// with a per-cell validity mask. Camera plane: rows = v, cols = u.
/// BEV plane: rows = z index, cols = x index.
struct FeatureMap {
  Plane plane = Plane::kBev;
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<double> data;
  std::vector<std::uint8_t> mask;

  FeatureMap() = default;
  FeatureMap(Plane p, int r, int c, int ch, double fill = 0.0, bool valid = true)
      : plane(p), rows(r), cols(c), channels(ch),
        data(static_cast<std::size_t>(r) * c * ch, fill),
        mask(static_cast<std::size_t>(r) * c, valid ? 1 : 0) {}

  int cells() const { return rows * cols; }
  std::span<double> at(int cell) {
    return {data.data() + static_cast<std::size_t>(cell) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<const double> at(int cell) const {
    return {data.data() + static_cast<std::size_t>(cell) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<double> at(int r, int c) { return at(r * cols + c); }
  std::span<const double> at(int r, int c) const { return at(r * cols + c); }

  bool same_shape(const FeatureMap& o) const {
    return plane == o.plane && rows == o.rows && cols == o.cols && channels == o.channels;
  }
};

inline void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": feature map shape mismatch");
}

}  // namespace sensorfuse
