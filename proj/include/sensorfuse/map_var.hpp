#pragma once

#include <cstdint>
#include <vector>

#include "sensorfuse/autodiff.hpp"
#include "sensorfuse/feature_map.hpp"

namespace sensorfuse {

/// A feature map living on a tape: (cells x channels) data plus its mask.
struct MapVar {
  Plane plane = Plane::kBev;
  int rows = 0;
  int cols = 0;
  ad::Var data;
  std::vector<std::uint8_t> mask;

  int cells() const { return rows * cols; }
  int channels() const { return data.cols(); }

  static MapVar from(ad::Tape& tape, const FeatureMap& fm) {
    MapVar m;
    m.plane = fm.plane;
    m.rows = fm.rows;
    m.cols = fm.cols;
    m.data = tape.constant(fm.cells(), fm.channels, fm.data);
    m.mask = fm.mask;
    return m;
  }

  static MapVar zeros(ad::Tape& tape, Plane plane, int rows, int cols, int channels) {
    MapVar m;
    m.plane = plane;
    m.rows = rows;
    m.cols = cols;
    m.data = tape.zeros(rows * cols, channels);
    m.mask.assign(static_cast<std::size_t>(rows) * cols, 0);
    return m;
  }

  FeatureMap to_feature_map() const {
    FeatureMap fm(plane, rows, cols, channels());
    auto v = data.value();
    fm.data.assign(v.begin(), v.end());
    fm.mask = mask;
    return fm;
  }
};

inline std::vector<std::uint8_t> mask_union(const std::vector<std::uint8_t>& a,
                                            const std::vector<std::uint8_t>& b) {
  std::vector<std::uint8_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

}  // namespace sensorfuse
