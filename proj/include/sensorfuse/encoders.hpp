#pragma once

// Small per-modality feature extractors: strided patch embedding for the two
// cameras and pillar pooling + point-wise MLP for the two point clouds.

#include <random>
#include <string>
#include <vector>

#include "sensorfuse/autodiff.hpp"
#include "sensorfuse/geometry.hpp"
#include "sensorfuse/map_var.hpp"
#include "sensorfuse/simkit.hpp"

namespace sensorfuse::encoders {

enum class Camera { kRgb, kGated };
enum class RangeSensor { kLidar, kRadar };

struct EncoderConfig {
  int channels = 32;
  int downsample = 4;
  ad::Activation activation = ad::Activation::kTanh;
};

/// Per-cell point statistics fed to the BEV encoders.
inline constexpr int kBevStatInputs = 6;

struct EncoderParams {
  struct Camera {
    ad::Param* w = nullptr;
    ad::Param* b = nullptr;
  };
  struct Bev {
    ad::Param* w1 = nullptr;
    ad::Param* b1 = nullptr;
    ad::Param* w2 = nullptr;
    ad::Param* b2 = nullptr;
  };
  Camera rgb;
  Camera gated;
  Bev lidar;
  Bev radar;

  /// Registers "enc.{rgb,gated}.{w,b}" and "enc.{lidar,radar}.{w1,b1,w2,b2}".
  static EncoderParams create(ad::ParamRegistry& registry, const EncoderConfig& cfg,
                              int camera_channels, std::mt19937_64& rng);
};

/// Non-overlapping factor x factor patches flattened to rows (patch-major,
/// then channel). Throws ShapeError when the image is not divisible.
struct Patches {
  int rows = 0;  // feature-plane height
  int cols = 0;  // feature-plane width
  int width = 0; // values per patch
  std::vector<double> data;
};
Patches make_patches(const simkit::Image& image, int factor);

/// Occupied-cell statistics. `stats` has kBevStatInputs values per occupied
/// cell: mean intensity, mean velocity, mean x and z offsets from the cell
/// centre (in cells), mean height and max height (metres above ground).
struct BevStats {
  int rows = 0;
  int cols = 0;
  std::vector<int> occupied;        // cell indices, ascending
  std::vector<double> stats;        // occupied.size() x kBevStatInputs
  std::vector<double> log_count;    // log(1 + points) per occupied cell
  std::vector<std::uint8_t> mask;   // per cell
};
BevStats compute_bev_stats(const geometry::PointCloud& pc, const geometry::BEVGridSpec& spec);

// Tape-level encoders.
MapVar encode_camera(ad::Tape& tape, const Patches& patches, Camera which,
                     const EncoderParams& params, const EncoderConfig& cfg);
MapVar encode_bev(ad::Tape& tape, const BevStats& stats, RangeSensor which,
                  const EncoderParams& params, const EncoderConfig& cfg);

// Value-level wrappers.
FeatureMap encode_camera(const simkit::Image& image, Camera which, const EncoderParams& params,
                         const EncoderConfig& cfg);
FeatureMap encode_lidar(const geometry::PointCloud& pc, const geometry::BEVGridSpec& spec,
                        const EncoderParams& params, const EncoderConfig& cfg);
FeatureMap encode_radar(const geometry::PointCloud& pc, const geometry::BEVGridSpec& spec,
                        const EncoderParams& params, const EncoderConfig& cfg);

}  // namespace sensorfuse::encoders
