#pragma once

// BEV-level fusion and multimodal proposal generation.

#include <random>
#include <vector>

#include "json.hpp"
#include "sensorfuse/autodiff.hpp"
#include "sensorfuse/blending.hpp"
#include "sensorfuse/box.hpp"
#include "sensorfuse/feature_map.hpp"
#include "sensorfuse/geometry.hpp"
#include "sensorfuse/map_var.hpp"

namespace sensorfuse::bevfusion {

inline constexpr double kInitialSigma = 30.0;

/// Gaussian fall-off exp(-d^2 / (2 sigma^2)). With `printed_variant` the
/// expression exp((-d / (2 sigma^2))^2) is evaluated instead; it grows with
/// distance and is kept only for comparison runs.
double distance_weight(double d, double sigma, bool printed_variant = false);

/// sigma (stored as log sigma) and the residual per-cell transform
/// x + W2 tanh(W1 x + b1) + b2.
struct DistanceWeightParams {
  ad::Param* log_sigma = nullptr;
  ad::Param* w1 = nullptr;
  ad::Param* b1 = nullptr;
  ad::Param* w2 = nullptr;
  ad::Param* b2 = nullptr;

  static DistanceWeightParams create(ad::ParamRegistry& reg, int d, std::mt19937_64& rng);
  double sigma() const;
  /// Zeroes W2 and b2 so the transform is the identity.
  void set_identity();
};

struct FusionConfig {
  bool gamma_weighting = true;
  bool printed_variant = false;
};

/// Ego distance of every BEV cell centre, row-major.
std::vector<double> cell_distances(const geometry::BEVGridSpec& spec);

/// Per cell: f * lidar + (1 - f) * radar with f = distance_weight(d, sigma),
/// then the residual transform. With gamma_weighting off the maps are
/// summed instead.
MapVar fuse_lidar_radar(const MapVar& lidar, const MapVar& radar,
                        const std::vector<double>& distances, const DistanceWeightParams& p,
                        const FusionConfig& cfg);
FeatureMap fuse_lidar_radar(const FeatureMap& lidar, const FeatureMap& radar,
                            const geometry::BEVGridSpec& spec, const DistanceWeightParams& p,
                            const FusionConfig& cfg);

/// Average of gated features sampled at the projections of each pillar's
/// LiDAR points; `pillars` comes from blending::pillar_sampling_map.
MapVar gated_to_bev(const MapVar& gated, const blending::SamplingMap& pillars, int rows, int cols);
FeatureMap gated_to_bev(const FeatureMap& gated, const geometry::PointCloud& lidar,
                        const geometry::CameraModel& cam, const geometry::BEVGridSpec& spec);

/// Element-wise sum with union mask.
MapVar late_fuse(const MapVar& lr, const MapVar& gated_bev);
FeatureMap late_fuse(const FeatureMap& lr, const FeatureMap& gated_bev);

/// Class-wise 3x3 convolution over the fused BEV map (zero padding).
struct HeatmapParams {
  ad::Param* w = nullptr;  // [kNumClasses, 9 * d]
  ad::Param* b = nullptr;  // [1, kNumClasses]
  ad::Param* class_embed = nullptr;  // [kNumClasses, d], added to proposal queries

  static HeatmapParams create(ad::ParamRegistry& reg, int d, std::mt19937_64& rng);
};

inline constexpr double kHeatBiasInit = -2.19;

/// Heat logits, [cells, kNumClasses].
ad::Var heatmap_logits(const MapVar& fused, const HeatmapParams& p);

struct Proposal {
  double x = 0.0;
  double z = 0.0;
  int cell = 0;
  ObjectClass cls = ObjectClass::kCar;
  double score = 0.0;
  std::vector<double> query;
};

struct ProposalSet {
  std::size_t capacity = 0;
  std::vector<Proposal> proposals;
};

struct HeatPeak {
  int cls = 0;
  int cell = 0;
  double score = 0.0;
};

/// Strict 8-neighbourhood local maxima of each class plane of `heat`
/// ([cells, classes], row-major), the K highest across classes, ordered by
/// score descending then (class, cell) ascending.
std::vector<HeatPeak> find_peaks(std::span<const double> heat, int rows, int cols, int classes,
                                 std::size_t k);

/// Proposal selection plus query features (fused feature at the cell plus
/// the class embedding). Returns the query matrix [n, d] on the tape.
struct TapeProposals {
  ProposalSet set;
  ad::Var queries;
};
TapeProposals extract_proposals(const MapVar& fused, ad::Var heat_logits, const HeatmapParams& p,
                                const geometry::BEVGridSpec& spec, std::size_t k);
ProposalSet extract_proposals(const FeatureMap& fused, const HeatmapParams& p,
                              const geometry::BEVGridSpec& spec, std::size_t k);

/// Gaussian splat targets per class, [cells, kNumClasses]. Peaks are exactly 1
/// at the cells containing object centres; the splat radius in cells is
/// floor(diagonal / (2 * cell size)).
std::vector<double> heatmap_targets(const std::vector<Box3D>& objects,
                                    const geometry::BEVGridSpec& spec);

nlohmann::json to_json(const ProposalSet& set);

}  // namespace sensorfuse::bevfusion
