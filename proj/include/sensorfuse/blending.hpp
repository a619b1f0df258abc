#pragma once

// Cross-modal adaptive blending between the camera planes and the BEV plane.
//
// Camera-adaptive: RGB and gated queries attend to LiDAR features sampled at
// the pixels' lifted 3D positions. LiDAR-adaptive: BEV queries attend to
// camera features pooled over the LiDAR points of each pillar. Radar-adaptive:
// radar queries attend to RGB features only and skip the intra term.

#include <optional>
#include <random>
#include <vector>

#include "sensorfuse/autodiff.hpp"
#include "sensorfuse/feature_map.hpp"
#include "sensorfuse/geometry.hpp"
#include "sensorfuse/map_var.hpp"

namespace sensorfuse::blending {

enum class Mode { kCross, kIntra };

/// Q/K/V projections of one attention block. `q` may be wider than `k` when
/// extra query channels (the depth channel) are appended.
struct AttentionParams {
  ad::Param* q = nullptr;
  ad::Param* k = nullptr;
  ad::Param* v = nullptr;

  static AttentionParams create(ad::ParamRegistry& reg, const std::string& prefix, int d,
                                int query_extra, std::mt19937_64& rng);
};

struct BlendConfig {
  int camera_window = 5;
  int bev_window = 3;
  /// Appended depth channel is depth / depth_scale.
  double depth_scale = 50.0;
  /// Off: the camera-adaptive cross context is fully masked.
  bool depth_based_transform = true;
};

struct BlendParams {
  AttentionParams rgb_cross, rgb_intra;
  AttentionParams gated_cross, gated_intra;
  AttentionParams lidar_cross, lidar_intra;
  AttentionParams radar_cross;
  /// Gate pre-activations, [1, d] each; the gate is sigmoid(pre).
  ad::Param* rgb_gate = nullptr;
  ad::Param* gated_gate = nullptr;
  ad::Param* lidar_gate = nullptr;

  static BlendParams create(ad::ParamRegistry& reg, int d, std::mt19937_64& rng);
};

/// Attention windows for a rows x cols plane: for each query position the
/// unmasked context cells of its k x k neighbourhood, in row-major order.
/// Masked queries get an empty window.
ad::Windows build_windows(int rows, int cols, int k, const std::vector<std::uint8_t>& query_mask,
                          const std::vector<std::uint8_t>& context_mask);

/// Constant-weight resampling from one plane to another plus the validity
/// of each destination cell.
struct SamplingMap {
  ad::SparseRows rows;
  std::vector<std::uint8_t> mask;
};

/// Camera pixel -> BEV: each valid depth pixel of a feature-resolution camera
/// is lifted, and its bilinear BEV support is recorded. A pixel is valid when
/// its depth is valid and at least one support cell is unmasked in
/// `bev_mask`.
SamplingMap lift_sampling_map(const geometry::CameraModel& cam, const geometry::DepthMap& depth,
                              const geometry::BEVGridSpec& spec,
                              const std::vector<std::uint8_t>& bev_mask);

/// BEV pillar -> camera: every point of `pts` that falls in a pillar and
/// projects inside the camera contributes its bilinear image support; the
/// pillar row is the average over contributing points.
SamplingMap pillar_sampling_map(const geometry::PointCloud& pts, const geometry::BEVGridSpec& spec,
                                const geometry::CameraModel& cam,
                                const std::vector<std::uint8_t>& camera_mask);

/// Applies a sampling map to a source map, producing a map on `plane`.
MapVar resample(const MapVar& source, const SamplingMap& map, Plane plane, int rows, int cols);

FeatureMap gather_lidar_context(const FeatureMap& lidar, const geometry::BEVGridSpec& spec,
                                const geometry::CameraModel& cam,
                                const geometry::DepthMap& depth);

/// Element-wise sum with union mask.
MapVar blend_contexts(const MapVar& a, const MapVar& b);
FeatureMap blend_contexts(const FeatureMap& a, const FeatureMap& b);

/// Windowed attention. Cross mode takes keys/values from `context`, intra
/// mode from `query` itself. Positions whose query is masked or whose
/// window holds no unmasked context cell return the query unchanged.
/// `query_extra`, if given, is concatenated to the query features before
/// the Q projection.
MapVar windowed_attention(const MapVar& query, const MapVar& context, const AttentionParams& p,
                          Mode mode, int k, std::optional<ad::Var> query_extra = std::nullopt);
FeatureMap windowed_attention(const FeatureMap& query, const FeatureMap& context,
                              const AttentionParams& p, Mode mode, int k);

/// base + g * cross + (1 - g) * intra with g = sigmoid(gate_pre) per channel.
MapVar combine_cross_intra(const MapVar& cross, const MapVar& intra, const MapVar& base,
                           ad::Var gate_pre);
FeatureMap combine_cross_intra(const FeatureMap& cross, const FeatureMap& intra,
                               const FeatureMap& base, std::span<const double> gate_pre);

/// Scene geometry needed by blend_all, computed once per scene.
struct BlendGeometry {
  SamplingMap rgb_lift;       // rgb pixels -> lidar BEV
  SamplingMap gated_lift;     // gated pixels -> lidar BEV
  SamplingMap rgb_pillars;    // lidar pillars -> rgb pixels
  SamplingMap gated_pillars;  // lidar pillars -> gated pixels
  SamplingMap radar_pillars;  // radar pillars -> rgb pixels
  std::vector<double> rgb_depth;    // per feature pixel, depth / depth_scale
  std::vector<double> gated_depth;
};

struct SceneGeometryInputs {
  geometry::CameraModel rgb_cam;    // feature resolution
  geometry::CameraModel gated_cam;  // feature resolution
  geometry::DepthMap rgb_depth;     // feature resolution
  geometry::DepthMap gated_depth;
  const geometry::PointCloud* lidar = nullptr;
  const geometry::PointCloud* radar = nullptr;
  geometry::BEVGridSpec lidar_grid;
  geometry::BEVGridSpec radar_grid;
};

BlendGeometry build_geometry(const SceneGeometryInputs& in, const std::vector<std::uint8_t>& lidar_mask,
                             const std::vector<std::uint8_t>& rgb_mask,
                             const std::vector<std::uint8_t>& gated_mask, const BlendConfig& cfg);

struct Enriched {
  MapVar rgb;
  MapVar gated;
  MapVar lidar;
  MapVar radar;
};

Enriched blend_all(const MapVar& rgb, const MapVar& gated, const MapVar& lidar, const MapVar& radar,
                   const BlendGeometry& geo, const BlendParams& params, const BlendConfig& cfg);

}  // namespace sensorfuse::blending
