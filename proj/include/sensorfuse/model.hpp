#pragma once

// End-to-end detector: encoders -> blending -> BEV fusion -> proposals ->
// decoder. Disabled input modalities enter as zero maps with false masks.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "sensorfuse/autodiff.hpp"
#include "sensorfuse/bevfusion.hpp"
#include "sensorfuse/blending.hpp"
#include "sensorfuse/detector.hpp"
#include "sensorfuse/encoders.hpp"
#include "sensorfuse/simkit.hpp"

namespace sensorfuse::model {

/// Subset of {C (RGB), G (gated), L (LiDAR), R (radar)}.
struct Modalities {
  bool rgb = true;
  bool gated = true;
  bool lidar = true;
  bool radar = true;

  /// Letters in any order, e.g. "CL", "CGLR". Throws ValidationError(field).
  static Modalities parse(const std::string& text, const std::string& field);
  /// Canonical "CGLR" order.
  std::string to_string() const;
  bool subset_of(const Modalities& o) const;
  bool operator==(const Modalities&) const = default;
};

struct ModelConfig {
  encoders::EncoderConfig encoder;
  blending::BlendConfig blend;
  bevfusion::FusionConfig fusion;
  detector::DecoderConfig decoder;
  detector::LossWeights loss;
  std::size_t proposals = 200;
  Modalities inputs;
  Modalities proposal;

  /// Desk-scale defaults used by the experiments (d = 16, K = 20).
  static ModelConfig desk();
  /// Throws ValidationError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ad::ParamRegistry& registry() { return *registry_; }
  const ad::ParamRegistry& registry() const { return *registry_; }

  encoders::EncoderParams encoder;
  blending::BlendParams blend;
  bevfusion::DistanceWeightParams fusion;
  bevfusion::HeatmapParams heat;
  detector::DecoderParams decoder;

 private:
  ModelConfig cfg_;
  std::unique_ptr<ad::ParamRegistry> registry_;
};

/// Parameter-independent per-scene inputs, computed once.
struct PreparedScene {
  std::uint64_t seed = 0;
  simkit::Condition condition;
  std::vector<Box3D> labels;
  encoders::Patches rgb_patches;
  encoders::Patches gated_patches;
  encoders::BevStats lidar_stats;
  encoders::BevStats radar_stats;
  blending::BlendGeometry geometry;
  geometry::CameraModel rgb_cam;    // feature resolution
  geometry::CameraModel gated_cam;  // feature resolution
  geometry::BEVGridSpec grid;
  std::vector<double> distances;
  std::vector<double> heat_targets;
};

PreparedScene prepare_scene(const simkit::Scene& scene, const simkit::SensorFrame& frame,
                            const simkit::RigConfig& rig, const ModelConfig& cfg);

struct ForwardResult {
  blending::Enriched enriched;
  MapVar fused;
  ad::Var heat_logits;
  bevfusion::TapeProposals proposals;
  detector::DecoderOutput output;
};

ForwardResult forward(ad::Tape& tape, const PreparedScene& scene, const Model& model);

struct SceneLoss {
  detector::TapeLoss loss;
  std::vector<std::pair<int, int>> assignment;
  std::vector<detector::Prediction> predictions;
};

/// Hungarian assignment on the current predictions, then the full loss
/// including heatmap supervision.
SceneLoss scene_loss(const ForwardResult& fwd, const PreparedScene& scene, const Model& model);

/// Detections (all proposals, scored) for one scene.
std::vector<Box3D> infer(const PreparedScene& scene, const Model& model);

/// Mean BEV IoU of the Hungarian-matched prediction/label pairs.
double matched_bev_iou(const PreparedScene& scene, const Model& model);

}  // namespace sensorfuse::model
