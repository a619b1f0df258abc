#pragma once

// Proposal refinement decoder, box heads, set matching and the training loss.
//
// Each decoder layer refines the proposal queries with three windowed
// cross-attention reads (LiDAR BEV around the proposal cell, RGB and gated
// feature planes around the projected proposal centre) followed by a
// residual feed-forward block. Proposal positions stay fixed across layers.

#include <array>
#include <random>
#include <utility>
#include <vector>

#include "sensorfuse/autodiff.hpp"
#include "sensorfuse/bevfusion.hpp"
#include "sensorfuse/box.hpp"
#include "sensorfuse/geometry.hpp"
#include "sensorfuse/hungarian.hpp"
#include "sensorfuse/map_var.hpp"

namespace sensorfuse::detector {

/// Extra classification logit for "no object".
inline constexpr int kNoObject = kNumClasses;
inline constexpr int kClassLogits = kNumClasses + 1;
/// Regression layout: dx, dy, dz, log w, log l, log h, sin yaw, cos yaw.
inline constexpr int kRegParams = 8;

struct DecoderConfig {
  int layers = 4;
  int bev_window = 3;
  int image_window = 3;
  /// Height (y, down) of the proposal centre projected into the cameras.
  double center_height = -0.9;
  /// Anchor height; a zero regression decodes to a unit box resting on the ground.
  double anchor_y = -0.5;
};

struct DecoderParams {
  struct Attention {
    ad::Param* q = nullptr;
    ad::Param* k = nullptr;
    ad::Param* v = nullptr;
  };
  struct Layer {
    Attention lidar, rgb, gated;
    ad::Param* ffn_w1 = nullptr;
    ad::Param* ffn_b1 = nullptr;
    ad::Param* ffn_w2 = nullptr;
    ad::Param* ffn_b2 = nullptr;
  };
  std::vector<Layer> layers;
  ad::Param* cls_w = nullptr;
  ad::Param* cls_b = nullptr;
  ad::Param* reg_w = nullptr;
  ad::Param* reg_b = nullptr;

  static DecoderParams create(ad::ParamRegistry& reg, int d, int layers, std::mt19937_64& rng);
  /// Zeroes both heads.
  void zero_heads();
};

struct LossWeights {
  double cls = 1.0;
  double reg = 0.25;
  double iou = 0.25;
  double heat = 1.0;
  /// Cross-entropy weight of predictions left unmatched.
  double no_object = 0.1;

  /// Throws ValidationError on negative weights or all-zero box weights.
  void validate() const;
};

struct DecoderOutput {
  ad::Var cls_logits;  // [n, kClassLogits]
  ad::Var reg;         // [n, kRegParams]
  std::vector<std::array<double, 2>> anchors;  // proposal cell centre (x, z)
  int count() const { return static_cast<int>(anchors.size()); }
};

struct DecoderMaps {
  const MapVar* rgb = nullptr;
  const MapVar* gated = nullptr;
  const MapVar* lidar = nullptr;
  geometry::CameraModel rgb_cam;    // feature resolution
  geometry::CameraModel gated_cam;  // feature resolution
};

DecoderOutput decode(const bevfusion::TapeProposals& proposals, const DecoderMaps& maps,
                     const DecoderParams& params, const DecoderConfig& cfg);

/// Value-level decode straight from a proposal set and enriched maps.
std::vector<Box3D> decode(const bevfusion::ProposalSet& proposals, const FeatureMap& rgb,
                          const FeatureMap& gated, const FeatureMap& lidar,
                          const geometry::CameraModel& rgb_cam,
                          const geometry::CameraModel& gated_cam, const DecoderParams& params,
                          const DecoderConfig& cfg);

struct Prediction {
  Box3D box;
  std::array<double, kClassLogits> probs{};
};

/// Box from one regression row; class and score from the real-class softmax maximum.
Prediction decode_prediction(std::span<const double> logits, std::span<const double> reg,
                             const std::array<double, 2>& anchor, const DecoderConfig& cfg);
std::vector<Prediction> predictions(const DecoderOutput& out, const DecoderConfig& cfg);

/// Regression target of `box` relative to `anchor`.
std::array<double, kRegParams> regression_target(const Box3D& box,
                                                 const std::array<double, 2>& anchor,
                                                 const DecoderConfig& cfg);
/// Absolute box encoding (x, y, z, log sizes, sin, cos) used by the matching cost.
std::array<double, kRegParams> box_encoding(const Box3D& box);

/// w_cls (1 - p[label class]) + w_reg L1(encodings) + w_iou (1 - BEV IoU).
CostMatrix matching_cost(const std::vector<Prediction>& preds, const std::vector<Box3D>& labels,
                         const LossWeights& w);
/// (prediction, label) pairs of the minimum-cost assignment.
std::vector<std::pair<int, int>> hungarian_match(const std::vector<Prediction>& preds,
                                                 const std::vector<Box3D>& labels,
                                                 const LossWeights& w);

/// Unweighted loss terms and the weighted total.
struct LossBreakdown {
  double cls = 0.0;
  double reg = 0.0;
  double iou = 0.0;
  double heat = 0.0;
  double total = 0.0;
};

struct HeatSupervision {
  ad::Var logits;                // [cells, kNumClasses]
  std::vector<double> targets;   // heatmap_targets()
};

struct TapeLoss {
  ad::Var total;
  LossBreakdown breakdown;
};

/// cls: weighted cross-entropy normalised by the weight sum. reg: L1 over
/// matched regression rows divided by the number of matches. iou: mean of
/// (1 - BEV IoU) over matches. heat: focal loss divided by max(1, peaks).
/// Throws ContractViolation when `assignment` is out of range or repeats an index.
TapeLoss compute_loss(const DecoderOutput& out, const std::vector<Box3D>& labels,
                      const std::vector<std::pair<int, int>>& assignment, const LossWeights& w,
                      const DecoderConfig& cfg, const HeatSupervision* heat = nullptr);

/// Value-level loss on raw head outputs.
LossBreakdown compute_loss(std::span<const double> cls_logits, std::span<const double> reg,
                           const std::vector<std::array<double, 2>>& anchors,
                           const std::vector<Box3D>& labels,
                           const std::vector<std::pair<int, int>>& assignment,
                           const LossWeights& w, const DecoderConfig& cfg);

}  // namespace sensorfuse::detector
