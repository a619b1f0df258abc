#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sensorfuse/detector.hpp"
#include "sensorfuse/model.hpp"

namespace sensorfuse::training {

/// Adam on mini-batches of scenes. Batch composition is drawn from a seeded
/// permutation per epoch; per-scene gradients are summed in batch order.
struct TrainConfig {
  int steps = 300;
  int batch_size = 8;
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  int jobs = 1;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

struct StepLog {
  int step = 0;
  /// Batch mean of the loss terms before the update of this step.
  detector::LossBreakdown loss;
};

/// Loss and gradients of one scene, gradients indexed like the registry.
struct SceneGradient {
  detector::LossBreakdown loss;
  ad::Gradients grads;
};
SceneGradient scene_gradient(const model::PreparedScene& scene, const model::Model& model);

class Adam {
 public:
  Adam(const ad::ParamRegistry& registry, const TrainConfig& cfg);
  void step(ad::ParamRegistry& registry, const ad::Gradients& grads);

 private:
  TrainConfig cfg_;
  ad::Gradients m_;
  ad::Gradients v_;
  int t_ = 0;
};

using StepCallback = std::function<void(const StepLog&)>;

/// Throws DivergenceError when a batch loss is not finite.
std::vector<StepLog> train(model::Model& model, const std::vector<model::PreparedScene>& scenes,
                           const TrainConfig& cfg, const StepCallback& on_step = {});

/// "step,total,cls,reg,iou,heat" rows.
std::string loss_csv(const std::vector<StepLog>& curve);

}  // namespace sensorfuse::training
