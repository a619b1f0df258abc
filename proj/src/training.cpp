#include "sensorfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "sensorfuse/errors.hpp"
#include "sensorfuse/parallel.hpp"
#include "sensorfuse/simkit.hpp"

namespace sensorfuse::training {

void TrainConfig::validate() const {
  if (steps < 0) throw ValidationError("train.steps", "must be >= 0");
  if (batch_size < 1) throw ValidationError("train.batch_size", "must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("train.learning_rate", "must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("train.beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("train.beta2", "must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("train.epsilon", "must be > 0");
  if (jobs < 1) throw ValidationError("jobs", "must be >= 1");
}

SceneGradient scene_gradient(const model::PreparedScene& scene, const model::Model& model) {
  ad::Tape tape;
  const auto fwd = model::forward(tape, scene, model);
  const auto sl = model::scene_loss(fwd, scene, model);
  SceneGradient g;
  g.loss = sl.loss.breakdown;
  g.grads = ad::zero_gradients(model.registry());
  if (tape.needs_grad(sl.loss.total)) {
    tape.backward(sl.loss.total);
    tape.accumulate(g.grads);
  }
  return g;
}

Adam::Adam(const ad::ParamRegistry& registry, const TrainConfig& cfg)
    : cfg_(cfg), m_(ad::zero_gradients(registry)), v_(ad::zero_gradients(registry)) {}

void Adam::step(ad::ParamRegistry& registry, const ad::Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (auto& p : registry) {
    const std::size_t i = p->index();
    auto& val = p->value();
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double g = grads[i][j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
      val[j] -= cfg_.learning_rate * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + cfg_.epsilon);
    }
  }
}

std::vector<StepLog> train(model::Model& model, const std::vector<model::PreparedScene>& scenes,
                           const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  std::vector<StepLog> curve;
  if (scenes.empty() || cfg.steps == 0) return curve;
  const std::size_t n = scenes.size();
  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, n);

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  int epoch = 0;
  const auto next_index = [&] {
    if (cursor == order.size()) {
      order.resize(n);
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(simkit::derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch++)));
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  Adam adam(model.registry(), cfg);
  std::vector<SceneGradient> results(batch);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> members(batch);
    for (auto& m : members) m = next_index();
    parallel_for(batch, cfg.jobs, [&](std::size_t b) { results[b] = scene_gradient(scenes[members[b]], model); });

    StepLog log;
    log.step = step;
    auto grads = ad::zero_gradients(model.registry());
    const double inv = 1.0 / static_cast<double>(batch);
    for (const auto& r : results) {
      log.loss.cls += r.loss.cls * inv;
      log.loss.reg += r.loss.reg * inv;
      log.loss.iou += r.loss.iou * inv;
      log.loss.heat += r.loss.heat * inv;
      log.loss.total += r.loss.total * inv;
      for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += r.grads[i][j] * inv;
    }
    if (!std::isfinite(log.loss.total)) {
      char msg[160];
      std::snprintf(msg, sizeof msg,
                    "loss diverged at step %d (cls=%g reg=%g iou=%g heat=%g)", step,
                    log.loss.cls, log.loss.reg, log.loss.iou, log.loss.heat);
      throw DivergenceError(msg);
    }
    if (cfg.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads)
        for (double x : g) sq += x * x;
      const double norm = std::sqrt(sq);
      if (norm > cfg.clip_norm) {
        const double s = cfg.clip_norm / norm;
        for (auto& g : grads)
          for (double& x : g) x *= s;
      }
    }
    adam.step(model.registry(), grads);
    curve.push_back(log);
    if (on_step) on_step(log);
  }
  return curve;
}

std::string loss_csv(const std::vector<StepLog>& curve) {
  std::string out = "step,total,cls,reg,iou,heat\n";
  char line[256];
  for (const auto& s : curve) {
    std::snprintf(line, sizeof line, "%d,%.9f,%.9f,%.9f,%.9f,%.9f\n", s.step, s.loss.total,
                  s.loss.cls, s.loss.reg, s.loss.iou, s.loss.heat);
    out += line;
  }
  return out;
}

}  // namespace sensorfuse::training
