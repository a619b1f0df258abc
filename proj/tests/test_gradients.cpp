#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "sensorfuse/training.hpp"
#include "support.hpp"

using namespace sensorfuse;

namespace {

struct ToyCase {
  simkit::RigConfig rig = simkit::RigConfig::toy();
  model::ModelConfig cfg;
  model::PreparedScene scene;
};

ToyCase toy_case(const std::string& condition, std::uint64_t seed, bool gamma = true, bool depth = true) {
  ToyCase t;
  t.cfg = model::ModelConfig::desk();
  t.cfg.encoder.channels = 4;
  t.cfg.decoder.layers = 2;
  t.cfg.proposals = 4;
  t.cfg.fusion.gamma_weighting = gamma;
  t.cfg.blend.depth_based_transform = depth;
  simkit::SceneConfig sc;
  sc.cars = 1;
  sc.pedestrians = 1;
  sc.x_min = -2.0;
  sc.x_max = 2.0;
  sc.z_min = 2.0;
  sc.z_max = 5.5;
  sc.max_overlap_iou = 0.0;
  const auto scene = simkit::generate_scene(sc, seed, simkit::Condition::parse(condition));
  t.scene = model::prepare_scene(scene, simkit::simulate(scene, t.rig), t.rig, t.cfg);
  return t;
}

/// Largest |gradient| per parameter-name prefix.
std::map<std::string, double> group_magnitudes(const ad::ParamRegistry& reg, const ad::Gradients& g) {
  std::map<std::string, double> out;
  for (const auto& p : reg) {
    const std::string& n = p->name();
    std::string group = n.substr(0, n.find('.'));
    if (n.find(".gate") != std::string::npos) group = "blend.gate";
    if (n == "fuse.log_sigma") group = "fuse.sigma";
    if (n.rfind("fuse.gamma", 0) == 0) group = "fuse.gamma";
    if (n.rfind("head.", 0) == 0) group = "head";
    for (double x : g[p->index()]) out[group] = std::max(out[group], std::abs(x));
  }
  return out;
}

void run_check(const std::string& condition, std::uint64_t seed) {
  auto t = toy_case(condition, seed);
  model::Model m(t.cfg, seed);
  const auto analytic = training::scene_gradient(t.scene, m);
  ASSERT_TRUE(std::isfinite(analytic.loss.total));
  const auto mags = group_magnitudes(m.registry(), analytic.grads);
  for (const char* g : {"enc", "blend", "blend.gate", "fuse.sigma", "fuse.gamma", "heat", "dec0", "dec1", "head"}) {
    ASSERT_TRUE(mags.count(g)) << g;
    EXPECT_GT(mags.at(g), 1e-8) << "no gradient reaches " << g;
  }
  const auto r = support::gradient_check(
      m.registry(), [&] { return training::scene_gradient(t.scene, m).loss.total; }, analytic.grads, 0.05,
      seed);
  EXPECT_GT(r.checked, 100u);
  EXPECT_EQ(r.failed, 0u) << "worst " << r.worst << "\n" << (r.failures.empty() ? "" : r.failures.front());
}

}  // namespace

TEST(Gradients, FullPipelineFogScene) { run_check("fog@0.03", 11); }

TEST(Gradients, FullPipelineClearScene) { run_check("clear_day", 12); }

TEST(Gradients, GammaOffAndNoDepthTransform) {
  auto t = toy_case("snow@0.01", 13, false, false);
  model::Model m(t.cfg, 13);
  const auto analytic = training::scene_gradient(t.scene, m);
  const auto r = support::gradient_check(
      m.registry(), [&] { return training::scene_gradient(t.scene, m).loss.total; }, analytic.grads, 0.05, 13);
  EXPECT_EQ(r.failed, 0u) << "worst " << r.worst << "\n" << (r.failures.empty() ? "" : r.failures.front());
}
