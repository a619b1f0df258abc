// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Criteria 8 and 9 train 12 desk-scale models and
// dominate the runtime (about an hour on one core).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sensorfuse/bevfusion.hpp"
#include "sensorfuse/blending.hpp"
#include "sensorfuse/checkpoint.hpp"
#include "sensorfuse/evalkit.hpp"
#include "sensorfuse/experiment.hpp"
#include "sensorfuse/geometry.hpp"
#include "sensorfuse/hungarian.hpp"
#include "sensorfuse/serialization.hpp"
#include "sensorfuse/training.hpp"
#include "support.hpp"

using namespace sensorfuse;
namespace ex = sensorfuse::experiment;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome geometry_round_trip() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto cam = support::random_camera(rng);
    const double u = support::uniform(rng, 0.0, cam.width);
    const double v = support::uniform(rng, 0.0, cam.height);
    const double depth = support::uniform(rng, 0.5, 100.0);
    const Eigen::Vector3d p = geometry::lift_pixel(cam, u, v, depth);
    const auto q = geometry::project_point(cam, p);
    worst = std::max(worst, (geometry::lift_pixel(cam, q.u, q.v, q.depth) - p).norm());
  }
  const double t = seconds_since(t0);
  return {worst < 1e-6 && t < 5.0, fmt("max error %.3g m, %.2f s", worst, t)};
}

Outcome attention_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  double worst = 0.0;
  bool masks_equal = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 7;
    ad::ParamRegistry reg;
    const auto p = blending::AttentionParams::create(reg, "acc", d, 0, rng);
    const auto q = support::random_map(rng, Plane::kBev, 8, 8, d, 0.2);
    const auto c = support::random_map(rng, Plane::kBev, 8, 8, d, 0.3);
    for (int k : {1, 3, 5}) {
      for (auto mode : {blending::Mode::kCross, blending::Mode::kIntra}) {
        const auto got = blending::windowed_attention(q, c, p, mode, k);
        const auto& src = mode == blending::Mode::kCross ? c : q;
        const auto want =
            support::naive_window_attention(q, src, p.q->value(), p.k->value(), p.v->value(), k);
        for (std::size_t i = 0; i < got.data.size(); ++i) worst = std::max(worst, std::abs(got.data[i] - want.data[i]));
        masks_equal = masks_equal && got.mask == want.mask;
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-10 && masks_equal && t < 30.0, fmt("max deviation %.3g, %.2f s", worst, t)};
}

Outcome hungarian_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int rows = 1 + static_cast<int>(support::uniform(rng, 0, 7));
    const int cols = 1 + static_cast<int>(support::uniform(rng, 0, 7));
    CostMatrix m{rows, cols, {}};
    for (int i = 0; i < rows * cols; ++i) {
      const double c = support::uniform(rng, 0.0, 10.0);
      m.cost.push_back(trial % 2 ? std::floor(c) : c);
    }
    const auto pairs = hungarian(m);
    std::set<int> rs, cs;
    for (const auto& [r, c] : pairs) rs.insert(r), cs.insert(c);
    const bool valid = static_cast<int>(pairs.size()) == std::min(rows, cols) && rs.size() == pairs.size() &&
                       cs.size() == pairs.size();
    if (!valid || std::abs(assignment_cost(m, pairs) - support::brute_force_assignment(m)) > 1e-9) ++mismatches;
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && t < 60.0, fmt("%.0f mismatches in 1000 trials, %.2f s", mismatches, t)};
}

Box3D bev_box(double x, double z, double w, double l, double yaw) {
  Box3D b;
  b.x = x;
  b.z = z;
  b.w = w;
  b.l = l;
  b.h = 1.5;
  b.y = -0.75;
  b.yaw = yaw;
  return b;
}

Outcome iou_oracle() {
  std::mt19937_64 rng(404);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const auto rand = [&] {
      return bev_box(support::uniform(rng, -3, 3), support::uniform(rng, -3, 3), support::uniform(rng, 0.3, 4.0),
                     support::uniform(rng, 0.3, 5.0), support::uniform(rng, -M_PI, M_PI));
    };
    const auto a = rand(), b = rand();
    worst = std::max(worst, std::abs(evalkit::bev_iou(a, b) - support::raster_bev_iou(a, b, 400)));
  }
  const auto u = bev_box(0, 10, 1, 1, 0);
  const double closed = std::max({std::abs(evalkit::bev_iou(u, u) - 1.0),
                                  std::abs(evalkit::bev_iou(u, bev_box(5, 10, 1, 1, 0))),
                                  std::abs(evalkit::bev_iou(u, bev_box(0.5, 10, 1, 1, 0)) - 1.0 / 3.0)});
  return {worst < 1e-2 && closed < 1e-9, fmt("raster max deviation %.3g, closed-form max error %.3g", worst, closed)};
}

/// Random frames whose predictions are exact label copies (hits), repeated
/// copies (misses) or boxes at least 8 m from every label (misses), so the
/// hit sequence per (class, bin) is known without running a matcher.
Outcome ap_oracle() {
  std::mt19937_64 rng(505);
  const evalkit::EvalConfig cfg;
  double worst = 0.0;
  bool perfect_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<evalkit::FrameDetections> frames(1 + trial % 3);
    struct Pred {
      double score;
      ObjectClass cls;
      std::size_t bin;
      int label;  // global label id for copies, -1 otherwise
    };
    std::vector<Pred> oracle;
    std::map<std::pair<int, std::size_t>, std::size_t> label_count;
    int next_label = 0;
    for (auto& f : frames) {
      const int n = 1 + static_cast<int>(support::uniform(rng, 0, 6));
      std::vector<int> ids;
      for (int i = 0; i < n; ++i) {
        const auto cls = support::uniform(rng, 0, 1) < 0.5 ? ObjectClass::kCar : ObjectClass::kPedestrian;
        // Labels on a 10 m lattice, never overlapping.
        Box3D b = bev_box(-20.0 + 10.0 * i, 5.0 + 12.0 * i + support::uniform(rng, 0, 2), 1.8, 4.0,
                          support::uniform(rng, -1, 1));
        b.cls = cls;
        f.labels.push_back(b);
        ids.push_back(next_label++);
        if (auto bin = cfg.bin_of(b.bev_range())) ++label_count[{static_cast<int>(cls), *bin}];
      }
      const int preds = static_cast<int>(support::uniform(rng, 0, 9));
      for (int i = 0; i < preds; ++i) {
        const double score = support::uniform(rng, 0.0, 1.0);
        Box3D p;
        int label = -1;
        if (support::uniform(rng, 0, 1) < 0.6) {
          const int j = static_cast<int>(support::uniform(rng, 0, n));
          p = f.labels[j];
          label = ids[j];
        } else {
          p = bev_box(support::uniform(rng, -25, 25), support::uniform(rng, 0, 79), 1.8, 4.0, 0.0);
          p.cls = support::uniform(rng, 0, 1) < 0.5 ? ObjectClass::kCar : ObjectClass::kPedestrian;
          bool far = true;
          for (const auto& l : f.labels) far = far && std::hypot(l.x - p.x, l.z - p.z) > 8.0;
          if (!far) continue;
        }
        p.score = score;
        f.predictions.push_back(p);
        if (auto bin = cfg.bin_of(p.bev_range())) oracle.push_back({score, p.cls, *bin, label});
      }
    }
    const auto got = evalkit::compute_ap(frames, cfg);
    for (const auto& r : got) {
      std::vector<Pred> ps;
      for (const auto& p : oracle)
        if (p.cls == r.cls && p.bin == r.bin) ps.push_back(p);
      std::sort(ps.begin(), ps.end(), [](const Pred& a, const Pred& b) { return a.score > b.score; });
      std::set<int> used;
      std::vector<bool> hits;
      for (const auto& p : ps) hits.push_back(p.label >= 0 && used.insert(p.label).second);
      const std::size_t labels = label_count[{static_cast<int>(r.cls), r.bin}];
      worst = std::max(worst, std::abs(r.ap - support::brute_force_ap(hits, labels, cfg.recall_positions)));
      if (labels != r.labels) worst = 1.0;
    }
    if (got.size() != label_count.size()) worst = 1.0;

    auto perfect = frames;
    for (auto& f : perfect) f.predictions = f.labels;
    for (const auto& r : evalkit::compute_ap(perfect, cfg)) perfect_ok = perfect_ok && r.ap == 1.0;
  }
  return {worst < 1e-12 && perfect_ok,
          fmt("max deviation %.3g, perfect detector AP ", worst) + (perfect_ok ? "1.0" : "below 1.0")};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::size_t checked = 0, failed = 0;
  double worst = 0.0;
  std::set<std::string> covered;
  const std::vector<std::pair<std::string, std::uint64_t>> cases{{"fog@0.03", 11}, {"clear_day", 12}};
  for (const auto& [condition, seed] : cases) {
    const auto rig = simkit::RigConfig::toy();
    auto cfg = model::ModelConfig::desk();
    cfg.encoder.channels = 4;
    cfg.decoder.layers = 2;
    cfg.proposals = 4;
    simkit::SceneConfig sc;
    sc.cars = 1;
    sc.pedestrians = 1;
    sc.x_min = -2.0;
    sc.x_max = 2.0;
    sc.z_min = 2.0;
    sc.z_max = 5.5;
    sc.max_overlap_iou = 0.0;
    const auto scene = simkit::generate_scene(sc, seed, simkit::Condition::parse(condition));
    const auto prepared = model::prepare_scene(scene, simkit::simulate(scene, rig), rig, cfg);
    model::Model m(cfg, seed);
    const auto analytic = training::scene_gradient(prepared, m);
    for (const auto& p : m.registry()) {
      double mag = 0.0;
      for (double g : analytic.grads[p->index()]) mag = std::max(mag, std::abs(g));
      if (mag > 1e-8) covered.insert(p->name());
    }
    const auto r = support::gradient_check(
        m.registry(), [&] { return training::scene_gradient(prepared, m).loss.total; }, analytic.grads, 0.05,
        seed);
    checked += r.checked;
    failed += r.failed;
    worst = std::max(worst, r.worst);
  }
  const auto has = [&](const std::string& prefix) {
    for (const auto& n : covered)
      if (n.rfind(prefix, 0) == 0 || n.find(prefix) != std::string::npos) return true;
    return false;
  };
  const bool coverage = has("enc") && has(".gate") && has("fuse.log_sigma") && has("fuse.gamma") && has("heat") &&
                        has("dec") && has("head");
  const double t = seconds_since(t0);
  return {failed == 0 && checked > 200 && coverage && t < 600.0,
          fmt("%.0f entries checked, %.0f failed, worst relative error %.3g", checked, failed, worst) +
              fmt(", %.1f s", t) + (coverage ? "" : ", missing gradient coverage")};
}

Outcome distance_weight_semantics() {
  bool ok = bevfusion::distance_weight(0.0, bevfusion::kInitialSigma) == 1.0;
  double prev = 1.0;
  for (int i = 1; i <= 2000; ++i) {
    const double w = bevfusion::distance_weight(0.05 * i, bevfusion::kInitialSigma);
    ok = ok && w < prev;
    prev = w;
  }
  ad::ParamRegistry reg;
  std::mt19937_64 rng(707);
  auto p = bevfusion::DistanceWeightParams::create(reg, 6, rng);
  p.set_identity();
  const auto spec = geometry::BEVGridSpec::desk_lidar();
  const auto lidar = support::random_map(rng, Plane::kBev, spec.nz(), spec.nx(), 6);
  const auto radar = support::random_map(rng, Plane::kBev, spec.nz(), spec.nx(), 6);
  const auto fused = bevfusion::fuse_lidar_radar(lidar, radar, spec, p, bevfusion::FusionConfig{});
  std::size_t outside = 0;
  for (std::size_t i = 0; i < fused.data.size(); ++i) {
    outside += fused.data[i] < std::min(lidar.data[i], radar.data[i]) - 1e-14 ||
               fused.data[i] > std::max(lidar.data[i], radar.data[i]) + 1e-14;
  }
  return {ok && outside == 0, fmt("%.0f of %.0f fused values outside [lidar, radar]", outside,
                                  static_cast<double>(fused.data.size()))};
}

struct FogMetrics {
  double ped_mid_clear = 0.0;
  double ped_mid_fog = 0.0;
  double far_mean = 0.0;

  double relative_drop() const {
    return ped_mid_clear > 0.0 ? (ped_mid_clear - ped_mid_fog) / ped_mid_clear : std::nan("");
  }
};

FogMetrics fog_metrics(const std::vector<evalkit::ReportRow>& rows) {
  FogMetrics m;
  double far = 0.0;
  int n_far = 0;
  for (const auto& r : rows) {
    if (r.mode != evalkit::IouMode::k3D) continue;
    if (r.cls == ObjectClass::kPedestrian && r.bin == "30-50") {
      if (r.condition == "fog@0") m.ped_mid_clear = r.ap;
      if (r.condition == "fog@0.05") m.ped_mid_fog = r.ap;
    }
    if (r.bin == "50-80") far += r.ap, ++n_far;
  }
  m.far_mean = n_far ? far / n_far : 0.0;
  return m;
}

/// Trains every variant for every seed on the fog suite. Indexed
/// [variant][seed].
std::map<std::string, std::vector<FogMetrics>> fog_suite(const std::vector<std::string>& variants,
                                                         const std::vector<std::uint64_t>& seeds, int jobs,
                                                         double& elapsed) {
  const auto t0 = Clock::now();
  ex::ExperimentConfig cfg = ex::parse_config(R"(
[dataset]
scenes = 200
conditions = fog@0, fog@0.02, fog@0.05
[test]
scenes = 60
conditions = fog@0, fog@0.02, fog@0.05
pairing = all
[train]
steps = 1000
batch_size = 8
)");
  const auto rig = ex::rig_named(cfg.dataset.rig);
  std::map<std::string, std::vector<FogMetrics>> out;
  for (const auto seed : seeds) {
    cfg.seed = seed;
    const auto train = ex::build_dataset(cfg.dataset, cfg.split_seed(0), jobs);
    const auto test = ex::build_dataset(cfg.test, cfg.split_seed(1), jobs);
    for (const auto& v : variants) {
      const auto rows = ex::train_and_evaluate(cfg, ex::apply_variant(cfg.model, v), train, test, rig, jobs);
      const auto m = fog_metrics(rows);
      out[v].push_back(m);
      std::printf("  seed %llu %-11s ped AP(30-50) fog@0 %.3f fog@0.05 %.3f drop %.3f, far-bin mean AP %.3f\n",
                  static_cast<unsigned long long>(seed), v.c_str(), m.ped_mid_clear, m.ped_mid_fog,
                  m.relative_drop(), m.far_mean);
      std::fflush(stdout);
    }
  }
  elapsed = seconds_since(t0);
  return out;
}

Outcome robustness(const std::map<std::string, std::vector<FogMetrics>>& suite, double elapsed) {
  const auto& cl = suite.at("CL");
  const auto& full = suite.at("CGLR");
  int wins = 0;
  std::string detail;
  for (std::size_t s = 0; s < cl.size(); ++s) {
    const bool win = full[s].relative_drop() < cl[s].relative_drop();
    wins += win;
    detail += (s ? "; " : "") + fmt("CGLR %.3f vs CL %.3f", full[s].relative_drop(), cl[s].relative_drop());
  }
  const bool majority = 2 * wins > static_cast<int>(cl.size());
  return {majority && elapsed < 4 * 3600.0,
          "relative drop " + detail + fmt(", %.0f of %.0f seeds", wins, static_cast<double>(cl.size()))};
}

Outcome ablation_direction(const std::map<std::string, std::vector<FogMetrics>>& suite) {
  const auto mean_delta = [&](const std::string& on, const std::string& off) {
    double d = 0.0;
    const auto& a = suite.at(on);
    const auto& b = suite.at(off);
    for (std::size_t s = 0; s < a.size(); ++s) d += (a[s].far_mean - b[s].far_mean) / a.size();
    return d;
  };
  const double gamma = mean_delta("CGLR", "CGLR-gamma");
  const double proposals = mean_delta("CGLR", "CGLR/L");
  return {gamma >= 0.0 && proposals >= 0.0,
          fmt("far-bin AP change: gamma weighting %+.4f, multimodal proposals %+.4f", gamma, proposals)};
}

Outcome overfit_sanity() {
  const auto rig = simkit::RigConfig::desk();
  const auto cfg = model::ModelConfig::desk();
  simkit::SceneConfig sc;
  sc.cars = 1;
  sc.pedestrians = 0;
  sc.z_max = 28.0;
  const auto scene = simkit::generate_scene(sc, 300, simkit::Condition::parse("fog@0.01"));
  const std::vector<model::PreparedScene> scenes{
      model::prepare_scene(scene, simkit::simulate(scene, rig), rig, cfg)};
  model::Model m(cfg, 7);
  training::TrainConfig tc;
  tc.steps = 300;
  tc.batch_size = 1;
  training::train(m, scenes, tc);
  const double iou = model::matched_bev_iou(scenes[0], m);
  // Evaluate the checkpoint as written to disk.
  const model::Model restored = checkpoint::deserialize(checkpoint::serialize(m));
  const auto frames = ex::detect_all(scenes, restored, 1);
  double car_near = -1.0;
  for (const auto& r : evalkit::compute_ap(frames, evalkit::EvalConfig{})) {
    if (r.cls == ObjectClass::kCar && r.bin == 0) car_near = r.ap;
  }
  return {iou > 0.5 && car_near == 1.0, fmt("matched BEV IoU %.3f, car AP(0-30) %.3f", iou, car_near)};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sensorfuse_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  }
  return files;
}

Outcome determinism() {
  const auto cfg = ex::parse_config(R"(
[experiment]
seed = 77
[dataset]
scenes = 4
conditions = clear_day, night, fog@0.03, snow@0.01
[model]
channels = 8
decoder_layers = 2
proposals = 16
[train]
steps = 8
batch_size = 3
)");
  std::vector<std::map<std::string, std::string>> runs;
  for (int jobs : {1, 1, 2, 4}) {
    const auto root = scratch("det_" + std::to_string(runs.size()));
    ex::cmd_generate(cfg, root / "data", 0, jobs);
    ex::cmd_train(cfg, root / "data", root / "train", jobs);
    ex::cmd_eval(cfg, root / "train" / "model.ckpt", root / "data", root / "eval", jobs, true);
    runs.push_back(snapshot(root));
  }
  std::size_t differing = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) differing += runs[r] != runs[0];
  return {differing == 0 && !runs[0].empty(),
          fmt("%.0f files per run, %.0f of 3 repeat runs differ", static_cast<double>(runs[0].size()),
              static_cast<double>(differing))};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %s: %s (%s)\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "geometry round trip", geometry_round_trip);
  report(2, "windowed attention oracle", attention_oracle);
  report(3, "Hungarian oracle", hungarian_oracle);
  report(4, "BEV IoU oracle", iou_oracle);
  report(5, "AP oracle", ap_oracle);
  report(6, "end-to-end gradient check", gradient_suite);
  report(7, "distance weighting semantics", distance_weight_semantics);

  std::map<std::string, std::vector<FogMetrics>> suite;
  double elapsed = 0.0;
  std::string suite_error;
  try {
    suite = fog_suite({"CL", "CGLR", "CGLR-gamma", "CGLR/L"}, {11, 12, 13}, 1, elapsed);
  } catch (const std::exception& e) {
    suite_error = e.what();
  }
  const auto from_suite = [&](const std::function<Outcome()>& fn) {
    return [&, fn] { return suite_error.empty() ? fn() : Outcome{false, "fog suite failed: " + suite_error}; };
  };
  report(8, "fog robustness ordering", from_suite([&] { return robustness(suite, elapsed); }));
  report(9, "ablation direction", from_suite([&] { return ablation_direction(suite); }));
  report(10, "single-scene overfit", overfit_sanity);
  report(11, "byte-identical commands", determinism);
  return failures == 0 ? 0 : 1;
}
