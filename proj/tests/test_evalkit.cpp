#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sensorfuse/errors.hpp"
#include "sensorfuse/evalkit.hpp"
#include "support.hpp"

using namespace sensorfuse;
using namespace sensorfuse::evalkit;

namespace {

Box3D box(double x, double z, double w, double l, double yaw = 0.0, ObjectClass cls = ObjectClass::kCar,
          double score = 1.0) {
  Box3D b;
  b.x = x;
  b.z = z;
  b.w = w;
  b.l = l;
  b.h = 1.5;
  b.y = -0.75;
  b.yaw = yaw;
  b.cls = cls;
  b.score = score;
  return b;
}

Box3D random_box(std::mt19937_64& rng, double span = 3.0) {
  return box(support::uniform(rng, -span, span), support::uniform(rng, -span, span),
             support::uniform(rng, 0.3, 4.0), support::uniform(rng, 0.3, 5.0),
             support::uniform(rng, -3.14, 3.14));
}

}  // namespace

TEST(BevIou, ClosedForms) {
  const auto a = box(0, 10, 1, 1);
  EXPECT_NEAR(bev_iou(a, a), 1.0, 1e-9);
  EXPECT_NEAR(bev_iou(a, box(5, 10, 1, 1)), 0.0, 1e-9);
  EXPECT_NEAR(bev_iou(a, box(0.5, 10, 1, 1)), 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(bev_iou(a, box(0, 10, 1, 1, M_PI / 2)), 1.0, 1e-9);
  // Unit square against the same square rotated by 45 degrees.
  const double inter = 2.0 * (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(bev_iou(a, box(0, 10, 1, 1, M_PI / 4)), inter / (2.0 - inter), 1e-9);
}

TEST(BevIou, MatchesRasterOracle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_box(rng), b = random_box(rng);
    EXPECT_NEAR(bev_iou(a, b), support::raster_bev_iou(a, b), 1e-2) << "pair " << i;
  }
}

TEST(BevIou, SymmetryAndRigidInvariance) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 300; ++i) {
    auto a = random_box(rng), b = random_box(rng);
    const double v = bev_iou(a, b);
    EXPECT_NEAR(v, bev_iou(b, a), 1e-12);
    EXPECT_NEAR(bev_iou(a, a), 1.0, 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    const double tx = support::uniform(rng, -50, 50), tz = support::uniform(rng, -50, 50);
    auto at = a, bt = b;
    at.x += tx;
    bt.x += tx;
    at.z += tz;
    bt.z += tz;
    EXPECT_NEAR(bev_iou(at, bt), v, 1e-9);
    const double th = support::uniform(rng, -3, 3), c = std::cos(th), s = std::sin(th);
    const auto rotate = [&](Box3D q) {
      const double x = q.x, z = q.z;
      q.x = c * x - s * z;
      q.z = s * x + c * z;
      q.yaw = wrap_yaw(q.yaw + th);
      return q;
    };
    EXPECT_NEAR(bev_iou(rotate(a), rotate(b)), v, 1e-9);
  }
}

TEST(Iou3d, ClosedForms) {
  auto a = box(1, 20, 2, 4);
  EXPECT_NEAR(iou3d(a, a), 1.0, 1e-12);
  auto b = a;
  b.y = a.y - 5.0;
  EXPECT_EQ(iou3d(a, b), 0.0);
  b.y = a.y - a.h / 2;
  EXPECT_NEAR(iou3d(a, b), 1.0 / 3.0, 1e-12);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto p = random_box(rng), q = random_box(rng);
    q.y += support::uniform(rng, -1, 1);
    EXPECT_NEAR(iou3d(p, q), iou3d(q, p), 1e-12);
    EXPECT_LE(iou3d(p, q), bev_iou(p, q) + 1e-12);
  }
}

TEST(InterpolatedAp, HandComputedExample) {
  // 3 labels, hits T F T T: precision 1 up to recall 1/3, then 3/4.
  EXPECT_NEAR(interpolated_ap({true, false, true, true}, 3, 40), (13 * 1.0 + 27 * 0.75) / 40, 1e-15);
  EXPECT_EQ(interpolated_ap({true, true}, 2, 40), 1.0);
  EXPECT_EQ(interpolated_ap({}, 4, 40), 0.0);
  EXPECT_EQ(interpolated_ap({false, false}, 4, 40), 0.0);
}

TEST(InterpolatedAp, MatchesBruteForce) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t labels = 1 + trial % 9;
    const int n = static_cast<int>(support::uniform(rng, 0, 15));
    std::vector<bool> hits;
    std::size_t tp = 0;
    for (int i = 0; i < n; ++i) {
      const bool h = tp < labels && support::uniform(rng, 0, 1) < 0.6;
      tp += h;
      hits.push_back(h);
    }
    EXPECT_NEAR(interpolated_ap(hits, labels, 40), support::brute_force_ap(hits, labels, 40), 1e-12);
  }
}

TEST(ComputeAp, HandComputedThroughMatching) {
  FrameDetections f;
  f.condition = "clear_day";
  f.labels = {box(0, 10, 2, 4), box(5, 15, 2, 4), box(-5, 20, 2, 4)};
  f.predictions = {box(0.1, 10, 2, 4, 0, ObjectClass::kCar, 0.9), box(8, 25, 2, 4, 0, ObjectClass::kCar, 0.8),
                   box(5, 15.2, 2, 4, 0, ObjectClass::kCar, 0.7), box(-5, 20, 2, 4, 0.1, ObjectClass::kCar, 0.6)};
  const auto r = compute_ap({f}, EvalConfig{});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].cls, ObjectClass::kCar);
  EXPECT_EQ(r[0].bin, 0u);
  EXPECT_EQ(r[0].labels, 3u);
  EXPECT_NEAR(r[0].ap, 0.83125, 1e-12);
}

TEST(ComputeAp, PerfectAndEmptyDetectors) {
  FrameDetections f;
  f.labels = {box(0, 10, 2, 4), box(3, 40, 2, 4), box(-1, 60, 0.6, 0.8, 0, ObjectClass::kPedestrian)};
  f.predictions = f.labels;
  for (const auto& r : compute_ap({f}, EvalConfig{})) EXPECT_EQ(r.ap, 1.0);
  EXPECT_EQ(compute_ap({f}, EvalConfig{}).size(), 3u);
  f.predictions.clear();
  for (const auto& r : compute_ap({f}, EvalConfig{})) EXPECT_EQ(r.ap, 0.0);
  EXPECT_TRUE(compute_ap({FrameDetections{}}, EvalConfig{}).empty());
}

TEST(ComputeAp, DuplicatePredictionsMatchOnce) {
  FrameDetections f;
  f.labels = {box(0, 10, 2, 4)};
  f.predictions = {box(0, 10, 2, 4, 0, ObjectClass::kCar, 0.9), box(0, 10, 2, 4, 0, ObjectClass::kCar, 0.8)};
  const auto r = compute_ap({f}, EvalConfig{});
  EXPECT_EQ(r[0].ap, 1.0);
  f.predictions[0].score = 0.7;  // duplicate now ranks first, true match second
  EXPECT_EQ(compute_ap({f}, EvalConfig{})[0].ap, 1.0);
  f.predictions.insert(f.predictions.begin(), box(9, 12, 2, 4, 0, ObjectClass::kCar, 0.95));
  EXPECT_NEAR(compute_ap({f}, EvalConfig{})[0].ap, 0.5, 1e-15);
}

namespace {

/// Labels on a sparse lattice so no prediction overlaps two labels.
std::vector<FrameDetections> random_frames(std::mt19937_64& rng, int frames, std::vector<Box3D>* unmatched) {
  std::vector<FrameDetections> out;
  for (int f = 0; f < frames; ++f) {
    FrameDetections fd;
    fd.condition = f % 2 ? "fog@0.02" : "clear_day";
    for (int i = 0; i < 8; ++i) {
      const auto cls = i % 3 == 0 ? ObjectClass::kPedestrian : ObjectClass::kCar;
      const double w = cls == ObjectClass::kCar ? 1.8 : 0.6, l = cls == ObjectClass::kCar ? 4.2 : 0.8;
      const auto lab = box(-12.0 + 8.0 * (i % 4), 6.0 + 9.0 * i + support::uniform(rng, 0, 2), w, l,
                           support::uniform(rng, -3, 3), cls);
      fd.labels.push_back(lab);
      const double u = support::uniform(rng, 0, 1);
      if (u < 0.6) {
        auto p = lab;
        p.x += support::uniform(rng, -0.4, 0.4);
        p.z += support::uniform(rng, -0.4, 0.4);
        p.score = support::uniform(rng, 0.05, 0.95);
        fd.predictions.push_back(p);
      } else if (unmatched) {
        unmatched->push_back(lab);
      }
      if (support::uniform(rng, 0, 1) < 0.3) {
        auto fp = lab;
        fp.x += 4.0;
        fp.score = support::uniform(rng, 0.05, 0.95);
        fd.predictions.push_back(fp);
      }
    }
    out.push_back(fd);
  }
  return out;
}

}  // namespace

TEST(ComputeAp, BoundedAndMonotoneUnderAddedTopPrediction) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Box3D> unmatched;
    auto frames = random_frames(rng, 1, &unmatched);
    EvalConfig cfg;
    cfg.mode = IouMode::kBev;
    const auto before = compute_ap(frames, cfg);
    for (const auto& r : before) {
      EXPECT_GE(r.ap, 0.0);
      EXPECT_LE(r.ap, 1.0);
    }
    if (unmatched.empty()) continue;
    auto extra = unmatched.front();
    extra.score = 1.0;
    frames[0].predictions.push_back(extra);
    const auto after = compute_ap(frames, cfg);
    ASSERT_EQ(before.size(), after.size());
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_GE(after[i].ap, before[i].ap - 1e-15);
  }
}

TEST(ComputeAp, BinsPartitionLabels) {
  std::mt19937_64 rng(6);
  const auto frames = random_frames(rng, 10, nullptr);
  EvalConfig cfg;
  std::size_t in_roi = 0;
  for (const auto& f : frames)
    for (const auto& l : f.labels) in_roi += l.bev_range() < 80.0;
  std::size_t binned = 0;
  for (const auto& r : compute_ap(frames, cfg)) binned += r.labels;
  EXPECT_EQ(binned, in_roi);
  EXPECT_EQ(cfg.bin_of(30.0), 1u);
  EXPECT_EQ(cfg.bin_of(29.999), 0u);
  EXPECT_FALSE(cfg.bin_of(80.0).has_value());
}

TEST(Report, OrderIndependentAndConsistentWithPerSplitAp) {
  std::mt19937_64 rng(7);
  auto frames = random_frames(rng, 12, nullptr);
  const EvalConfig cfg;
  const auto rows = report(frames, cfg);
  std::shuffle(frames.begin(), frames.end(), rng);
  EXPECT_EQ(to_csv(report(frames, cfg)), to_csv(rows));
  EXPECT_EQ(to_json(report(frames, cfg)), to_json(rows));

  std::vector<std::string> conditions;
  for (const auto& r : rows)
    if (conditions.empty() || conditions.back() != r.condition) conditions.push_back(r.condition);
  EXPECT_EQ(conditions, (std::vector<std::string>{"clear_day", "fog@0.02"}));
  for (const auto& cond : conditions) {
    std::vector<FrameDetections> split;
    for (const auto& f : frames)
      if (f.condition == cond) split.push_back(f);
    for (IouMode mode : {IouMode::k3D, IouMode::kBev}) {
      EvalConfig c = cfg;
      c.mode = mode;
      for (const auto& ap : compute_ap(split, c)) {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& r) {
          return r.condition == cond && r.cls == ap.cls && r.bin == cfg.bin_label(ap.bin) && r.mode == mode;
        });
        ASSERT_NE(it, rows.end());
        EXPECT_NEAR(it->ap, ap.ap, 1e-12);
      }
    }
  }
}

TEST(Report, CsvLayout) {
  FrameDetections f;
  f.condition = "clear_day";
  f.labels = {box(0, 10, 2, 4)};
  f.predictions = f.labels;
  const auto csv = to_csv(report({f}, EvalConfig{}));
  EXPECT_EQ(csv, "condition,class,bin,mode,ap\nclear_day,car,0-30,3D,1.000000\nclear_day,car,0-30,BEV,1.000000\n");
}

TEST(EvalConfig, Validation) {
  EvalConfig c;
  EXPECT_NO_THROW(c.validate());
  c.iou_thresholds[0] = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = EvalConfig{};
  c.bins = {{0, 30}, {20, 50}};
  EXPECT_THROW(c.validate(), ValidationError);
  c = EvalConfig{};
  c.recall_positions = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}
