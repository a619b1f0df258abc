#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sensorfuse/detector.hpp"
#include "sensorfuse/errors.hpp"
#include "sensorfuse/iou.hpp"
#include "support.hpp"

using namespace sensorfuse;
using namespace sensorfuse::detector;

namespace {

constexpr int kD = 4;

struct DeskSetup {
  ad::ParamRegistry reg;
  bevfusion::HeatmapParams heat;
  DecoderParams dec;
  geometry::BEVGridSpec spec = geometry::BEVGridSpec::desk_lidar();
  geometry::CameraModel cam;
  FeatureMap rgb, gated, lidar;

  DeskSetup(int layers, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    heat = bevfusion::HeatmapParams::create(reg, kD, rng);
    dec = DecoderParams::create(reg, kD, layers, rng);
    cam.width = 32;
    cam.height = 12;
    cam.fx = cam.fy = 16.0;
    cam.cx = 16.0;
    cam.cy = 6.0;
    rgb = support::random_map(rng, Plane::kCamera, 12, 32, kD, 0.2);
    gated = support::random_map(rng, Plane::kCamera, 12, 32, kD, 0.2);
    lidar = support::random_map(rng, Plane::kBev, spec.nz(), spec.nx(), kD, 0.5);
  }

  bevfusion::ProposalSet proposals(std::uint64_t seed, std::size_t k = 10) const {
    std::mt19937_64 rng(seed);
    return bevfusion::extract_proposals(support::random_map(rng, Plane::kBev, spec.nz(), spec.nx(), kD), heat,
                                        spec, k);
  }
};

Prediction perfect_prediction(const Box3D& label) {
  Prediction p;
  p.box = label;
  p.probs.fill(0.0);
  p.probs[static_cast<int>(label.cls)] = 1.0;
  return p;
}

Box3D make_box(double x, double z, double yaw, ObjectClass cls = ObjectClass::kCar) {
  Box3D b;
  b.x = x;
  b.y = -0.8;
  b.z = z;
  b.w = 1.8;
  b.l = 4.2;
  b.h = 1.6;
  b.yaw = yaw;
  b.cls = cls;
  return b;
}

}  // namespace

TEST(Decode, ZeroHeadsGiveUnitBoxesAtCellCentres) {
  DeskSetup s(2, 1);
  s.dec.zero_heads();
  const auto props = s.proposals(2);
  ASSERT_FALSE(props.proposals.empty());
  DecoderConfig cfg;
  cfg.layers = 2;
  const auto boxes = decode(props, s.rgb, s.gated, s.lidar, s.cam, s.cam, s.dec, cfg);
  ASSERT_EQ(boxes.size(), props.proposals.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    EXPECT_EQ(boxes[i].x, props.proposals[i].x);
    EXPECT_EQ(boxes[i].z, props.proposals[i].z);
    EXPECT_EQ(boxes[i].y, cfg.anchor_y);
    EXPECT_EQ(boxes[i].w, 1.0);
    EXPECT_EQ(boxes[i].l, 1.0);
    EXPECT_EQ(boxes[i].h, 1.0);
    EXPECT_EQ(boxes[i].yaw, 0.0);
    EXPECT_NEAR(boxes[i].score, 1.0 / 3.0, 1e-15);
  }
}

TEST(Decode, LayerCountChangesOutputAndZeroLayersRejected) {
  DeskSetup s(4, 3);
  const auto props = s.proposals(4);
  DecoderConfig one, four;
  one.layers = 1;
  four.layers = 4;
  const auto a = decode(props, s.rgb, s.gated, s.lidar, s.cam, s.cam, s.dec, one);
  const auto b = decode(props, s.rgb, s.gated, s.lidar, s.cam, s.cam, s.dec, four);
  ASSERT_EQ(a.size(), b.size());
  bool differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) differ = differ || !(a[i] == b[i]);
  EXPECT_TRUE(differ);

  DecoderConfig zero;
  zero.layers = 0;
  EXPECT_THROW(decode(props, s.rgb, s.gated, s.lidar, s.cam, s.cam, s.dec, zero), ContractViolation);
  ad::ParamRegistry reg;
  std::mt19937_64 rng(1);
  EXPECT_THROW(DecoderParams::create(reg, kD, 0, rng), ValidationError);
}

TEST(Decode, EmptyProposalsGiveNoBoxes) {
  DeskSetup s(1, 5);
  DecoderConfig cfg;
  cfg.layers = 1;
  EXPECT_TRUE(decode(bevfusion::ProposalSet{}, s.rgb, s.gated, s.lidar, s.cam, s.cam, s.dec, cfg).empty());
}

TEST(Decode, BoxesSatisfyInvariants) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DeskSetup s(2, 10 + seed);
    for (auto* p : {s.dec.reg_w, s.dec.reg_b})
      for (double& x : p->value()) x *= 20.0;
    DecoderConfig cfg;
    cfg.layers = 2;
    const auto props = s.proposals(seed);
    const auto boxes = decode(props, s.rgb, s.gated, s.lidar, s.cam, s.cam, s.dec, cfg);
    EXPECT_EQ(boxes.size(), props.proposals.size());
    for (const auto& b : boxes) EXPECT_NO_THROW(b.validate());
  }
}

TEST(Decode, UniformAttentionMatchesHandComputation) {
  // One proposal at the centre of a 5 x 5 BEV grid; the 3 x 3 camera planes
  // are fully covered by the image window.
  geometry::BEVGridSpec spec;
  spec.x_min = -2.5;
  spec.x_max = 2.5;
  spec.z_min = 5.0;
  spec.z_max = 10.0;
  spec.cell_x = spec.cell_z = 1.0;
  geometry::CameraModel cam;
  cam.width = cam.height = 3;
  cam.fx = cam.fy = 1.0;
  cam.cx = cam.cy = 1.0;

  ad::ParamRegistry reg;
  std::mt19937_64 rng(7);
  auto dec = DecoderParams::create(reg, kD, 1, rng);
  auto& layer = dec.layers[0];
  for (auto* a : {&layer.lidar, &layer.rgb, &layer.gated}) ad::init_constant(*a->k, 0.0);
  for (auto* p : {layer.ffn_b1, layer.ffn_b2, dec.cls_b, dec.reg_b})
    for (double& x : p->value()) x = support::uniform(rng, -0.5, 0.5);

  const auto lidar = support::random_map(rng, Plane::kBev, 5, 5, kD);
  const auto rgb = support::random_map(rng, Plane::kCamera, 3, 3, kD);
  const auto gated = support::random_map(rng, Plane::kCamera, 3, 3, kD);
  const auto query = support::random_matrix(rng, 1, kD);

  ad::Tape tape(false);
  bevfusion::TapeProposals tp;
  bevfusion::Proposal p;
  p.cell = 12;
  p.x = 0.0;
  p.z = 7.5;
  p.query = query;
  tp.set.proposals.push_back(p);
  tp.queries = tape.constant(1, kD, query);
  const auto ml = MapVar::from(tape, lidar), mr = MapVar::from(tape, rgb), mg = MapVar::from(tape, gated);
  DecoderConfig cfg;
  cfg.layers = 1;
  cfg.bev_window = 3;
  cfg.image_window = 3;
  const auto out = decode(tp, DecoderMaps{&mr, &mg, &ml, cam, cam}, dec, cfg);

  std::vector<double> q = query;
  const auto add_mean_value = [&](const FeatureMap& m, const std::vector<int>& cells, const ad::Param& wv) {
    const auto v = support::project(m.data, m.cells(), kD, wv.value(), kD);
    for (int c = 0; c < kD; ++c) {
      double s = 0.0;
      for (int cell : cells) s += v[cell * kD + c];
      q[c] += s / static_cast<double>(cells.size());
    }
  };
  add_mean_value(lidar, {6, 7, 8, 11, 12, 13, 16, 17, 18}, *layer.lidar.v);
  add_mean_value(rgb, {0, 1, 2, 3, 4, 5, 6, 7, 8}, *layer.rgb.v);
  add_mean_value(gated, {0, 1, 2, 3, 4, 5, 6, 7, 8}, *layer.gated.v);
  std::vector<double> h(2 * kD);
  for (int j = 0; j < 2 * kD; ++j) {
    double s = layer.ffn_b1->value()[j];
    for (int c = 0; c < kD; ++c) s += layer.ffn_w1->value()[j * kD + c] * q[c];
    h[j] = std::tanh(s);
  }
  std::vector<double> q2 = q;
  for (int c = 0; c < kD; ++c) {
    double s = layer.ffn_b2->value()[c];
    for (int j = 0; j < 2 * kD; ++j) s += layer.ffn_w2->value()[c * 2 * kD + j] * h[j];
    q2[c] += s;
  }
  const auto head = [&](const ad::Param& w, const ad::Param& b, int rows, std::span<const double> got) {
    for (int r = 0; r < rows; ++r) {
      double s = b.value()[r];
      for (int c = 0; c < kD; ++c) s += w.value()[r * kD + c] * q2[c];
      EXPECT_NEAR(got[r], s, 1e-12);
    }
  };
  head(*dec.cls_w, *dec.cls_b, kClassLogits, out.cls_logits.value());
  head(*dec.reg_w, *dec.reg_b, kRegParams, out.reg.value());
}

TEST(RegressionTarget, RoundTripsThroughDecode) {
  const DecoderConfig cfg;
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    Box3D b = make_box(support::uniform(rng, -10, 10), support::uniform(rng, 5, 70),
                       support::uniform(rng, -3.1, 3.1));
    const std::array<double, 2> anchor{std::floor(b.x) + 0.5, std::floor(b.z) + 0.5};
    const auto t = regression_target(b, anchor, cfg);
    const std::array<double, kClassLogits> logits{5.0, 0.0, 0.0};
    const auto p = decode_prediction(logits, t, anchor, cfg);
    EXPECT_NEAR(p.box.x, b.x, 1e-12);
    EXPECT_NEAR(p.box.y, b.y, 1e-12);
    EXPECT_NEAR(p.box.z, b.z, 1e-12);
    EXPECT_NEAR(p.box.w, b.w, 1e-12);
    EXPECT_NEAR(p.box.l, b.l, 1e-12);
    EXPECT_NEAR(p.box.h, b.h, 1e-12);
    EXPECT_NEAR(p.box.yaw, b.yaw, 1e-12);
    EXPECT_EQ(p.box.cls, ObjectClass::kCar);
  }
}

TEST(HungarianMatch, Examples) {
  const LossWeights w;
  const Box3D label = make_box(1.0, 20.0, 0.3);
  const std::vector<Prediction> one{perfect_prediction(label)};
  const auto cost = matching_cost(one, {label}, w);
  EXPECT_NEAR(cost.at(0, 0), 0.0, 1e-12);
  const auto m = hungarian_match(one, {label}, w);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0], std::make_pair(0, 0));
  EXPECT_TRUE(hungarian_match(one, {}, w).empty());
  EXPECT_TRUE(hungarian_match({}, {label}, w).empty());
}

TEST(HungarianMatch, PrefersNearbyPrediction) {
  const LossWeights w;
  const std::vector<Box3D> labels{make_box(0, 10, 0), make_box(5, 30, 0)};
  std::vector<Prediction> preds{perfect_prediction(make_box(5.2, 30.1, 0.1)),
                                perfect_prediction(make_box(-4, 50, 0)),
                                perfect_prediction(make_box(0.1, 9.8, 0))};
  const auto m = hungarian_match(preds, labels, w);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0], std::make_pair(0, 1));
  EXPECT_EQ(m[1], std::make_pair(2, 0));
}

namespace {

struct Heads {
  std::vector<double> logits, reg;
  std::vector<std::array<double, 2>> anchors;
};

/// Heads that reproduce `labels` exactly with saturated class logits; extra
/// predictions saturate on the no-object logit.
Heads perfect_heads(const std::vector<Box3D>& labels, int extra, const DecoderConfig& cfg, double margin) {
  Heads h;
  for (const auto& l : labels) {
    const std::array<double, 2> a{std::floor(l.x) + 0.5, std::floor(l.z) + 0.5};
    h.anchors.push_back(a);
    const auto t = regression_target(l, a, cfg);
    h.reg.insert(h.reg.end(), t.begin(), t.end());
    for (int c = 0; c < kClassLogits; ++c) h.logits.push_back(c == static_cast<int>(l.cls) ? margin : -margin);
  }
  for (int i = 0; i < extra; ++i) {
    h.anchors.push_back({0.5, 0.5});
    for (int c = 0; c < kRegParams; ++c) h.reg.push_back(0.0);
    for (int c = 0; c < kClassLogits; ++c) h.logits.push_back(c == kNoObject ? margin : -margin);
  }
  return h;
}

}  // namespace

TEST(ComputeLoss, PerfectPredictionsGiveZero) {
  const DecoderConfig cfg;
  const std::vector<Box3D> labels{make_box(1.3, 12.2, 0.4), make_box(-3.1, 40.7, -2.0, ObjectClass::kPedestrian)};
  const auto h = perfect_heads(labels, 2, cfg, 40.0);
  const auto l = compute_loss(h.logits, h.reg, h.anchors, labels, {{0, 0}, {1, 1}}, LossWeights{}, cfg);
  EXPECT_EQ(l.reg, 0.0);
  EXPECT_NEAR(l.iou, 0.0, 1e-12);
  EXPECT_LT(l.cls, 1e-30);
  EXPECT_LT(l.total, 1e-12);
  EXPECT_GE(l.total, 0.0);
  // Away from saturation the loss is strictly positive.
  const auto soft = perfect_heads(labels, 2, cfg, 1.0);
  EXPECT_GT(compute_loss(soft.logits, soft.reg, soft.anchors, labels, {{0, 0}, {1, 1}}, LossWeights{}, cfg).total,
            0.0);
}

TEST(ComputeLoss, DoublingTermWeightsDoublesTotal) {
  const DecoderConfig cfg;
  std::mt19937_64 rng(9);
  const std::vector<Box3D> labels{make_box(1.3, 12.2, 0.4), make_box(-3.1, 40.7, -2.0)};
  const int n = 4;
  const auto logits = support::random_matrix(rng, n, kClassLogits, 2.0);
  const auto reg = support::random_matrix(rng, n, kRegParams, 1.0);
  std::vector<std::array<double, 2>> anchors{{1.5, 12.5}, {-3.5, 40.5}, {0.5, 20.5}, {4.5, 8.5}};
  const std::vector<std::pair<int, int>> assignment{{0, 0}, {2, 1}};
  LossWeights w;
  const auto a = compute_loss(logits, reg, anchors, labels, assignment, w, cfg);
  w.cls *= 2;
  w.reg *= 2;
  w.iou *= 2;
  const auto b = compute_loss(logits, reg, anchors, labels, assignment, w, cfg);
  EXPECT_NEAR(b.total, 2 * a.total, 1e-12);
  EXPECT_EQ(a.cls, b.cls);
  EXPECT_EQ(a.reg, b.reg);
  EXPECT_EQ(a.iou, b.iou);
  EXPECT_GT(a.total, 0.0);
}

TEST(ComputeLoss, RejectsInvalidAssignment) {
  const DecoderConfig cfg;
  const std::vector<Box3D> labels{make_box(1, 10, 0), make_box(2, 20, 0)};
  const auto h = perfect_heads(labels, 1, cfg, 3.0);
  const LossWeights w;
  EXPECT_THROW(compute_loss(h.logits, h.reg, h.anchors, labels, {{0, 0}, {0, 1}}, w, cfg), ContractViolation);
  EXPECT_THROW(compute_loss(h.logits, h.reg, h.anchors, labels, {{0, 1}, {1, 1}}, w, cfg), ContractViolation);
  EXPECT_THROW(compute_loss(h.logits, h.reg, h.anchors, labels, {{3, 0}}, w, cfg), ContractViolation);
  EXPECT_THROW(compute_loss(h.logits, h.reg, h.anchors, labels, {{0, 2}}, w, cfg), ContractViolation);
  EXPECT_THROW(compute_loss(h.logits, std::span<const double>(h.reg).first(3), h.anchors, labels, {}, w, cfg),
               ShapeError);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.reg = -1.0;
  EXPECT_THROW(w.validate(), ValidationError);
  w = LossWeights{};
  w.cls = w.reg = w.iou = 0.0;
  EXPECT_THROW(w.validate(), ValidationError);
}
