#include "sensorfuse/detector.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sensorfuse/blending.hpp"
#include "sensorfuse/errors.hpp"
#include "sensorfuse/iou.hpp"

namespace sensorfuse::detector {

namespace {

constexpr double kYawEps = 1e-12;

DecoderParams::Attention make_attention(ad::ParamRegistry& reg, const std::string& prefix, int d,
                                        std::mt19937_64& rng) {
  DecoderParams::Attention a;
  a.q = &reg.add(prefix + ".q", d, d);
  a.k = &reg.add(prefix + ".k", d, d);
  a.v = &reg.add(prefix + ".v", d, d);
  ad::init_xavier(*a.q, rng);
  ad::init_xavier(*a.k, rng);
  ad::init_xavier(*a.v, rng);
  return a;
}

ad::Windows bev_windows(const std::vector<std::array<double, 2>>& anchors,
                        const std::vector<int>& cells, const MapVar& map, int k) {
  const int r = k / 2;
  ad::Windows w;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const int row = cells[i] / map.cols, col = cells[i] % map.cols;
    for (int rr = std::max(0, row - r); rr <= std::min(map.rows - 1, row + r); ++rr)
      for (int cc = std::max(0, col - r); cc <= std::min(map.cols - 1, col + r); ++cc)
        if (map.mask[rr * map.cols + cc]) w.push(rr * map.cols + cc);
    w.finish_row();
  }
  return w;
}

ad::Windows image_windows(const std::vector<std::array<double, 2>>& anchors,
                          const geometry::CameraModel& cam, const MapVar& map, int k,
                          double center_height) {
  if (map.rows != cam.height || map.cols != cam.width) {
    throw ShapeError("decode: camera feature map does not match camera");
  }
  const int r = k / 2;
  ad::Windows w;
  for (const auto& a : anchors) {
    const auto p = geometry::project_point(cam, {a[0], center_height, a[1]});
    if (p.in_frustum) {
      const int u = std::clamp(static_cast<int>(std::lround(p.u)), 0, cam.width - 1);
      const int v = std::clamp(static_cast<int>(std::lround(p.v)), 0, cam.height - 1);
      for (int vv = std::max(0, v - r); vv <= std::min(map.rows - 1, v + r); ++vv)
        for (int uu = std::max(0, u - r); uu <= std::min(map.cols - 1, u + r); ++uu)
          if (map.mask[vv * map.cols + uu]) w.push(vv * map.cols + uu);
    }
    w.finish_row();
  }
  return w;
}

ad::Var attend(ad::Var q, const MapVar& map, const DecoderParams::Attention& a,
               const ad::Windows& windows, ad::Var fallback) {
  ad::Tape& tape = q.tape();
  return ad::window_attention(ad::matmul_nt(q, tape.param(*a.q)),
                              ad::matmul_nt(map.data, tape.param(*a.k)),
                              ad::matmul_nt(map.data, tape.param(*a.v)), fallback, windows);
}

using D6 = Dual<6>;

/// BEV IoU between the box decoded from `reg` and `label`, with derivatives
/// w.r.t. regression entries 0, 2, 3, 4, 6, 7.
D6 matched_iou(std::span<const double> reg, const std::array<double, 2>& anchor,
               const Box3D& label) {
  iou::BevRect<D6> p{D6::variable(anchor[0] + reg[0], 0), D6::variable(anchor[1] + reg[2], 1),
                     exp(D6::variable(reg[3], 2)), exp(D6::variable(reg[4], 3)), D6(0.0)};
  if (reg[6] * reg[6] + reg[7] * reg[7] > kYawEps) {
    p.yaw = atan2(D6::variable(reg[6], 4), D6::variable(reg[7], 5));
  }
  const iou::BevRect<D6> l{D6(label.x), D6(label.z), D6(label.w), D6(label.l), D6(label.yaw)};
  return iou::bev_iou(p, l);
}

constexpr std::array<int, 6> kIouSlots{0, 2, 3, 4, 6, 7};

/// sum over matches of (1 - IoU), divided by the number of matches.
ad::Var iou_term(ad::Var reg, const std::vector<std::pair<int, int>>& pairs,
                 const std::vector<std::array<double, 2>>& anchors,
                 const std::vector<Box3D>& labels) {
  const auto rv = reg.value();
  const double norm = 1.0 / std::max<std::size_t>(1, pairs.size());
  double loss = 0.0;
  std::vector<double> dreg(rv.size(), 0.0);
  for (const auto& [pi, li] : pairs) {
    const auto row = rv.subspan(static_cast<std::size_t>(pi) * kRegParams, kRegParams);
    const D6 iou = matched_iou(row, anchors[pi], labels[li]);
    loss += (1.0 - iou.v) * norm;
    for (int s = 0; s < 6; ++s) {
      dreg[static_cast<std::size_t>(pi) * kRegParams + kIouSlots[s]] -= iou.d[s] * norm;
    }
  }
  const int rid = reg.id();
  return reg.tape().make(1, 1, {loss}, {reg},
                         [=, dreg = std::move(dreg)](ad::Tape& tp, const ad::Node& self) {
                           auto g = tp.grad(rid);
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * dreg[i];
                         });
}

void check_assignment(const std::vector<std::pair<int, int>>& pairs, int preds, int labels) {
  std::set<int> seen_p, seen_l;
  for (const auto& [p, l] : pairs) {
    if (p < 0 || p >= preds || l < 0 || l >= labels) {
      throw ContractViolation("assignment index out of range");
    }
    if (!seen_p.insert(p).second || !seen_l.insert(l).second) {
      throw ContractViolation("assignment is not one-to-one");
    }
  }
}

}  // namespace

DecoderParams DecoderParams::create(ad::ParamRegistry& reg, int d, int layers,
                                    std::mt19937_64& rng) {
  if (layers < 1) throw ValidationError("decoder.layers", "must be >= 1");
  DecoderParams p;
  for (int i = 0; i < layers; ++i) {
    const std::string pre = "dec" + std::to_string(i);
    Layer l;
    l.lidar = make_attention(reg, pre + ".lidar", d, rng);
    l.rgb = make_attention(reg, pre + ".rgb", d, rng);
    l.gated = make_attention(reg, pre + ".gated", d, rng);
    l.ffn_w1 = &reg.add(pre + ".ffn.w1", 2 * d, d);
    l.ffn_b1 = &reg.add(pre + ".ffn.b1", 1, 2 * d);
    l.ffn_w2 = &reg.add(pre + ".ffn.w2", d, 2 * d);
    l.ffn_b2 = &reg.add(pre + ".ffn.b2", 1, d);
    ad::init_xavier(*l.ffn_w1, rng);
    ad::init_xavier(*l.ffn_w2, rng, 0.5);
    p.layers.push_back(l);
  }
  p.cls_w = &reg.add("head.cls.w", kClassLogits, d);
  p.cls_b = &reg.add("head.cls.b", 1, kClassLogits);
  p.reg_w = &reg.add("head.reg.w", kRegParams, d);
  p.reg_b = &reg.add("head.reg.b", 1, kRegParams);
  ad::init_xavier(*p.cls_w, rng, 0.1);
  ad::init_xavier(*p.reg_w, rng, 0.1);
  return p;
}

void DecoderParams::zero_heads() {
  for (auto* t : {cls_w, cls_b, reg_w, reg_b}) ad::init_constant(*t, 0.0);
}

void LossWeights::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"loss.w_cls", cls}, {"loss.w_reg", reg}, {"loss.w_iou", iou},
      {"loss.w_heat", heat}, {"loss.no_object_weight", no_object}};
  for (const auto& [name, v] : fields) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(name, "must be a finite value >= 0");
  }
  if (cls == 0.0 && reg == 0.0 && iou == 0.0) {
    throw ValidationError("loss.w_cls", "w_cls, w_reg and w_iou must not all be zero");
  }
}

DecoderOutput decode(const bevfusion::TapeProposals& proposals, const DecoderMaps& maps,
                     const DecoderParams& params, const DecoderConfig& cfg) {
  if (cfg.layers < 1 || static_cast<int>(params.layers.size()) < cfg.layers) {
    throw ContractViolation("decode: layer count must be >= 1 and have parameters");
  }
  ad::Tape& tape = proposals.queries.tape();
  DecoderOutput out;
  const int n = static_cast<int>(proposals.set.proposals.size());
  std::vector<int> cells;
  for (const auto& p : proposals.set.proposals) {
    out.anchors.push_back({p.x, p.z});
    cells.push_back(p.cell);
  }
  if (n == 0) {
    out.cls_logits = tape.zeros(0, kClassLogits);
    out.reg = tape.zeros(0, kRegParams);
    return out;
  }
  const auto& wl = tape.retain(bev_windows(out.anchors, cells, *maps.lidar, cfg.bev_window));
  const auto& wr = tape.retain(
      image_windows(out.anchors, maps.rgb_cam, *maps.rgb, cfg.image_window, cfg.center_height));
  const auto& wg = tape.retain(image_windows(out.anchors, maps.gated_cam, *maps.gated,
                                             cfg.image_window, cfg.center_height));
  const int d = proposals.queries.cols();
  auto none = tape.zeros(n, d);
  ad::Var q = proposals.queries;
  for (int i = 0; i < cfg.layers; ++i) {
    const auto& l = params.layers[i];
    q = ad::add(q, attend(q, *maps.lidar, l.lidar, wl, none));
    q = ad::add(q, attend(q, *maps.rgb, l.rgb, wr, none));
    q = ad::add(q, attend(q, *maps.gated, l.gated, wg, none));
    auto h = ad::activate(ad::linear(q, tape.param(*l.ffn_w1), tape.param(*l.ffn_b1)),
                          ad::Activation::kTanh);
    q = ad::add(q, ad::linear(h, tape.param(*l.ffn_w2), tape.param(*l.ffn_b2)));
  }
  out.cls_logits = ad::linear(q, tape.param(*params.cls_w), tape.param(*params.cls_b));
  out.reg = ad::linear(q, tape.param(*params.reg_w), tape.param(*params.reg_b));
  return out;
}

std::vector<Box3D> decode(const bevfusion::ProposalSet& proposals, const FeatureMap& rgb,
                          const FeatureMap& gated, const FeatureMap& lidar,
                          const geometry::CameraModel& rgb_cam,
                          const geometry::CameraModel& gated_cam, const DecoderParams& params,
                          const DecoderConfig& cfg) {
  ad::Tape tape(false);
  bevfusion::TapeProposals tp;
  tp.set = proposals;
  std::vector<double> q;
  for (const auto& p : proposals.proposals) q.insert(q.end(), p.query.begin(), p.query.end());
  tp.queries = tape.constant(static_cast<int>(proposals.proposals.size()), lidar.channels, q);
  const auto mr = MapVar::from(tape, rgb), mg = MapVar::from(tape, gated),
             ml = MapVar::from(tape, lidar);
  const DecoderMaps maps{&mr, &mg, &ml, rgb_cam, gated_cam};
  std::vector<Box3D> boxes;
  for (const auto& p : predictions(decode(tp, maps, params, cfg), cfg)) boxes.push_back(p.box);
  return boxes;
}

Prediction decode_prediction(std::span<const double> logits, std::span<const double> reg,
                             const std::array<double, 2>& anchor, const DecoderConfig& cfg) {
  Prediction p;
  const auto probs = ad::softmax_rows(logits, 1, kClassLogits);
  std::copy(probs.begin(), probs.end(), p.probs.begin());
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (p.probs[c] > p.probs[best]) best = c;
  p.box.x = anchor[0] + reg[0];
  p.box.y = cfg.anchor_y + reg[1];
  p.box.z = anchor[1] + reg[2];
  p.box.w = std::exp(reg[3]);
  p.box.l = std::exp(reg[4]);
  p.box.h = std::exp(reg[5]);
  p.box.yaw = wrap_yaw(std::atan2(reg[6], reg[7]));
  p.box.cls = static_cast<ObjectClass>(best);
  p.box.score = std::clamp(p.probs[best], 0.0, 1.0);
  return p;
}

std::vector<Prediction> predictions(const DecoderOutput& out, const DecoderConfig& cfg) {
  std::vector<Prediction> preds;
  if (out.count() == 0) return preds;
  const auto lv = out.cls_logits.value();
  const auto rv = out.reg.value();
  for (int i = 0; i < out.count(); ++i) {
    preds.push_back(decode_prediction(lv.subspan(static_cast<std::size_t>(i) * kClassLogits, kClassLogits),
                                      rv.subspan(static_cast<std::size_t>(i) * kRegParams, kRegParams),
                                      out.anchors[i], cfg));
  }
  return preds;
}

std::array<double, kRegParams> regression_target(const Box3D& box,
                                                 const std::array<double, 2>& anchor,
                                                 const DecoderConfig& cfg) {
  return {box.x - anchor[0], box.y - cfg.anchor_y, box.z - anchor[1],
          std::log(box.w),   std::log(box.l),      std::log(box.h),
          std::sin(box.yaw), std::cos(box.yaw)};
}

std::array<double, kRegParams> box_encoding(const Box3D& box) {
  return {box.x, box.y, box.z, std::log(box.w), std::log(box.l), std::log(box.h),
          std::sin(box.yaw), std::cos(box.yaw)};
}

CostMatrix matching_cost(const std::vector<Prediction>& preds, const std::vector<Box3D>& labels,
                         const LossWeights& w) {
  CostMatrix m;
  m.rows = static_cast<int>(preds.size());
  m.cols = static_cast<int>(labels.size());
  m.cost.reserve(static_cast<std::size_t>(m.rows) * m.cols);
  for (const auto& p : preds) {
    const auto pe = box_encoding(p.box);
    for (const auto& l : labels) {
      const auto le = box_encoding(l);
      double l1 = 0.0;
      for (int i = 0; i < kRegParams; ++i) l1 += std::abs(pe[i] - le[i]);
      const double iou = iou::bev_iou(iou::rect_of(p.box), iou::rect_of(l));
      m.cost.push_back(w.cls * (1.0 - p.probs[static_cast<int>(l.cls)]) + w.reg * l1 +
                       w.iou * (1.0 - iou));
    }
  }
  return m;
}

std::vector<std::pair<int, int>> hungarian_match(const std::vector<Prediction>& preds,
                                                 const std::vector<Box3D>& labels,
                                                 const LossWeights& w) {
  return hungarian(matching_cost(preds, labels, w));
}

TapeLoss compute_loss(const DecoderOutput& out, const std::vector<Box3D>& labels,
                      const std::vector<std::pair<int, int>>& assignment, const LossWeights& w,
                      const DecoderConfig& cfg, const HeatSupervision* heat) {
  const int n = out.count();
  check_assignment(assignment, n, static_cast<int>(labels.size()));
  ad::Tape& tape = out.reg.tape();
  TapeLoss res;
  std::vector<ad::Var> terms;

  if (n > 0) {
    std::vector<int> targets(n, kNoObject);
    std::vector<double> weights(n, w.no_object);
    for (const auto& [p, l] : assignment) {
      targets[p] = static_cast<int>(labels[l].cls);
      weights[p] = 1.0;
    }
    double wsum = 0.0;
    for (double x : weights) wsum += x;
    auto ce = ad::softmax_cross_entropy(out.cls_logits, targets, weights);
    ce = ad::scale(ce, wsum > 0.0 ? 1.0 / wsum : 0.0);
    res.breakdown.cls = ce.item();
    terms.push_back(ad::scale(ce, w.cls));
  }
  if (!assignment.empty()) {
    ad::SparseRows pick;
    std::vector<double> target;
    for (const auto& [p, l] : assignment) {
      pick.push(p, 1.0);
      pick.finish_row();
      const auto t = regression_target(labels[l], out.anchors[p], cfg);
      target.insert(target.end(), t.begin(), t.end());
    }
    auto rows = ad::gather(out.reg, tape.retain(std::move(pick)));
    auto l1 = ad::scale(ad::l1_loss(rows, target), 1.0 / static_cast<double>(assignment.size()));
    res.breakdown.reg = l1.item();
    terms.push_back(ad::scale(l1, w.reg));
    auto iou = iou_term(out.reg, assignment, out.anchors, labels);
    res.breakdown.iou = iou.item();
    terms.push_back(ad::scale(iou, w.iou));
  }
  if (heat != nullptr) {
    double positives = 0.0;
    for (double t : heat->targets) positives += t >= 1.0 ? 1.0 : 0.0;
    auto fl = ad::scale(ad::focal_loss(heat->logits, heat->targets), 1.0 / std::max(1.0, positives));
    res.breakdown.heat = fl.item();
    terms.push_back(ad::scale(fl, w.heat));
  }
  res.total = tape.zeros(1, 1);
  for (const auto& t : terms) res.total = ad::add(res.total, t);
  res.breakdown.total = res.total.item();
  return res;
}

LossBreakdown compute_loss(std::span<const double> cls_logits, std::span<const double> reg,
                           const std::vector<std::array<double, 2>>& anchors,
                           const std::vector<Box3D>& labels,
                           const std::vector<std::pair<int, int>>& assignment,
                           const LossWeights& w, const DecoderConfig& cfg) {
  const int n = static_cast<int>(anchors.size());
  if (cls_logits.size() != static_cast<std::size_t>(n) * kClassLogits ||
      reg.size() != static_cast<std::size_t>(n) * kRegParams) {
    throw ShapeError("compute_loss: head output size mismatch");
  }
  ad::Tape tape(false);
  DecoderOutput out;
  out.anchors = anchors;
  out.cls_logits = tape.constant(n, kClassLogits, {cls_logits.begin(), cls_logits.end()});
  out.reg = tape.constant(n, kRegParams, {reg.begin(), reg.end()});
  return compute_loss(out, labels, assignment, w, cfg).breakdown;
}

}  // namespace sensorfuse::detector
