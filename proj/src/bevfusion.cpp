#include "sensorfuse/bevfusion.hpp"

#include <algorithm>
#include <cmath>

#include "sensorfuse/errors.hpp"

namespace sensorfuse::bevfusion {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_same_grid(const MapVar& a, const MapVar& b, const char* what) {
  if (a.plane != b.plane || a.rows != b.rows || a.cols != b.cols || a.channels() != b.channels()) {
    throw ShapeError(std::string(what) + ": feature map shape mismatch");
  }
}

/// out[i] = f_i * a[i] + (1 - f_i) * b[i], f_i = distance_weight(d_i, exp(log_sigma)).
ad::Var distance_blend(ad::Var a, ad::Var b, ad::Var log_sigma,
                       const std::vector<double>& distances, bool printed) {
  const int n = a.rows(), c = a.cols();
  if (b.rows() != n || b.cols() != c || static_cast<int>(distances.size()) != n) {
    throw ShapeError("distance_blend: shape mismatch");
  }
  const double sigma = std::exp(log_sigma.item());
  std::vector<double> f(n);
  for (int i = 0; i < n; ++i) f[i] = distance_weight(distances[i], sigma, printed);
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      const std::size_t e = static_cast<std::size_t>(i) * c + j;
      out[e] = f[i] * av[e] + (1.0 - f[i]) * bv[e];
    }
  }
  const int aid = a.id(), bid = b.id(), sid = log_sigma.id();
  return a.tape().make(
      n, c, std::move(out), {a, b, log_sigma},
      [=, f = std::move(f)](ad::Tape& tp, const ad::Node& self) {
        const auto& an = tp.node(aid);
        const auto& bn = tp.node(bid);
        const bool gs = tp.node(sid).needs_grad;
        double dls = 0.0;
        std::span<double> ga, gb;
        if (an.needs_grad) ga = tp.grad(aid);
        if (bn.needs_grad) gb = tp.grad(bid);
        for (int i = 0; i < n; ++i) {
          double df = 0.0;
          for (int j = 0; j < c; ++j) {
            const std::size_t e = static_cast<std::size_t>(i) * c + j;
            const double g = self.grad[e];
            if (an.needs_grad) ga[e] += f[i] * g;
            if (bn.needs_grad) gb[e] += (1.0 - f[i]) * g;
            df += g * (an.value[e] - bn.value[e]);
          }
          // d f / d log sigma for both forms of the exponent.
          const double d2 = distances[i] * distances[i];
          const double s2 = sigma * sigma;
          dls += df * (printed ? -f[i] * d2 / (s2 * s2) : f[i] * d2 / s2);
        }
        if (gs) tp.grad(sid)[0] += dls;
      });
}

}  // namespace

double distance_weight(double d, double sigma, bool printed_variant) {
  if (printed_variant) {
    const double t = -d / (2.0 * sigma * sigma);
    return std::exp(t * t);
  }
  return std::exp(-d * d / (2.0 * sigma * sigma));
}

DistanceWeightParams DistanceWeightParams::create(ad::ParamRegistry& reg, int d,
                                                  std::mt19937_64& rng) {
  DistanceWeightParams p;
  p.log_sigma = &reg.add("fuse.log_sigma", 1, 1);
  p.w1 = &reg.add("fuse.gamma.w1", d, d);
  p.b1 = &reg.add("fuse.gamma.b1", 1, d);
  p.w2 = &reg.add("fuse.gamma.w2", d, d);
  p.b2 = &reg.add("fuse.gamma.b2", 1, d);
  ad::init_constant(*p.log_sigma, std::log(kInitialSigma));
  ad::init_xavier(*p.w1, rng);
  ad::init_xavier(*p.w2, rng, 0.1);
  return p;
}

double DistanceWeightParams::sigma() const { return std::exp(log_sigma->value()[0]); }

void DistanceWeightParams::set_identity() {
  ad::init_constant(*w2, 0.0);
  ad::init_constant(*b2, 0.0);
}

std::vector<double> cell_distances(const geometry::BEVGridSpec& spec) {
  std::vector<double> d(static_cast<std::size_t>(spec.cells()));
  for (int iz = 0; iz < spec.nz(); ++iz) {
    for (int ix = 0; ix < spec.nx(); ++ix) {
      d[spec.cell_index(ix, iz)] = std::hypot(spec.cell_center_x(ix), spec.cell_center_z(iz));
    }
  }
  return d;
}

MapVar fuse_lidar_radar(const MapVar& lidar, const MapVar& radar,
                        const std::vector<double>& distances, const DistanceWeightParams& p,
                        const FusionConfig& cfg) {
  require_same_grid(lidar, radar, "fuse_lidar_radar");
  MapVar out = lidar;
  out.mask = mask_union(lidar.mask, radar.mask);
  if (!cfg.gamma_weighting) {
    out.data = ad::add(lidar.data, radar.data);
    return out;
  }
  ad::Tape& tape = lidar.data.tape();
  auto pre = distance_blend(lidar.data, radar.data, tape.param(*p.log_sigma), distances,
                            cfg.printed_variant);
  auto hidden = ad::activate(ad::linear(pre, tape.param(*p.w1), tape.param(*p.b1)),
                             ad::Activation::kTanh);
  out.data = ad::add(pre, ad::linear(hidden, tape.param(*p.w2), tape.param(*p.b2)));
  return out;
}

FeatureMap fuse_lidar_radar(const FeatureMap& lidar, const FeatureMap& radar,
                            const geometry::BEVGridSpec& spec, const DistanceWeightParams& p,
                            const FusionConfig& cfg) {
  if (lidar.rows != spec.nz() || lidar.cols != spec.nx()) {
    throw ShapeError("fuse_lidar_radar: map does not match grid");
  }
  ad::Tape tape(false);
  return fuse_lidar_radar(MapVar::from(tape, lidar), MapVar::from(tape, radar),
                          cell_distances(spec), p, cfg)
      .to_feature_map();
}

MapVar gated_to_bev(const MapVar& gated, const blending::SamplingMap& pillars, int rows, int cols) {
  return blending::resample(gated, pillars, Plane::kBev, rows, cols);
}

FeatureMap gated_to_bev(const FeatureMap& gated, const geometry::PointCloud& lidar,
                        const geometry::CameraModel& cam, const geometry::BEVGridSpec& spec) {
  if (gated.rows != cam.height || gated.cols != cam.width) {
    throw ShapeError("gated_to_bev: feature map does not match camera");
  }
  ad::Tape tape(false);
  const auto& map = tape.retain(blending::pillar_sampling_map(lidar, spec, cam, gated.mask));
  return gated_to_bev(MapVar::from(tape, gated), map, spec.nz(), spec.nx()).to_feature_map();
}

MapVar late_fuse(const MapVar& lr, const MapVar& gated_bev) {
  require_same_grid(lr, gated_bev, "late_fuse");
  MapVar out = lr;
  out.data = ad::add(lr.data, gated_bev.data);
  out.mask = mask_union(lr.mask, gated_bev.mask);
  return out;
}

FeatureMap late_fuse(const FeatureMap& lr, const FeatureMap& gated_bev) {
  require_same_shape(lr, gated_bev, "late_fuse");
  FeatureMap out = lr;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += gated_bev.data[i];
  out.mask = mask_union(lr.mask, gated_bev.mask);
  return out;
}

HeatmapParams HeatmapParams::create(ad::ParamRegistry& reg, int d, std::mt19937_64& rng) {
  HeatmapParams p;
  p.w = &reg.add("heat.w", kNumClasses, 9 * d);
  p.b = &reg.add("heat.b", 1, kNumClasses);
  p.class_embed = &reg.add("heat.class_embed", kNumClasses, d);
  ad::init_xavier(*p.w, rng, 0.5);
  ad::init_constant(*p.b, kHeatBiasInit);
  ad::init_xavier(*p.class_embed, rng, 0.1);
  return p;
}

ad::Var heatmap_logits(const MapVar& fused, const HeatmapParams& p) {
  ad::Tape& tape = fused.data.tape();
  ad::Var cols;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dx = -1; dx <= 1; ++dx) {
      ad::SparseRows shift;
      for (int r = 0; r < fused.rows; ++r) {
        for (int c = 0; c < fused.cols; ++c) {
          const int rr = r + dz, cc = c + dx;
          if (rr >= 0 && rr < fused.rows && cc >= 0 && cc < fused.cols) {
            shift.push(rr * fused.cols + cc, 1.0);
          }
          shift.finish_row();
        }
      }
      auto block = ad::gather(fused.data, tape.retain(std::move(shift)));
      cols = cols.valid() ? ad::concat_cols(cols, block) : block;
    }
  }
  return ad::linear(cols, tape.param(*p.w), tape.param(*p.b));
}

std::vector<HeatPeak> find_peaks(std::span<const double> heat, int rows, int cols, int classes,
                                 std::size_t k) {
  if (k < 1) throw ContractViolation("proposal count K must be >= 1");
  if (heat.size() != static_cast<std::size_t>(rows) * cols * classes) {
    throw ShapeError("find_peaks: heat map size mismatch");
  }
  std::vector<HeatPeak> peaks;
  for (int cls = 0; cls < classes; ++cls) {
    const auto at = [&](int r, int c) { return heat[(static_cast<std::size_t>(r) * cols + c) * classes + cls]; };
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const double h = at(r, c);
        bool strict = true;
        for (int dr = -1; dr <= 1 && strict; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
            if (at(rr, cc) >= h) {
              strict = false;
              break;
            }
          }
        }
        if (strict) peaks.push_back({cls, r * cols + c, h});
      }
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const HeatPeak& a, const HeatPeak& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cls != b.cls) return a.cls < b.cls;
    return a.cell < b.cell;
  });
  if (peaks.size() > k) peaks.resize(k);
  return peaks;
}

TapeProposals extract_proposals(const MapVar& fused, ad::Var heat_logits, const HeatmapParams& p,
                                const geometry::BEVGridSpec& spec, std::size_t k) {
  if (fused.rows != spec.nz() || fused.cols != spec.nx()) {
    throw ShapeError("extract_proposals: map does not match grid");
  }
  ad::Tape& tape = fused.data.tape();
  std::vector<double> heat(heat_logits.value().begin(), heat_logits.value().end());
  for (double& h : heat) h = sigmoid(h);
  const auto peaks = find_peaks(heat, fused.rows, fused.cols, kNumClasses, k);

  TapeProposals out;
  out.set.capacity = k;
  const int d = fused.channels();
  if (peaks.empty()) {
    out.queries = tape.zeros(0, d);
    return out;
  }
  ad::SparseRows at_cell, at_class;
  for (const auto& pk : peaks) {
    at_cell.push(pk.cell, 1.0);
    at_cell.finish_row();
    at_class.push(pk.cls, 1.0);
    at_class.finish_row();
  }
  out.queries = ad::add(ad::gather(fused.data, tape.retain(std::move(at_cell))),
                        ad::gather(tape.param(*p.class_embed), tape.retain(std::move(at_class))));
  auto qv = out.queries.value();
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    Proposal pr;
    pr.cell = peaks[i].cell;
    pr.cls = static_cast<ObjectClass>(peaks[i].cls);
    pr.score = peaks[i].score;
    pr.x = spec.cell_center_x(pr.cell % fused.cols);
    pr.z = spec.cell_center_z(pr.cell / fused.cols);
    pr.query.assign(qv.begin() + static_cast<std::ptrdiff_t>(i) * d,
                    qv.begin() + static_cast<std::ptrdiff_t>(i + 1) * d);
    out.set.proposals.push_back(std::move(pr));
  }
  return out;
}

ProposalSet extract_proposals(const FeatureMap& fused, const HeatmapParams& p,
                              const geometry::BEVGridSpec& spec, std::size_t k) {
  ad::Tape tape(false);
  auto m = MapVar::from(tape, fused);
  return extract_proposals(m, heatmap_logits(m, p), p, spec, k).set;
}

std::vector<double> heatmap_targets(const std::vector<Box3D>& objects,
                                    const geometry::BEVGridSpec& spec) {
  const int nx = spec.nx(), nz = spec.nz();
  std::vector<double> t(static_cast<std::size_t>(nx) * nz * kNumClasses, 0.0);
  const double cell = std::min(spec.cell_x, spec.cell_z);
  for (const auto& b : objects) {
    if (!spec.contains_bev(b.x, b.z)) continue;
    const int cx = static_cast<int>(std::floor((b.x - spec.x_min) / spec.cell_x));
    const int cz = static_cast<int>(std::floor((b.z - spec.z_min) / spec.cell_z));
    const int radius = static_cast<int>(std::floor(std::hypot(b.w, b.l) / (2.0 * cell)));
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    const int cls = static_cast<int>(b.cls);
    for (int dz = -radius; dz <= radius; ++dz) {
      for (int dx = -radius; dx <= radius; ++dx) {
        const int x = cx + dx, z = cz + dz;
        if (x < 0 || x >= nx || z < 0 || z >= nz) continue;
        const double v = (dx == 0 && dz == 0)
                             ? 1.0
                             : std::exp(-(dx * dx + dz * dz) / (2.0 * sigma * sigma));
        double& e = t[(static_cast<std::size_t>(z) * nx + x) * kNumClasses + cls];
        e = std::max(e, v);
      }
    }
  }
  return t;
}

nlohmann::json to_json(const ProposalSet& set) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : set.proposals) {
    arr.push_back({{"x", p.x},
                   {"z", p.z},
                   {"cell", p.cell},
                   {"class", std::string(class_name(p.cls))},
                   {"score", p.score},
                   {"query", p.query}});
  }
  return {{"capacity", set.capacity}, {"proposals", arr}};
}

}  // namespace sensorfuse::bevfusion
