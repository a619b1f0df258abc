#include "sensorfuse/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "sensorfuse/errors.hpp"

namespace sensorfuse::encoders {

namespace {

EncoderParams::Camera make_camera(ad::ParamRegistry& reg, const std::string& prefix, int d,
                                  int in, std::mt19937_64& rng) {
  EncoderParams::Camera c;
  c.w = &reg.add(prefix + ".w", d, in);
  c.b = &reg.add(prefix + ".b", 1, d);
  ad::init_xavier(*c.w, rng);
  return c;
}

EncoderParams::Bev make_bev(ad::ParamRegistry& reg, const std::string& prefix, int d,
                            std::mt19937_64& rng) {
  EncoderParams::Bev b;
  b.w1 = &reg.add(prefix + ".w1", d, kBevStatInputs);
  b.b1 = &reg.add(prefix + ".b1", 1, d);
  b.w2 = &reg.add(prefix + ".w2", d - 1, d);
  b.b2 = &reg.add(prefix + ".b2", 1, d - 1);
  ad::init_xavier(*b.w1, rng);
  ad::init_xavier(*b.w2, rng);
  return b;
}

}  // namespace

EncoderParams EncoderParams::create(ad::ParamRegistry& registry, const EncoderConfig& cfg,
                                    int camera_channels, std::mt19937_64& rng) {
  if (cfg.channels < 2) throw ContractViolation("encoder channels must be at least 2");
  if (cfg.downsample < 1) throw ContractViolation("encoder downsample must be positive");
  const int patch = camera_channels * cfg.downsample * cfg.downsample;
  EncoderParams p;
  p.rgb = make_camera(registry, "enc.rgb", cfg.channels, patch, rng);
  p.gated = make_camera(registry, "enc.gated", cfg.channels, patch, rng);
  p.lidar = make_bev(registry, "enc.lidar", cfg.channels, rng);
  p.radar = make_bev(registry, "enc.radar", cfg.channels, rng);
  return p;
}

Patches make_patches(const simkit::Image& image, int factor) {
  if (factor < 1) throw ShapeError("make_patches: factor must be positive");
  if (image.width % factor != 0 || image.height % factor != 0) {
    throw ShapeError("make_patches: image " + std::to_string(image.width) + "x" +
                     std::to_string(image.height) + " not divisible by " +
                     std::to_string(factor));
  }
  Patches p;
  p.rows = image.height / factor;
  p.cols = image.width / factor;
  p.width = factor * factor * image.channels;
  p.data.reserve(static_cast<std::size_t>(p.rows) * p.cols * p.width);
  for (int r = 0; r < p.rows; ++r) {
    for (int c = 0; c < p.cols; ++c) {
      for (int dv = 0; dv < factor; ++dv) {
        for (int du = 0; du < factor; ++du) {
          for (int ch = 0; ch < image.channels; ++ch) {
            p.data.push_back(image.at(c * factor + du, r * factor + dv, ch));
          }
        }
      }
    }
  }
  return p;
}

BevStats compute_bev_stats(const geometry::PointCloud& pc, const geometry::BEVGridSpec& spec) {
  BevStats s;
  s.rows = spec.nz();
  s.cols = spec.nx();
  s.mask.assign(static_cast<std::size_t>(spec.cells()), 0);

  std::vector<std::vector<const geometry::Point*>> per_cell(spec.cells());
  for (const auto& a : geometry::squash_to_bev(pc, spec)) per_cell[a.cell].push_back(&pc.points[a.point]);

  // Points are pooled in a canonical order so the sums do not depend on
  // the input ordering.
  const auto key = [](const geometry::Point* p) {
    return std::tie(p->x, p->y, p->z, p->intensity, p->velocity);
  };
  for (int cell = 0; cell < spec.cells(); ++cell) {
    auto& pts = per_cell[cell];
    if (pts.empty()) continue;
    std::sort(pts.begin(), pts.end(), [&](auto* a, auto* b) { return key(a) < key(b); });
    const int ix = cell % s.cols;
    const int iz = cell / s.cols;
    const double cx = spec.cell_center_x(ix);
    const double cz = spec.cell_center_z(iz);
    double inten = 0.0, vel = 0.0, dx = 0.0, dz = 0.0, hsum = 0.0;
    double hmax = -std::numeric_limits<double>::infinity();
    for (const auto* p : pts) {
      inten += p->intensity;
      vel += p->velocity;
      dx += (p->x - cx) / spec.cell_x;
      dz += (p->z - cz) / spec.cell_z;
      hsum += -p->y;
      hmax = std::max(hmax, -p->y);
    }
    const double n = static_cast<double>(pts.size());
    s.occupied.push_back(cell);
    s.stats.insert(s.stats.end(), {inten / n, vel / n, dx / n, dz / n, hsum / n, hmax});
    s.log_count.push_back(std::log1p(n));
    s.mask[cell] = 1;
  }
  return s;
}

MapVar encode_camera(ad::Tape& tape, const Patches& patches, Camera which,
                     const EncoderParams& params, const EncoderConfig& cfg) {
  const auto& p = which == Camera::kRgb ? params.rgb : params.gated;
  if (p.w->cols() != patches.width) throw ShapeError("encode_camera: patch width mismatch");
  auto x = tape.constant(patches.rows * patches.cols, patches.width, patches.data);
  MapVar m;
  m.plane = Plane::kCamera;
  m.rows = patches.rows;
  m.cols = patches.cols;
  m.data = ad::activate(ad::linear(x, tape.param(*p.w), tape.param(*p.b)), cfg.activation);
  m.mask.assign(static_cast<std::size_t>(m.cells()), 1);
  return m;
}

MapVar encode_bev(ad::Tape& tape, const BevStats& stats, RangeSensor which,
                  const EncoderParams& params, const EncoderConfig& cfg) {
  const auto& p = which == RangeSensor::kLidar ? params.lidar : params.radar;
  const int d = p.w1->rows();
  MapVar m;
  m.plane = Plane::kBev;
  m.rows = stats.rows;
  m.cols = stats.cols;
  m.mask = stats.mask;
  const int n = static_cast<int>(stats.occupied.size());
  if (n == 0) {
    m.data = tape.zeros(m.cells(), d);
    return m;
  }
  auto x = tape.constant(n, kBevStatInputs, stats.stats);
  auto h = ad::activate(ad::linear(x, tape.param(*p.w1), tape.param(*p.b1)), ad::Activation::kTanh);
  auto f = ad::activate(ad::linear(h, tape.param(*p.w2), tape.param(*p.b2)), cfg.activation);
  auto feat = ad::concat_cols(f, tape.constant(n, 1, stats.log_count));

  ad::SparseRows scatter;
  int next = 0;
  for (int cell = 0; cell < m.cells(); ++cell) {
    if (next < n && stats.occupied[next] == cell) scatter.push(next++, 1.0);
    scatter.finish_row();
  }
  m.data = ad::gather(feat, tape.retain(std::move(scatter)));
  return m;
}

FeatureMap encode_camera(const simkit::Image& image, Camera which, const EncoderParams& params,
                         const EncoderConfig& cfg) {
  ad::Tape tape(false);
  return encode_camera(tape, make_patches(image, cfg.downsample), which, params, cfg)
      .to_feature_map();
}

FeatureMap encode_lidar(const geometry::PointCloud& pc, const geometry::BEVGridSpec& spec,
                        const EncoderParams& params, const EncoderConfig& cfg) {
  ad::Tape tape(false);
  return encode_bev(tape, compute_bev_stats(pc, spec), RangeSensor::kLidar, params, cfg)
      .to_feature_map();
}

FeatureMap encode_radar(const geometry::PointCloud& pc, const geometry::BEVGridSpec& spec,
                        const EncoderParams& params, const EncoderConfig& cfg) {
  ad::Tape tape(false);
  return encode_bev(tape, compute_bev_stats(pc, spec), RangeSensor::kRadar, params, cfg)
      .to_feature_map();
}

}  // namespace sensorfuse::encoders
