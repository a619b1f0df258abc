#include "sensorfuse/blending.hpp"

#include <algorithm>

#include "sensorfuse/errors.hpp"

namespace sensorfuse::blending {

namespace {

void require_same_grid(const MapVar& a, const MapVar& b, const char* what) {
  if (a.plane != b.plane || a.rows != b.rows || a.cols != b.cols) {
    throw ShapeError(std::string(what) + ": planes differ");
  }
}

bool any_unmasked(const std::vector<std::pair<int, double>>& support,
                  const std::vector<std::uint8_t>& mask) {
  return std::any_of(support.begin(), support.end(),
                     [&](const auto& e) { return mask[e.first] != 0; });
}

}  // namespace

AttentionParams AttentionParams::create(ad::ParamRegistry& reg, const std::string& prefix, int d,
                                        int query_extra, std::mt19937_64& rng) {
  AttentionParams p;
  p.q = &reg.add(prefix + ".q", d, d + query_extra);
  p.k = &reg.add(prefix + ".k", d, d);
  p.v = &reg.add(prefix + ".v", d, d);
  ad::init_xavier(*p.q, rng);
  ad::init_xavier(*p.k, rng);
  ad::init_xavier(*p.v, rng);
  return p;
}

BlendParams BlendParams::create(ad::ParamRegistry& reg, int d, std::mt19937_64& rng) {
  BlendParams p;
  p.rgb_cross = AttentionParams::create(reg, "blend.rgb.cross", d, 1, rng);
  p.rgb_intra = AttentionParams::create(reg, "blend.rgb.intra", d, 0, rng);
  p.gated_cross = AttentionParams::create(reg, "blend.gated.cross", d, 1, rng);
  p.gated_intra = AttentionParams::create(reg, "blend.gated.intra", d, 0, rng);
  p.lidar_cross = AttentionParams::create(reg, "blend.lidar.cross", d, 0, rng);
  p.lidar_intra = AttentionParams::create(reg, "blend.lidar.intra", d, 0, rng);
  p.radar_cross = AttentionParams::create(reg, "blend.radar.cross", d, 0, rng);
  p.rgb_gate = &reg.add("blend.rgb.gate", 1, d);
  p.gated_gate = &reg.add("blend.gated.gate", 1, d);
  p.lidar_gate = &reg.add("blend.lidar.gate", 1, d);
  return p;
}

ad::Windows build_windows(int rows, int cols, int k, const std::vector<std::uint8_t>& query_mask,
                          const std::vector<std::uint8_t>& context_mask) {
  if (k < 1 || k % 2 == 0) throw ContractViolation("window size must be odd and >= 1");
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  if (query_mask.size() != cells || context_mask.size() != cells) {
    throw ShapeError("build_windows: mask size mismatch");
  }
  const int r = k / 2;
  ad::Windows w;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (query_mask[i * cols + j]) {
        for (int di = std::max(0, i - r); di <= std::min(rows - 1, i + r); ++di) {
          for (int dj = std::max(0, j - r); dj <= std::min(cols - 1, j + r); ++dj) {
            if (context_mask[di * cols + dj]) w.push(di * cols + dj);
          }
        }
      }
      w.finish_row();
    }
  }
  return w;
}

SamplingMap lift_sampling_map(const geometry::CameraModel& cam, const geometry::DepthMap& depth,
                              const geometry::BEVGridSpec& spec,
                              const std::vector<std::uint8_t>& bev_mask) {
  if (depth.width != cam.width || depth.height != cam.height) {
    throw ShapeError("lift_sampling_map: depth map does not match camera");
  }
  if (bev_mask.size() != static_cast<std::size_t>(spec.cells())) {
    throw ShapeError("lift_sampling_map: BEV mask does not match grid");
  }
  SamplingMap m;
  m.mask.assign(static_cast<std::size_t>(cam.width) * cam.height, 0);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      if (depth.is_valid(u, v)) {
        const Eigen::Vector3d p = geometry::lift_pixel(cam, u, v, depth.at(u, v));
        const auto support = geometry::bev_bilinear_weights(spec, p.x(), p.z());
        for (const auto& [cell, w] : support) m.rows.push(cell, w);
        m.mask[static_cast<std::size_t>(v) * cam.width + u] = any_unmasked(support, bev_mask);
      }
      m.rows.finish_row();
    }
  }
  return m;
}

SamplingMap pillar_sampling_map(const geometry::PointCloud& pts, const geometry::BEVGridSpec& spec,
                                const geometry::CameraModel& cam,
                                const std::vector<std::uint8_t>& camera_mask) {
  if (camera_mask.size() != static_cast<std::size_t>(cam.width) * cam.height) {
    throw ShapeError("pillar_sampling_map: camera mask does not match camera");
  }
  std::vector<std::vector<std::vector<std::pair<int, double>>>> per_cell(spec.cells());
  for (const auto& a : geometry::squash_to_bev(pts, spec)) {
    const auto& p = pts.points[a.point];
    const auto proj = geometry::project_point(cam, {p.x, p.y, p.z});
    if (!proj.in_frustum) continue;
    per_cell[a.cell].push_back(geometry::image_bilinear_weights(cam.width, cam.height, proj.u, proj.v));
  }
  SamplingMap m;
  m.mask.assign(static_cast<std::size_t>(spec.cells()), 0);
  for (int cell = 0; cell < spec.cells(); ++cell) {
    const auto& contrib = per_cell[cell];
    if (!contrib.empty()) {
      const double inv = 1.0 / static_cast<double>(contrib.size());
      bool valid = false;
      for (const auto& support : contrib) {
        for (const auto& [pix, w] : support) m.rows.push(pix, w * inv);
        valid = valid || any_unmasked(support, camera_mask);
      }
      m.mask[cell] = valid;
    }
    m.rows.finish_row();
  }
  return m;
}

MapVar resample(const MapVar& source, const SamplingMap& map, Plane plane, int rows, int cols) {
  if (map.rows.rows != rows * cols) throw ShapeError("resample: map does not match target plane");
  MapVar out;
  out.plane = plane;
  out.rows = rows;
  out.cols = cols;
  out.data = ad::gather(source.data, map.rows);
  out.mask = map.mask;
  return out;
}

FeatureMap gather_lidar_context(const FeatureMap& lidar, const geometry::BEVGridSpec& spec,
                                const geometry::CameraModel& cam,
                                const geometry::DepthMap& depth) {
  if (lidar.plane != Plane::kBev || lidar.rows != spec.nz() || lidar.cols != spec.nx()) {
    throw ShapeError("gather_lidar_context: map does not match grid");
  }
  ad::Tape tape(false);
  const auto& map = tape.retain(lift_sampling_map(cam, depth, spec, lidar.mask));
  return resample(MapVar::from(tape, lidar), map, Plane::kCamera, cam.height, cam.width)
      .to_feature_map();
}

MapVar blend_contexts(const MapVar& a, const MapVar& b) {
  require_same_grid(a, b, "blend_contexts");
  MapVar out = a;
  out.data = ad::add(a.data, b.data);
  out.mask = mask_union(a.mask, b.mask);
  return out;
}

FeatureMap blend_contexts(const FeatureMap& a, const FeatureMap& b) {
  require_same_shape(a, b, "blend_contexts");
  FeatureMap out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  out.mask = mask_union(a.mask, b.mask);
  return out;
}

MapVar windowed_attention(const MapVar& query, const MapVar& context, const AttentionParams& p,
                          Mode mode, int k, std::optional<ad::Var> query_extra) {
  const MapVar& source = mode == Mode::kCross ? context : query;
  require_same_grid(query, source, "windowed_attention");
  ad::Tape& tape = query.data.tape();
  ad::Var qin = query_extra ? ad::concat_cols(query.data, *query_extra) : query.data;
  auto q = ad::matmul_nt(qin, tape.param(*p.q));
  auto key = ad::matmul_nt(source.data, tape.param(*p.k));
  auto val = ad::matmul_nt(source.data, tape.param(*p.v));
  const auto& windows =
      tape.retain(build_windows(query.rows, query.cols, k, query.mask, source.mask));
  MapVar out = query;
  out.data = ad::window_attention(q, key, val, query.data, windows);
  return out;
}

FeatureMap windowed_attention(const FeatureMap& query, const FeatureMap& context,
                              const AttentionParams& p, Mode mode, int k) {
  ad::Tape tape(false);
  return windowed_attention(MapVar::from(tape, query), MapVar::from(tape, context), p, mode, k)
      .to_feature_map();
}

MapVar combine_cross_intra(const MapVar& cross, const MapVar& intra, const MapVar& base,
                           ad::Var gate_pre) {
  require_same_grid(cross, base, "combine_cross_intra");
  require_same_grid(intra, base, "combine_cross_intra");
  MapVar out = base;
  out.data = ad::gated_mix(base.data, cross.data, intra.data, gate_pre);
  return out;
}

FeatureMap combine_cross_intra(const FeatureMap& cross, const FeatureMap& intra,
                               const FeatureMap& base, std::span<const double> gate_pre) {
  ad::Tape tape(false);
  auto g = tape.constant(1, static_cast<int>(gate_pre.size()),
                         std::vector<double>(gate_pre.begin(), gate_pre.end()));
  return combine_cross_intra(MapVar::from(tape, cross), MapVar::from(tape, intra),
                             MapVar::from(tape, base), g)
      .to_feature_map();
}

BlendGeometry build_geometry(const SceneGeometryInputs& in, const std::vector<std::uint8_t>& lidar_mask,
                             const std::vector<std::uint8_t>& rgb_mask,
                             const std::vector<std::uint8_t>& gated_mask, const BlendConfig& cfg) {
  if (!in.lidar_grid.same_layout(in.radar_grid)) {
    throw ShapeError("build_geometry: LiDAR and radar grids differ in layout");
  }
  const geometry::PointCloud empty;
  const auto& lidar = in.lidar ? *in.lidar : empty;
  const auto& radar = in.radar ? *in.radar : empty;
  BlendGeometry g;
  g.rgb_lift = lift_sampling_map(in.rgb_cam, in.rgb_depth, in.lidar_grid, lidar_mask);
  g.gated_lift = lift_sampling_map(in.gated_cam, in.gated_depth, in.lidar_grid, lidar_mask);
  g.rgb_pillars = pillar_sampling_map(lidar, in.lidar_grid, in.rgb_cam, rgb_mask);
  g.gated_pillars = pillar_sampling_map(lidar, in.lidar_grid, in.gated_cam, gated_mask);
  g.radar_pillars = pillar_sampling_map(radar, in.radar_grid, in.rgb_cam, rgb_mask);

  const auto depth_channel = [&](const geometry::DepthMap& d) {
    std::vector<double> out(d.values.size(), 0.0);
    if (!cfg.depth_based_transform) return out;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (d.valid[i]) out[i] = d.values[i] / cfg.depth_scale;
    }
    return out;
  };
  g.rgb_depth = depth_channel(in.rgb_depth);
  g.gated_depth = depth_channel(in.gated_depth);
  if (!cfg.depth_based_transform) {
    std::fill(g.rgb_lift.mask.begin(), g.rgb_lift.mask.end(), 0);
    std::fill(g.gated_lift.mask.begin(), g.gated_lift.mask.end(), 0);
  }
  // Camera pixels without a camera feature (modality disabled) take no context.
  for (std::size_t i = 0; i < rgb_mask.size(); ++i) g.rgb_lift.mask[i] &= rgb_mask[i];
  for (std::size_t i = 0; i < gated_mask.size(); ++i) g.gated_lift.mask[i] &= gated_mask[i];
  return g;
}

Enriched blend_all(const MapVar& rgb, const MapVar& gated, const MapVar& lidar, const MapVar& radar,
                   const BlendGeometry& geo, const BlendParams& params, const BlendConfig& cfg) {
  require_same_grid(rgb, gated, "blend_all");
  require_same_grid(lidar, radar, "blend_all");
  ad::Tape& tape = rgb.data.tape();
  Enriched e;

  // Camera-adaptive.
  auto lidar_ctx = blend_contexts(resample(lidar, geo.rgb_lift, Plane::kCamera, rgb.rows, rgb.cols),
                                  resample(lidar, geo.gated_lift, Plane::kCamera, rgb.rows, rgb.cols));
  const auto camera_branch = [&](const MapVar& base, const AttentionParams& cross_p,
                                 const AttentionParams& intra_p, const ad::Param& gate,
                                 const std::vector<double>& depth) {
    auto extra = tape.constant(base.cells(), 1, depth);
    auto cross = windowed_attention(base, lidar_ctx, cross_p, Mode::kCross, cfg.camera_window, extra);
    auto intra = windowed_attention(base, base, intra_p, Mode::kIntra, cfg.camera_window);
    return combine_cross_intra(cross, intra, base, tape.param(gate));
  };
  e.rgb = camera_branch(rgb, params.rgb_cross, params.rgb_intra, *params.rgb_gate, geo.rgb_depth);
  e.gated = camera_branch(gated, params.gated_cross, params.gated_intra, *params.gated_gate,
                          geo.gated_depth);

  // LiDAR-adaptive.
  auto camera_ctx =
      blend_contexts(resample(rgb, geo.rgb_pillars, Plane::kBev, lidar.rows, lidar.cols),
                     resample(gated, geo.gated_pillars, Plane::kBev, lidar.rows, lidar.cols));
  auto lcross = windowed_attention(lidar, camera_ctx, params.lidar_cross, Mode::kCross, cfg.bev_window);
  auto lintra = windowed_attention(lidar, lidar, params.lidar_intra, Mode::kIntra, cfg.bev_window);
  e.lidar = combine_cross_intra(lcross, lintra, lidar, tape.param(*params.lidar_gate));

  // Radar-adaptive: RGB context only, no intra term.
  auto radar_ctx = resample(rgb, geo.radar_pillars, Plane::kBev, radar.rows, radar.cols);
  auto rcross = windowed_attention(radar, radar_ctx, params.radar_cross, Mode::kCross, cfg.bev_window);
  e.radar = radar;
  e.radar.data = ad::add(radar.data, rcross.data);
  return e;
}

}  // namespace sensorfuse::blending
