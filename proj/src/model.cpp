#include "sensorfuse/model.hpp"

#include <algorithm>
#include <random>

#include "sensorfuse/errors.hpp"
#include "sensorfuse/iou.hpp"

namespace sensorfuse::model {

namespace {

std::string activation_name(ad::Activation a) {
  switch (a) {
    case ad::Activation::kLinear: return "linear";
    case ad::Activation::kTanh: return "tanh";
    case ad::Activation::kRelu: return "relu";
    case ad::Activation::kSigmoid: return "sigmoid";
  }
  return "tanh";
}

ad::Activation parse_activation(const std::string& s) {
  if (s == "linear") return ad::Activation::kLinear;
  if (s == "tanh") return ad::Activation::kTanh;
  if (s == "relu") return ad::Activation::kRelu;
  throw ValidationError("model.activation", "expected linear, tanh or relu, got '" + s + "'");
}

MapVar disabled_map(ad::Tape& tape, Plane plane, int rows, int cols, int d) {
  return MapVar::zeros(tape, plane, rows, cols, d);
}

}  // namespace

Modalities Modalities::parse(const std::string& text, const std::string& field) {
  Modalities m{false, false, false, false};
  if (text.empty()) throw ValidationError(field, "modality set is empty");
  for (char c : text) {
    bool* slot = nullptr;
    switch (c) {
      case 'C': slot = &m.rgb; break;
      case 'G': slot = &m.gated; break;
      case 'L': slot = &m.lidar; break;
      case 'R': slot = &m.radar; break;
      default:
        throw ValidationError(field, std::string("unknown modality '") + c + "' (use C, G, L, R)");
    }
    if (*slot) throw ValidationError(field, std::string("modality '") + c + "' repeated");
    *slot = true;
  }
  return m;
}

std::string Modalities::to_string() const {
  std::string s;
  if (rgb) s += 'C';
  if (gated) s += 'G';
  if (lidar) s += 'L';
  if (radar) s += 'R';
  return s;
}

bool Modalities::subset_of(const Modalities& o) const {
  return (!rgb || o.rgb) && (!gated || o.gated) && (!lidar || o.lidar) && (!radar || o.radar);
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.encoder.channels = 16;
  c.proposals = 20;
  return c;
}

void ModelConfig::validate() const {
  if (encoder.channels < 2) throw ValidationError("model.channels", "must be >= 2");
  if (encoder.downsample < 1) throw ValidationError("model.downsample", "must be >= 1");
  if (blend.camera_window < 1 || blend.camera_window % 2 == 0) {
    throw ValidationError("model.camera_window", "must be odd and >= 1");
  }
  if (blend.bev_window < 1 || blend.bev_window % 2 == 0) {
    throw ValidationError("model.bev_window", "must be odd and >= 1");
  }
  if (!(blend.depth_scale > 0.0)) throw ValidationError("model.depth_scale", "must be > 0");
  if (decoder.layers < 1) throw ValidationError("model.decoder_layers", "must be >= 1");
  if (decoder.bev_window < 1 || decoder.bev_window % 2 == 0) {
    throw ValidationError("model.decoder_bev_window", "must be odd and >= 1");
  }
  if (decoder.image_window < 1 || decoder.image_window % 2 == 0) {
    throw ValidationError("model.decoder_image_window", "must be odd and >= 1");
  }
  if (proposals < 1) throw ValidationError("model.proposals", "must be >= 1");
  if (!inputs.lidar) throw ValidationError("model.modalities", "must include L (LiDAR)");
  if (!proposal.subset_of(inputs)) {
    throw ValidationError("model.proposal_modalities", "must be a subset of model.modalities");
  }
  loss.validate();
}

nlohmann::json ModelConfig::to_json() const {
  return {{"channels", encoder.channels},
          {"downsample", encoder.downsample},
          {"activation", activation_name(encoder.activation)},
          {"camera_window", blend.camera_window},
          {"bev_window", blend.bev_window},
          {"depth_scale", blend.depth_scale},
          {"depth_based_transform", blend.depth_based_transform},
          {"gamma_weighting", fusion.gamma_weighting},
          {"printed_distance_weight", fusion.printed_variant},
          {"decoder_layers", decoder.layers},
          {"decoder_bev_window", decoder.bev_window},
          {"decoder_image_window", decoder.image_window},
          {"center_height", decoder.center_height},
          {"anchor_y", decoder.anchor_y},
          {"proposals", proposals},
          {"modalities", inputs.to_string()},
          {"proposal_modalities", proposal.to_string()},
          {"w_cls", loss.cls},
          {"w_reg", loss.reg},
          {"w_iou", loss.iou},
          {"w_heat", loss.heat},
          {"no_object_weight", loss.no_object}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder.channels = j.at("channels").get<int>();
  c.encoder.downsample = j.at("downsample").get<int>();
  c.encoder.activation = parse_activation(j.at("activation").get<std::string>());
  c.blend.camera_window = j.at("camera_window").get<int>();
  c.blend.bev_window = j.at("bev_window").get<int>();
  c.blend.depth_scale = j.at("depth_scale").get<double>();
  c.blend.depth_based_transform = j.at("depth_based_transform").get<bool>();
  c.fusion.gamma_weighting = j.at("gamma_weighting").get<bool>();
  c.fusion.printed_variant = j.at("printed_distance_weight").get<bool>();
  c.decoder.layers = j.at("decoder_layers").get<int>();
  c.decoder.bev_window = j.at("decoder_bev_window").get<int>();
  c.decoder.image_window = j.at("decoder_image_window").get<int>();
  c.decoder.center_height = j.at("center_height").get<double>();
  c.decoder.anchor_y = j.at("anchor_y").get<double>();
  c.proposals = j.at("proposals").get<std::size_t>();
  c.inputs = Modalities::parse(j.at("modalities").get<std::string>(), "model.modalities");
  c.proposal =
      Modalities::parse(j.at("proposal_modalities").get<std::string>(), "model.proposal_modalities");
  c.loss.cls = j.at("w_cls").get<double>();
  c.loss.reg = j.at("w_reg").get<double>();
  c.loss.iou = j.at("w_iou").get<double>();
  c.loss.heat = j.at("w_heat").get<double>();
  c.loss.no_object = j.at("no_object_weight").get<double>();
  return c;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), registry_(std::make_unique<ad::ParamRegistry>()) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int d = cfg_.encoder.channels;
  encoder = encoders::EncoderParams::create(*registry_, cfg_.encoder, simkit::kRgbChannels, rng);
  blend = blending::BlendParams::create(*registry_, d, rng);
  fusion = bevfusion::DistanceWeightParams::create(*registry_, d, rng);
  heat = bevfusion::HeatmapParams::create(*registry_, d, rng);
  decoder = detector::DecoderParams::create(*registry_, d, cfg_.decoder.layers, rng);
}

PreparedScene prepare_scene(const simkit::Scene& scene, const simkit::SensorFrame& frame,
                            const simkit::RigConfig& rig, const ModelConfig& cfg) {
  const int ds = cfg.encoder.downsample;
  PreparedScene p;
  p.seed = scene.seed;
  p.condition = frame.condition;
  p.grid = rig.lidar_grid;
  for (const auto& b : scene.objects) {
    if (p.grid.contains_bev(b.x, b.z)) p.labels.push_back(b);
  }
  p.rgb_patches = encoders::make_patches(frame.rgb, ds);
  p.gated_patches = encoders::make_patches(frame.gated, ds);
  p.lidar_stats = encoders::compute_bev_stats(frame.lidar, rig.lidar_grid);
  const geometry::PointCloud no_points;
  const auto& radar = cfg.inputs.radar ? frame.radar : no_points;
  p.radar_stats = encoders::compute_bev_stats(radar, rig.radar_grid);
  p.rgb_cam = rig.rgb.downsampled(ds);
  p.gated_cam = rig.gated.downsampled(ds);

  blending::SceneGeometryInputs in;
  in.rgb_cam = p.rgb_cam;
  in.gated_cam = p.gated_cam;
  in.rgb_depth = frame.rgb_depth.downsampled(ds);
  in.gated_depth = frame.gated_depth.downsampled(ds);
  in.lidar = &frame.lidar;
  in.radar = &radar;
  in.lidar_grid = rig.lidar_grid;
  in.radar_grid = rig.radar_grid;
  const std::size_t rgb_cells = static_cast<std::size_t>(p.rgb_cam.width) * p.rgb_cam.height;
  const std::size_t gated_cells = static_cast<std::size_t>(p.gated_cam.width) * p.gated_cam.height;
  p.geometry = blending::build_geometry(in, p.lidar_stats.mask,
                                        std::vector<std::uint8_t>(rgb_cells, cfg.inputs.rgb),
                                        std::vector<std::uint8_t>(gated_cells, cfg.inputs.gated),
                                        cfg.blend);
  p.distances = bevfusion::cell_distances(p.grid);
  p.heat_targets = bevfusion::heatmap_targets(p.labels, p.grid);
  return p;
}

ForwardResult forward(ad::Tape& tape, const PreparedScene& s, const Model& model) {
  const auto& cfg = model.config();
  const int d = cfg.encoder.channels;
  const int bev_rows = s.grid.nz(), bev_cols = s.grid.nx();

  const auto camera = [&](bool enabled, const encoders::Patches& patches, encoders::Camera which) {
    if (!enabled) return disabled_map(tape, Plane::kCamera, patches.rows, patches.cols, d);
    return encoders::encode_camera(tape, patches, which, model.encoder, cfg.encoder);
  };
  const MapVar rgb = camera(cfg.inputs.rgb, s.rgb_patches, encoders::Camera::kRgb);
  const MapVar gated = camera(cfg.inputs.gated, s.gated_patches, encoders::Camera::kGated);
  const MapVar lidar =
      encoders::encode_bev(tape, s.lidar_stats, encoders::RangeSensor::kLidar, model.encoder, cfg.encoder);
  const MapVar radar =
      cfg.inputs.radar
          ? encoders::encode_bev(tape, s.radar_stats, encoders::RangeSensor::kRadar, model.encoder, cfg.encoder)
          : disabled_map(tape, Plane::kBev, bev_rows, bev_cols, d);

  ForwardResult r;
  r.enriched = blending::blend_all(rgb, gated, lidar, radar, s.geometry, model.blend, cfg.blend);
  const auto& e = r.enriched;

  const auto& P = cfg.proposal;
  MapVar fused;
  if (P.lidar && P.radar) {
    fused = bevfusion::fuse_lidar_radar(e.lidar, e.radar, s.distances, model.fusion, cfg.fusion);
  } else if (P.lidar) {
    fused = e.lidar;
  } else if (P.radar) {
    fused = e.radar;
  } else {
    fused = MapVar::zeros(tape, Plane::kBev, bev_rows, bev_cols, d);
  }
  if (P.gated) {
    fused = bevfusion::late_fuse(fused, bevfusion::gated_to_bev(e.gated, s.geometry.gated_pillars,
                                                                bev_rows, bev_cols));
  }
  if (P.rgb) {
    fused = bevfusion::late_fuse(
        fused, blending::resample(e.rgb, s.geometry.rgb_pillars, Plane::kBev, bev_rows, bev_cols));
  }
  r.fused = fused;
  r.heat_logits = bevfusion::heatmap_logits(fused, model.heat);
  r.proposals = bevfusion::extract_proposals(fused, r.heat_logits, model.heat, s.grid, cfg.proposals);
  const detector::DecoderMaps maps{&e.rgb, &e.gated, &e.lidar, s.rgb_cam, s.gated_cam};
  r.output = detector::decode(r.proposals, maps, model.decoder, cfg.decoder);
  return r;
}

SceneLoss scene_loss(const ForwardResult& fwd, const PreparedScene& scene, const Model& model) {
  const auto& cfg = model.config();
  SceneLoss sl;
  sl.predictions = detector::predictions(fwd.output, cfg.decoder);
  sl.assignment = detector::hungarian_match(sl.predictions, scene.labels, cfg.loss);
  const detector::HeatSupervision heat{fwd.heat_logits, scene.heat_targets};
  sl.loss = detector::compute_loss(fwd.output, scene.labels, sl.assignment, cfg.loss, cfg.decoder, &heat);
  return sl;
}

std::vector<Box3D> infer(const PreparedScene& scene, const Model& model) {
  ad::Tape tape(false);
  const auto fwd = forward(tape, scene, model);
  std::vector<Box3D> boxes;
  for (const auto& p : detector::predictions(fwd.output, model.config().decoder)) {
    boxes.push_back(p.box);
  }
  return boxes;
}

double matched_bev_iou(const PreparedScene& scene, const Model& model) {
  ad::Tape tape(false);
  const auto fwd = forward(tape, scene, model);
  const auto preds = detector::predictions(fwd.output, model.config().decoder);
  const auto pairs = detector::hungarian_match(preds, scene.labels, model.config().loss);
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [p, l] : pairs) {
    total += iou::bev_iou(iou::rect_of(preds[p].box), iou::rect_of(scene.labels[l]));
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace sensorfuse::model
