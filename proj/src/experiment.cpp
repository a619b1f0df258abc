#include "sensorfuse/experiment.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "sensorfuse/checkpoint.hpp"
#include "sensorfuse/errors.hpp"
#include "sensorfuse/parallel.hpp"
#include "sensorfuse/serialization.hpp"

namespace sensorfuse::experiment {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

long long parse_integer(const std::string& field, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ValidationError(field, "expected an integer, got '" + v + "'");
}

int parse_int(const std::string& field, const std::string& v) {
  const long long x = parse_integer(field, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ValidationError(field, "out of range");
  }
  return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& field, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ValidationError(field, "expected an unsigned integer, got '" + v + "'");
}

double parse_double(const std::string& field, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw ValidationError(field, "expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& field, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ValidationError(field, "expected true/false, got '" + v + "'");
}

std::vector<std::pair<double, double>> parse_bins(const std::string& field, const std::string& v) {
  std::vector<std::pair<double, double>> bins;
  for (const auto& item : split_list(v, ',')) {
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) throw ValidationError(field, "bin '" + item + "' is not lo-hi");
    bins.emplace_back(parse_double(field, trim(item.substr(0, dash))),
                      parse_double(field, trim(item.substr(dash + 1))));
  }
  return bins;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

std::map<std::string, Setter> dataset_setters(const std::string& section) {
  const auto spec = [section](ExperimentConfig& c) -> DatasetSpec& {
    return section == "dataset" ? c.dataset : c.test;
  };
  const std::string p = section + ".";
  return {
      {"scenes", [=](ExperimentConfig& c, const std::string& v) { spec(c).scenes = parse_int(p + "scenes", v); }},
      {"conditions",
       [=](ExperimentConfig& c, const std::string& v) {
         std::vector<simkit::Condition> conds;
         for (const auto& item : split_list(v, ',')) {
           try {
             conds.push_back(simkit::Condition::parse(item));
           } catch (const ValidationError& e) {
             throw ValidationError(p + "conditions", e.what());
           }
         }
         spec(c).conditions = conds;
       }},
      {"pairing",
       [=](ExperimentConfig& c, const std::string& v) {
         if (v == "cycle") {
           spec(c).pairing = Pairing::kCycle;
         } else if (v == "all") {
           spec(c).pairing = Pairing::kAll;
         } else {
           throw ValidationError(p + "pairing", "expected cycle or all");
         }
       }},
      {"cars", [=](ExperimentConfig& c, const std::string& v) { spec(c).scene.cars = parse_int(p + "cars", v); }},
      {"pedestrians",
       [=](ExperimentConfig& c, const std::string& v) { spec(c).scene.pedestrians = parse_int(p + "pedestrians", v); }},
      {"rig", [=](ExperimentConfig& c, const std::string& v) { spec(c).rig = v; }},
  };
}

std::map<std::string, std::map<std::string, Setter>> schema() {
  using C = ExperimentConfig;
  using S = const std::string&;
  std::map<std::string, std::map<std::string, Setter>> s;
  s["experiment"] = {{"seed", [](C& c, S v) { c.seed = parse_u64("experiment.seed", v); }}};
  s["dataset"] = dataset_setters("dataset");
  s["test"] = dataset_setters("test");
  s["model"] = {
      {"channels", [](C& c, S v) { c.model.encoder.channels = parse_int("model.channels", v); }},
      {"activation",
       [](C& c, S v) {
         if (v == "tanh") {
           c.model.encoder.activation = ad::Activation::kTanh;
         } else if (v == "relu") {
           c.model.encoder.activation = ad::Activation::kRelu;
         } else {
           throw ValidationError("model.activation", "expected tanh or relu");
         }
       }},
      {"modalities", [](C& c, S v) { c.model.inputs = model::Modalities::parse(v, "model.modalities"); }},
      {"proposal_modalities",
       [](C& c, S v) { c.model.proposal = model::Modalities::parse(v, "model.proposal_modalities"); }},
      {"depth_based_transform",
       [](C& c, S v) { c.model.blend.depth_based_transform = parse_bool("model.depth_based_transform", v); }},
      {"gamma_weighting",
       [](C& c, S v) { c.model.fusion.gamma_weighting = parse_bool("model.gamma_weighting", v); }},
      {"printed_distance_weight",
       [](C& c, S v) { c.model.fusion.printed_variant = parse_bool("model.printed_distance_weight", v); }},
      {"proposals",
       [](C& c, S v) {
         const int k = parse_int("model.proposals", v);
         if (k < 1) throw ValidationError("model.proposals", "must be >= 1");
         c.model.proposals = static_cast<std::size_t>(k);
       }},
      {"decoder_layers", [](C& c, S v) { c.model.decoder.layers = parse_int("model.decoder_layers", v); }},
      {"camera_window", [](C& c, S v) { c.model.blend.camera_window = parse_int("model.camera_window", v); }},
      {"bev_window", [](C& c, S v) { c.model.blend.bev_window = parse_int("model.bev_window", v); }},
      {"w_cls", [](C& c, S v) { c.model.loss.cls = parse_double("model.w_cls", v); }},
      {"w_reg", [](C& c, S v) { c.model.loss.reg = parse_double("model.w_reg", v); }},
      {"w_iou", [](C& c, S v) { c.model.loss.iou = parse_double("model.w_iou", v); }},
      {"w_heat", [](C& c, S v) { c.model.loss.heat = parse_double("model.w_heat", v); }},
      {"no_object_weight", [](C& c, S v) { c.model.loss.no_object = parse_double("model.no_object_weight", v); }},
  };
  s["train"] = {
      {"steps", [](C& c, S v) { c.train.steps = parse_int("train.steps", v); }},
      {"batch_size", [](C& c, S v) { c.train.batch_size = parse_int("train.batch_size", v); }},
      {"learning_rate", [](C& c, S v) { c.train.learning_rate = parse_double("train.learning_rate", v); }},
      {"clip_norm", [](C& c, S v) { c.train.clip_norm = parse_double("train.clip_norm", v); }},
  };
  s["eval"] = {
      {"iou_car", [](C& c, S v) { c.eval.iou_thresholds[0] = parse_double("eval.iou_car", v); }},
      {"iou_pedestrian", [](C& c, S v) { c.eval.iou_thresholds[1] = parse_double("eval.iou_pedestrian", v); }},
      {"recall_positions",
       [](C& c, S v) { c.eval.recall_positions = parse_int("eval.recall_positions", v); }},
      {"bins", [](C& c, S v) { c.eval.bins = parse_bins("eval.bins", v); }},
  };
  s["ablate"] = {{"variants", [](C& c, S v) { c.variants = split_list(v, ','); }}};
  return s;
}

void validate_dataset(const DatasetSpec& d, const std::string& section) {
  if (d.scenes < 0) throw ValidationError(section + ".scenes", "must be >= 0");
  if (d.conditions.empty()) throw ValidationError(section + ".conditions", "at least one condition is required");
  for (const auto& c : d.conditions) {
    if (c.value < 0.0) throw ValidationError(section + ".conditions", "severity must be >= 0");
  }
  if (d.scene.cars < 0) throw ValidationError(section + ".cars", "must be >= 0");
  if (d.scene.pedestrians < 0) throw ValidationError(section + ".pedestrians", "must be >= 0");
  if (d.rig != "desk" && d.rig != "toy") throw ValidationError(section + ".rig", "expected desk or toy");
}

std::string scene_bytes(const Sample& s) { return io::to_json(s.scene).dump(); }
std::string frame_bytes(const Sample& s) { return io::to_json(s.frame).dump(); }

std::string hash_input(const std::string& rig, const std::vector<std::string>& ids,
                       const std::vector<std::string>& scenes, const std::vector<std::string>& frames) {
  std::string h = "rig=" + rig + "\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    h += ids[i] + "\n" + scenes[i] + "\n" + frames[i] + "\n";
  }
  return h;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string sample_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

std::uint64_t ExperimentConfig::split_seed(int split) const {
  return simkit::derive_seed(seed, 1 + static_cast<std::uint64_t>(split));
}
std::uint64_t ExperimentConfig::model_seed() const { return simkit::derive_seed(seed, 3); }
std::uint64_t ExperimentConfig::shuffle_seed() const { return simkit::derive_seed(seed, 4); }

ExperimentConfig parse_config(const std::string& text) {
  std::string cleaned;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    cleaned += line + "\n";
  }
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(cleaned);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError("config", e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  ExperimentConfig cfg;
  std::vector<std::string> fields;
  std::vector<std::string> messages;
  const auto fail = [&](const std::string& field, const std::string& what) {
    if (std::find(fields.begin(), fields.end(), field) == fields.end()) fields.push_back(field);
    messages.push_back(what);
  };

  const auto setters = schema();
  for (const auto& [section, body] : tree) {
    const auto sit = setters.find(section);
    if (sit == setters.end() || !body.data().empty()) {
      fail(section, "unknown section or top-level key '" + section + "'");
      continue;
    }
    for (const auto& [key, value] : body) {
      const std::string field = section + "." + key;
      const auto kit = sit->second.find(key);
      if (kit == sit->second.end()) {
        fail(field, field + ": unknown key");
        continue;
      }
      try {
        kit->second(cfg, trim(value.data()));
      } catch (const ValidationError& e) {
        fail(e.field(), e.what());
      }
    }
  }

  const auto check = [&](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      fail(e.field(), e.what());
    }
  };
  check([&] { validate_dataset(cfg.dataset, "dataset"); });
  check([&] { validate_dataset(cfg.test, "test"); });
  check([&] { cfg.model.validate(); });
  check([&] { cfg.train.validate(); });
  check([&] { cfg.eval.validate(); });
  for (const auto& v : cfg.variants) check([&] { apply_variant(cfg.model, v).validate(); });

  if (!fields.empty()) {
    std::string field, what;
    for (std::size_t i = 0; i < fields.size(); ++i) field += (i ? "," : "") + fields[i];
    for (std::size_t i = 0; i < messages.size(); ++i) what += (i ? "; " : "") + messages[i];
    throw ValidationError(field, what);
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) { return parse_config(io::read_file(path)); }

simkit::RigConfig rig_named(const std::string& name) {
  if (name == "desk") return simkit::RigConfig::desk();
  if (name == "toy") return simkit::RigConfig::toy();
  throw ValidationError("dataset.rig", "unknown rig '" + name + "'");
}

std::vector<Sample> build_dataset(const DatasetSpec& spec, std::uint64_t seed, int jobs) {
  validate_dataset(spec, "dataset");
  const simkit::RigConfig rig = rig_named(spec.rig);
  const std::size_t layouts = static_cast<std::size_t>(spec.scenes);
  const std::size_t nc = spec.conditions.size();
  const std::size_t total = spec.pairing == Pairing::kAll ? layouts * nc : layouts;
  std::vector<Sample> samples(total);
  parallel_for(total, jobs, [&](std::size_t i) {
    const std::size_t layout = spec.pairing == Pairing::kAll ? i / nc : i;
    const simkit::Condition& cond = spec.conditions[i % nc];
    Sample& s = samples[i];
    s.id = sample_id(i);
    const simkit::Scene scene = simkit::generate_scene(spec.scene, simkit::derive_seed(seed, layout), cond);
    // Round trip through the file schema so in-memory and on-disk datasets
    // carry the same float32-quantised values.
    s.scene = io::scene_from_json(io::to_json(scene));
    s.frame = io::frame_from_json(io::to_json(simkit::simulate(scene, rig)));
  });
  return samples;
}

std::string dataset_hash(const std::vector<Sample>& samples, const std::string& rig) {
  std::vector<std::string> ids, scenes, frames;
  for (const auto& s : samples) {
    ids.push_back(s.id);
    scenes.push_back(scene_bytes(s));
    frames.push_back(frame_bytes(s));
  }
  return io::content_hash(hash_input(rig, ids, scenes, frames));
}

std::vector<model::PreparedScene> prepare_all(const std::vector<Sample>& samples,
                                              const simkit::RigConfig& rig,
                                              const model::ModelConfig& cfg, int jobs) {
  std::vector<model::PreparedScene> out(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    out[i] = model::prepare_scene(samples[i].scene, samples[i].frame, rig, cfg);
  });
  return out;
}

std::vector<evalkit::FrameDetections> detect_all(const std::vector<model::PreparedScene>& scenes,
                                                 const model::Model& model, int jobs) {
  std::vector<evalkit::FrameDetections> out(scenes.size());
  parallel_for(scenes.size(), jobs, [&](std::size_t i) {
    out[i].condition = scenes[i].condition.to_string();
    out[i].predictions = model::infer(scenes[i], model);
    out[i].labels = scenes[i].labels;
  });
  return out;
}

model::ModelConfig apply_variant(model::ModelConfig base, const std::string& variant) {
  const std::string field = "ablate.variants";
  std::string body = variant;
  std::vector<std::pair<char, std::string>> flags;
  for (;;) {
    const auto pos = body.find_last_of("+-");
    if (pos == std::string::npos) break;
    flags.emplace_back(body[pos], body.substr(pos + 1));
    body = body.substr(0, pos);
  }
  for (const auto& [sign, name] : flags) {
    const bool on = sign == '+';
    if (name == "gamma") {
      base.fusion.gamma_weighting = on;
    } else if (name == "depth") {
      base.blend.depth_based_transform = on;
    } else {
      throw ValidationError(field, "unknown flag '" + name + "' in '" + variant + "'");
    }
  }
  const auto slash = body.find('/');
  if (body.empty() || slash == 0) throw ValidationError(field, "missing modalities in '" + variant + "'");
  base.inputs = model::Modalities::parse(body.substr(0, slash), field);
  base.proposal = slash == std::string::npos ? base.inputs
                                             : model::Modalities::parse(body.substr(slash + 1), field);
  try {
    base.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(field, "'" + variant + "': " + e.what());
  }
  return base;
}

std::vector<evalkit::ReportRow> train_and_evaluate(const ExperimentConfig& cfg,
                                                   const model::ModelConfig& model_cfg,
                                                   const std::vector<Sample>& train,
                                                   const std::vector<Sample>& test,
                                                   const simkit::RigConfig& rig, int jobs) {
  model::Model m(model_cfg, cfg.model_seed());
  training::TrainConfig tc = cfg.train;
  tc.seed = cfg.shuffle_seed();
  tc.jobs = jobs;
  training::train(m, prepare_all(train, rig, model_cfg, jobs), tc);
  return evalkit::report(detect_all(prepare_all(test, rig, model_cfg, jobs), m, jobs), cfg.eval);
}

std::string cmd_generate(const ExperimentConfig& cfg, const fs::path& out, int split, int jobs) {
  const DatasetSpec& spec = split == 0 ? cfg.dataset : cfg.test;
  const std::uint64_t seed = cfg.split_seed(split);
  const auto samples = build_dataset(spec, seed, jobs);
  ensure_dir(out / "scenes");
  ensure_dir(out / "frames");
  std::vector<std::string> ids, scenes, frames;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : samples) {
    ids.push_back(s.id);
    scenes.push_back(scene_bytes(s));
    frames.push_back(frame_bytes(s));
    io::write_file(out / "scenes" / (s.id + ".json"), scenes.back());
    io::write_file(out / "frames" / (s.id + ".json"), frames.back());
    list.push_back({{"id", s.id}, {"seed", s.scene.seed}, {"condition", s.scene.condition.to_string()}});
  }
  const std::string hash = io::content_hash(hash_input(spec.rig, ids, scenes, frames));
  const nlohmann::json manifest = {{"rig", spec.rig},
                                   {"split", split == 0 ? "dataset" : "test"},
                                   {"seed", seed},
                                   {"samples", list},
                                   {"content_hash", hash}};
  io::write_file(out / "manifest.json", manifest.dump(2) + "\n");
  return hash;
}

LoadedDataset load_dataset(const fs::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest in " + dir.string() + ": " + e.what());
  }
  LoadedDataset d;
  std::vector<std::string> ids, scenes, frames;
  try {
    d.rig = manifest.at("rig").get<std::string>();
    for (const auto& entry : manifest.at("samples")) {
      Sample s;
      s.id = entry.at("id").get<std::string>();
      ids.push_back(s.id);
      scenes.push_back(io::read_file(dir / "scenes" / (s.id + ".json")));
      frames.push_back(io::read_file(dir / "frames" / (s.id + ".json")));
      s.scene = io::scene_from_json(nlohmann::json::parse(scenes.back()));
      s.frame = io::frame_from_json(nlohmann::json::parse(frames.back()));
      d.samples.push_back(std::move(s));
    }
    d.content_hash = manifest.at("content_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad dataset in " + dir.string() + ": " + e.what());
  }
  if (io::content_hash(hash_input(d.rig, ids, scenes, frames)) != d.content_hash) {
    throw IoError("dataset in " + dir.string() + " does not match its manifest hash");
  }
  return d;
}

void cmd_train(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out, int jobs) {
  const LoadedDataset d = load_dataset(data);
  const simkit::RigConfig rig = rig_named(d.rig);
  model::Model m(cfg.model, cfg.model_seed());
  training::TrainConfig tc = cfg.train;
  tc.seed = cfg.shuffle_seed();
  tc.jobs = jobs;
  const auto curve = training::train(m, prepare_all(d.samples, rig, cfg.model, jobs), tc);
  ensure_dir(out);
  checkpoint::save(out / "model.ckpt", m);
  io::write_file(out / "loss.csv", training::loss_csv(curve));
}

void cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint_path, const fs::path& data,
              const fs::path& out, int jobs, bool dump_proposals) {
  const model::Model m = checkpoint::load(checkpoint_path);
  const auto& mc = m.config();
  if (!(mc.inputs == cfg.model.inputs) || !(mc.proposal == cfg.model.proposal)) {
    throw ValidationError("model.modalities",
                          "checkpoint was trained with modalities " + mc.inputs.to_string() + "/" +
                              mc.proposal.to_string() + " but the config requests " +
                              cfg.model.inputs.to_string() + "/" + cfg.model.proposal.to_string());
  }
  const LoadedDataset d = load_dataset(data);
  const simkit::RigConfig rig = rig_named(d.rig);
  const auto scenes = prepare_all(d.samples, rig, mc, jobs);
  const auto frames = detect_all(scenes, m, jobs);
  const auto rows = evalkit::report(frames, cfg.eval);

  ensure_dir(out / "detections");
  io::write_file(out / "report.csv", evalkit::to_csv(rows));
  io::write_file(out / "report.json", evalkit::to_json(rows).dump(2) + "\n");
  io::write_file(out / "ap_vs_fog.csv", fog_curve_csv(rows));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    nlohmann::json preds = nlohmann::json::array(), labels = nlohmann::json::array();
    for (const auto& b : frames[i].predictions) preds.push_back(io::to_json(b));
    for (const auto& b : frames[i].labels) labels.push_back(io::to_json(b));
    const nlohmann::json j = {{"id", d.samples[i].id},
                              {"condition", frames[i].condition},
                              {"predictions", preds},
                              {"labels", labels}};
    io::write_file(out / "detections" / (d.samples[i].id + ".json"), j.dump(2) + "\n");
  }
  if (dump_proposals) {
    ensure_dir(out / "proposals");
    std::vector<std::string> dumps(scenes.size());
    parallel_for(scenes.size(), jobs, [&](std::size_t i) {
      ad::Tape tape(false);
      dumps[i] = bevfusion::to_json(model::forward(tape, scenes[i], m).proposals.set).dump(2) + "\n";
    });
    for (std::size_t i = 0; i < dumps.size(); ++i) {
      io::write_file(out / "proposals" / (d.samples[i].id + ".json"), dumps[i]);
    }
  }
}

void cmd_ablate(const ExperimentConfig& cfg, const fs::path& out, int jobs) {
  if (cfg.variants.empty()) throw ValidationError("ablate.variants", "at least one variant is required");
  if (cfg.dataset.rig != cfg.test.rig) throw ValidationError("test.rig", "must equal dataset.rig");
  std::vector<model::ModelConfig> variants;
  for (const auto& v : cfg.variants) variants.push_back(apply_variant(cfg.model, v));

  const simkit::RigConfig rig = rig_named(cfg.dataset.rig);
  const auto train = build_dataset(cfg.dataset, cfg.split_seed(0), jobs);
  const auto test = build_dataset(cfg.test, cfg.split_seed(1), jobs);
  const std::string hash =
      io::content_hash(dataset_hash(train, cfg.dataset.rig) + dataset_hash(test, cfg.test.rig));

  std::string csv =
      "variant,modalities,proposal_modalities,depth_based_transform,gamma_weighting,condition,class,"
      "bin,mode,ap,dataset_hash\n";
  nlohmann::json rows_json = nlohmann::json::array();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto& mc = variants[v];
    const auto rows = train_and_evaluate(cfg, mc, train, test, rig, jobs);
    const std::string depth = mc.blend.depth_based_transform ? "on" : "off";
    const std::string gamma = mc.fusion.gamma_weighting ? "on" : "off";
    for (const auto& r : rows) {
      const std::string cls(class_name(r.cls));
      const std::string mode(evalkit::mode_name(r.mode));
      csv += cfg.variants[v] + "," + mc.inputs.to_string() + "," + mc.proposal.to_string() + "," + depth +
             "," + gamma + "," + r.condition + "," + cls + "," + r.bin + "," + mode + "," +
             format_double(r.ap) + "," + hash + "\n";
      rows_json.push_back({{"variant", cfg.variants[v]},
                           {"modalities", mc.inputs.to_string()},
                           {"proposal_modalities", mc.proposal.to_string()},
                           {"depth_based_transform", mc.blend.depth_based_transform},
                           {"gamma_weighting", mc.fusion.gamma_weighting},
                           {"condition", r.condition},
                           {"class", cls},
                           {"bin", r.bin},
                           {"mode", mode},
                           {"ap", std::stod(format_double(r.ap))}});
    }
  }
  ensure_dir(out);
  io::write_file(out / "ablation.csv", csv);
  io::write_file(out / "ablation.json",
                 nlohmann::json({{"dataset_hash", hash}, {"rows", rows_json}}).dump(2) + "\n");
}

std::string fog_curve_csv(const std::vector<evalkit::ReportRow>& rows) {
  std::vector<std::pair<double, const evalkit::ReportRow*>> fog;
  for (const auto& r : rows) {
    if (r.condition.rfind("fog@", 0) == 0) fog.emplace_back(std::stod(r.condition.substr(4)), &r);
  }
  std::stable_sort(fog.begin(), fog.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out = "beta,class,bin,mode,ap\n";
  for (const auto& [beta, r] : fog) {
    char line[160];
    std::snprintf(line, sizeof line, "%g,%s,%s,%s,%.6f\n", beta, std::string(class_name(r->cls)).c_str(),
                  r->bin.c_str(), std::string(evalkit::mode_name(r->mode)).c_str(), r->ap);
    out += line;
  }
  return out;
}

}  // namespace sensorfuse::experiment
