#pragma once

// Batch experiment driver behind the command-line tool.
//
// Config file: INI-style sections of key = value pairs. Lines starting with
// "#" or ";" are comments, as is anything after "#" on a line. Unknown
// sections or keys are rejected.
//
//   [experiment] seed
//   [dataset]    scenes, conditions, pairing, cars, pedestrians, rig
//   [test]       same keys as [dataset]; the evaluation split of `ablate`
//   [model]      channels, activation, modalities, proposal_modalities,
//                depth_based_transform, gamma_weighting, printed_distance_weight,
//                proposals, decoder_layers, camera_window, bev_window,
//                w_cls, w_reg, w_iou, w_heat, no_object_weight
//   [train]      steps, batch_size, learning_rate, clip_norm
//   [eval]       iou_car, iou_pedestrian, recall_positions, bins
//   [ablate]     variants
//
// `conditions` is a comma list such as "clear_day, night, fog@0.05, snow@0.01".
// `pairing = cycle` assigns conditions round-robin over the scene layouts;
// `pairing = all` renders every layout under every condition. `bins` is a
// comma list of "lo-hi" ranges. `variants` is a comma list of
// MODALITIES[/PROPOSAL_MODALITIES][(+|-)gamma][(+|-)depth], e.g. "CGLR/L-gamma".
// Proposal modalities default to the input modalities; a +/- flag turns
// gamma_weighting or depth_based_transform on or off, otherwise the [model]
// value applies.
//
// Seeds: the train split uses derive_seed(seed, 1), the test split
// derive_seed(seed, 2), model initialisation derive_seed(seed, 3) and batch
// shuffling derive_seed(seed, 4).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sensorfuse/evalkit.hpp"
#include "sensorfuse/model.hpp"
#include "sensorfuse/simkit.hpp"
#include "sensorfuse/training.hpp"

namespace sensorfuse::experiment {

enum class Pairing { kCycle, kAll };

struct DatasetSpec {
  int scenes = 10;
  std::vector<simkit::Condition> conditions{simkit::Condition{}};
  Pairing pairing = Pairing::kCycle;
  simkit::SceneConfig scene;
  std::string rig = "desk";
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  DatasetSpec dataset;
  DatasetSpec test;
  model::ModelConfig model = model::ModelConfig::desk();
  training::TrainConfig train;
  evalkit::EvalConfig eval;
  std::vector<std::string> variants{"CL", "CGLR"};

  std::uint64_t split_seed(int split) const;
  std::uint64_t model_seed() const;
  std::uint64_t shuffle_seed() const;
};

/// Parses config text. Every invalid field is collected; the thrown
/// ValidationError's field() lists them comma-separated.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

simkit::RigConfig rig_named(const std::string& name);

/// One (layout, condition) sample.
struct Sample {
  std::string id;
  simkit::Scene scene;
  simkit::SensorFrame frame;
};

/// In-memory dataset; identical for every `jobs` value.
std::vector<Sample> build_dataset(const DatasetSpec& spec, std::uint64_t seed, int jobs);

/// BLAKE2b digest over the rig name and every sample's serialized scene and
/// frame, exactly as cmd_generate writes them.
std::string dataset_hash(const std::vector<Sample>& samples, const std::string& rig);

std::vector<model::PreparedScene> prepare_all(const std::vector<Sample>& samples,
                                              const simkit::RigConfig& rig,
                                              const model::ModelConfig& cfg, int jobs);
std::vector<evalkit::FrameDetections> detect_all(const std::vector<model::PreparedScene>& scenes,
                                                 const model::Model& model, int jobs);

/// Applies an ablation variant string to a model config. Throws
/// ValidationError("ablate.variants") on malformed input.
model::ModelConfig apply_variant(model::ModelConfig base, const std::string& variant);

/// Trains a fresh model (config `model_cfg`, seeds from `cfg`) on `train`
/// and returns the evaluation report on `test`.
std::vector<evalkit::ReportRow> train_and_evaluate(const ExperimentConfig& cfg,
                                                   const model::ModelConfig& model_cfg,
                                                   const std::vector<Sample>& train,
                                                   const std::vector<Sample>& test,
                                                   const simkit::RigConfig& rig, int jobs);

// Commands. Each returns nothing and writes its artifacts under `out`.

/// Writes scenes/<id>.json, frames/<id>.json and manifest.json; returns the
/// manifest content hash. `split` selects [dataset] (0) or [test] (1).
std::string cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out, int split,
                         int jobs);

struct LoadedDataset {
  std::string rig;
  std::string content_hash;
  std::vector<Sample> samples;
};
/// Reads a generated dataset, verifying the manifest hash.
LoadedDataset load_dataset(const std::filesystem::path& dir);

/// Writes model.ckpt and loss.csv.
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& data,
               const std::filesystem::path& out, int jobs);

/// Writes report.csv, report.json, ap_vs_fog.csv and detections/<id>.json
/// (plus proposals/<id>.json with `dump_proposals`). Throws ValidationError
/// when the checkpoint's modality sets differ from the config.
void cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
              const std::filesystem::path& data, const std::filesystem::path& out, int jobs,
              bool dump_proposals = false);

/// Trains and evaluates every variant on shared train/test splits and writes
/// ablation.csv / ablation.json.
void cmd_ablate(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs);

/// Rows of the AP-versus-fog curve: "beta,class,bin,mode,ap".
std::string fog_curve_csv(const std::vector<evalkit::ReportRow>& rows);

}  // namespace sensorfuse::experiment
