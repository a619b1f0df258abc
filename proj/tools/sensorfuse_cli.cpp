// sensorfuse: generate | train | eval | ablate.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 1 any other
// failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "sensorfuse/errors.hpp"
#include "sensorfuse/experiment.hpp"

namespace {

namespace ex = sensorfuse::experiment;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string split = "dataset";
  std::string axes;
  bool dump_proposals = false;
};

ex::ExperimentConfig load(const Options& o) {
  ex::ExperimentConfig cfg = o.config.empty() ? ex::ExperimentConfig{} : ex::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs < 1) throw sensorfuse::ValidationError("jobs", "must be >= 1");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal 3D detection experiments on synthetic adverse-weather scenes"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config file (INI)");
    sub->add_option("--seed", o.seed, "Override [experiment] seed");
    sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "Output directory")->required();
  };

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  common(gen);
  gen->add_option("--split", o.split, "Which config section to render")
      ->check(CLI::IsMember({"dataset", "test"}));

  auto* train = app.add_subcommand("train", "Train a model on a generated dataset");
  common(train);
  train->add_option("--data", o.data, "Dataset directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a generated dataset");
  common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "model.ckpt written by train")->required();
  eval->add_option("--data", o.data, "Dataset directory")->required();
  eval->add_flag("--dump-proposals", o.dump_proposals, "Also write per-scene proposal sets");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate every variant on shared splits");
  common(ablate);
  ablate->add_option("--axes", o.axes, "Comma list of variants, overrides [ablate] variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ex::ExperimentConfig cfg = load(o);
    if (gen->parsed()) {
      const std::string hash = ex::cmd_generate(cfg, o.out, o.split == "dataset" ? 0 : 1, o.jobs);
      std::cout << hash << "\n";
    } else if (train->parsed()) {
      ex::cmd_train(cfg, o.data, o.out, o.jobs);
    } else if (eval->parsed()) {
      ex::cmd_eval(cfg, o.checkpoint, o.data, o.out, o.jobs, o.dump_proposals);
    } else if (ablate->parsed()) {
      if (!o.axes.empty()) {
        cfg.variants.clear();
        std::string item;
        std::istringstream in(o.axes);
        while (std::getline(in, item, ',')) {
          if (!item.empty()) cfg.variants.push_back(item);
        }
        for (const auto& v : cfg.variants) ex::apply_variant(cfg.model, v);
      }
      ex::cmd_ablate(cfg, o.out, o.jobs);
    }
  } catch (const sensorfuse::ValidationError& e) {
    std::cerr << "invalid configuration [" << e.field() << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
