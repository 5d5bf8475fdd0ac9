#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "longtail/experiment.hpp"

namespace {

using longtail::Stage;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "override the config master seed");
  cmd->add_option("--threads", opts.threads, "override the config thread count");
}

int run_stages(const CommonOpts& opts, const std::set<Stage>& stages,
               bool standard_if_enabled) {
  longtail::ExperimentConfig config;
  try {
    config = longtail::parse_config_file(opts.config_path);
    if (opts.seed) config.seed = *opts.seed;
    if (opts.threads) config.threads = *opts.threads;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  std::set<Stage> effective = stages;
  if (standard_if_enabled && config.standard_eval_enabled) {
    effective.insert(Stage::EvalStandard);
  }
  try {
    const longtail::RunReport report =
        longtail::run_experiment(config, opts.out_dir, effective);
    std::cerr << "done in " << report.wall_clock_seconds << "s\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"long-tailed classification benchmark harness"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    std::set<Stage> stages;
    bool standard_if_enabled = false;
  };
  const Command commands[] = {
      {"synth", "generate the synthetic dataset", {Stage::Synth}},
      {"split", "write dev/test/train/val splits and the class registry",
       {Stage::Split}},
      {"train-csl", "train the conventional classifiers", {Stage::TrainCsl}},
      {"meta-train", "train the few-shot models", {Stage::MetaTrain}},
      {"eval-standard", "episodic N-way-k-shot evaluation", {Stage::EvalStandard}},
      {"eval-realworld", "all-way evaluation on the held-out test split",
       {Stage::EvalRealworld}},
      {"ensemble", "evaluate the configured ensembles", {Stage::Ensemble}},
      {"report", "write metrics.csv, report.json and plot data", {Stage::Report}},
      {"run",
       "full pipeline: data, splits, training, evaluation, ensembles, report",
       {Stage::Synth, Stage::Split, Stage::TrainCsl, Stage::MetaTrain,
        Stage::EvalRealworld, Stage::Ensemble, Stage::Report},
       true},
  };

  CommonOpts opts;
  const Command* selected = nullptr;
  for (const Command& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub, opts);
    sub->callback([&selected, &cmd] { selected = &cmd; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return run_stages(opts, selected->stages, selected->standard_if_enabled);
}
