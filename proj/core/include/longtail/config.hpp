#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "longtail/csl.hpp"
#include "longtail/data_model.hpp"
#include "longtail/fsl.hpp"

namespace longtail {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CslMethodSpec {
  std::string name;
  CslConfig config;
};

struct FslMethodSpec {
  std::string name;
  FslConfig config;
  bool episodic = true;
};

struct EnsembleMethodSpec {
  std::string name;
  std::vector<std::string> members;  // names of configured methods
  bool routing = false;
};

// Flat key=value configuration with dotted section keys; unknown keys are
// rejected before any work starts.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string data_source = "synthetic";  // "synthetic" | "csv"
  std::string csv_path;
  SyntheticSpec synthetic;
  double dev_fraction = 0.75;
  double val_fraction = 0.1;
  int min_train_per_class = 10;
  GroupThresholds thresholds;
  int eval_runs = 2;  // E training runs per method for the real-world CIs
  bool standard_eval_enabled = false;
  EpisodeSpec standard_episode{5, 5, 10};
  int standard_episodes = 600;
  std::optional<int> support_shots;  // nullopt = ALL
  int threads = 1;
  std::vector<CslMethodSpec> csl_methods;
  std::vector<FslMethodSpec> fsl_methods;
  std::vector<EnsembleMethodSpec> ensembles;
  std::string raw_text;  // the config file bytes, for hashing

  std::uint64_t hash() const;
  // Hash of the lines relevant to one method section plus globals that
  // affect training; keys model-file caching.
  std::uint64_t section_hash(const std::string& method_name) const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

}  // namespace longtail
