#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "longtail/config.hpp"
#include "longtail/ensemble.hpp"
#include "longtail/evaluation.hpp"

namespace longtail {

enum class Stage {
  Synth,
  Split,
  TrainCsl,
  MetaTrain,
  EvalStandard,
  EvalRealworld,
  Ensemble,
  Report,
};

struct RunReport {
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  // method name -> (per-run seeds, aggregated real-world report)
  std::map<std::string, std::vector<std::uint64_t>> run_seeds;
  std::map<std::string, MetricReport> realworld;
  std::map<std::string, MetricReport> standard;
  std::map<std::string, MetricReport> ensembles;
  double wall_clock_seconds = 0.0;
  // registry class labels in index order, for plot emission
  std::vector<std::string> class_labels;
};

// Executes the pipeline for the requested stages (prerequisites are run
// implicitly, with model-file caching keyed by config-section hash).
// Writes metrics.csv, report.json, models/*.txt and plots/*.csv under
// out_dir. Deterministic: same config bytes -> byte-identical metrics.csv.
RunReport run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                         const std::set<Stage>& stages);
RunReport run_experiment(const ExperimentConfig& config, const std::string& out_dir);

// Tidy plot CSV rows (`series,group,value,ci_halfwidth`).
std::vector<std::string> emit_plot_data(const RunReport& report,
                                        const std::string& kind);

}  // namespace longtail
