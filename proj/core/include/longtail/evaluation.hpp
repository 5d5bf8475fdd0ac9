#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "longtail/data_model.hpp"
#include "longtail/numerics.hpp"

namespace longtail {

struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<long> counts;  // row = true class, col = predicted

  explicit ConfusionMatrix(std::size_t c)
      : num_classes(c), counts(c * c, 0) {}

  long& at(int true_class, int predicted) {
    return counts[static_cast<std::size_t>(true_class) * num_classes +
                  static_cast<std::size_t>(predicted)];
  }
  long at(int true_class, int predicted) const {
    return counts[static_cast<std::size_t>(true_class) * num_classes +
                  static_cast<std::size_t>(predicted)];
  }
  long row_sum(int true_class) const;
};

double top1_accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Mean recall over the subset classes; a subset class with an empty row is
// an error, never skipped silently.
double balanced_accuracy(const ConfusionMatrix& confusion,
                         const std::vector<int>& class_subset);

// Normal-approximation 95% interval over per-run accuracies:
// (mean, 1.96 * sample_stddev / sqrt(E)). Requires E >= 2.
std::pair<double, double> confidence_interval(const std::vector<double>& values);

struct MetricValue {
  double value = 0.0;
  double ci_halfwidth = 0.0;
};

struct MetricReport {
  std::optional<MetricValue> top1;
  std::optional<MetricValue> ba_all;
  std::optional<MetricValue> ba_common;
  std::optional<MetricValue> ba_rare;
  // Indexed by registry class; NaN for classes absent from the test set.
  std::vector<double> per_class_recall;
  int runs = 0;  // E

  // Flat rows `metric,group,value,ci_halfwidth,E`.
  std::vector<std::string> csv_rows(const std::string& prefix = "") const;
};

// Mean and CI across per-run reports (all runs must expose the same metrics).
MetricReport aggregate_reports(const std::vector<MetricReport>& runs);

using Predictor = std::function<ModelOutput(const Vector&)>;
using LabelPredictor = std::function<int(const Vector&)>;

// Per-episode adaptation + query scoring for the standard protocol.
using EpisodePredictor = std::function<std::vector<int>(const Episode&)>;

struct StandardEvalSpec {
  EpisodeSpec episode;
  int episodes = 600;  // E
};

// Samples E test episodes from the given class pool and reports the mean
// episode accuracy with its confidence interval. Episodes may run on
// multiple threads; per-episode RNG streams keep the result deterministic.
MetricReport run_standard_eval(const EpisodePredictor& predictor,
                               const Dataset& test_source,
                               const std::vector<std::string>& test_pool,
                               const StandardEvalSpec& spec, std::uint64_t seed,
                               int threads = 1);

// Evaluates every test example exactly once; deterministic.
MetricReport run_realworld_eval(const Predictor& predictor, const Dataset& test,
                                const ClassRegistry& registry, int threads = 1);
MetricReport run_realworld_eval(const LabelPredictor& predictor, const Dataset& test,
                                const ClassRegistry& registry, int threads = 1);

}  // namespace longtail
