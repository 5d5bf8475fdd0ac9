#include "longtail/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <thread>

namespace longtail {

namespace {

std::string metric_row(const std::string& prefix, const std::string& metric,
                       const std::string& group, const MetricValue& mv, int runs) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s%s,%s,%.12g,%.12g,%d", prefix.c_str(),
                metric.c_str(), group.c_str(), mv.value, mv.ci_halfwidth, runs);
  return buf;
}

MetricValue aggregate_metric(const std::vector<double>& values) {
  if (values.size() == 1) return {values.front(), 0.0};
  auto [mean, hw] = confidence_interval(values);
  return {mean, hw};
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

long ConfusionMatrix::row_sum(int true_class) const {
  long s = 0;
  for (std::size_t j = 0; j < num_classes; ++j) {
    s += counts[static_cast<std::size_t>(true_class) * num_classes + j];
  }
  return s;
}

double top1_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("top1_accuracy: length mismatch");
  }
  if (preds.empty()) throw std::invalid_argument("top1_accuracy: empty input");
  long correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double balanced_accuracy(const ConfusionMatrix& confusion,
                         const std::vector<int>& class_subset) {
  if (class_subset.empty()) {
    throw std::invalid_argument("balanced_accuracy: empty class subset");
  }
  double total = 0.0;
  for (int c : class_subset) {
    const long row = confusion.row_sum(c);
    if (row == 0) {
      throw std::runtime_error("balanced_accuracy: undefined recall for class " +
                               std::to_string(c) + " (no test examples)");
    }
    total += static_cast<double>(confusion.at(c, c)) / static_cast<double>(row);
  }
  return total / static_cast<double>(class_subset.size());
}

std::pair<double, double> confidence_interval(const std::vector<double>& values) {
  const std::size_t e = values.size();
  if (e < 2) throw std::invalid_argument("confidence_interval: need E >= 2");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(e);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(e - 1));
  return {mean, 1.96 * sigma / std::sqrt(static_cast<double>(e))};
}

std::vector<std::string> MetricReport::csv_rows(const std::string& prefix) const {
  std::vector<std::string> rows;
  if (top1) rows.push_back(metric_row(prefix, "top1_accuracy", "all", *top1, runs));
  if (ba_all) rows.push_back(metric_row(prefix, "balanced_accuracy", "all", *ba_all, runs));
  if (ba_common) {
    rows.push_back(metric_row(prefix, "balanced_accuracy", "common", *ba_common, runs));
  }
  if (ba_rare) {
    rows.push_back(metric_row(prefix, "balanced_accuracy", "rare", *ba_rare, runs));
  }
  return rows;
}

MetricReport aggregate_reports(const std::vector<MetricReport>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_reports: no runs");
  if (runs.size() == 1) return runs.front();
  MetricReport out;
  out.runs = static_cast<int>(runs.size());
  auto gather = [&](auto member) -> std::optional<MetricValue> {
    std::vector<double> values;
    for (const auto& r : runs) {
      const auto& mv = r.*member;
      if (!mv) return std::nullopt;
      values.push_back(mv->value);
    }
    return aggregate_metric(values);
  };
  out.top1 = gather(&MetricReport::top1);
  out.ba_all = gather(&MetricReport::ba_all);
  out.ba_common = gather(&MetricReport::ba_common);
  out.ba_rare = gather(&MetricReport::ba_rare);
  if (!runs.front().per_class_recall.empty()) {
    const std::size_t c = runs.front().per_class_recall.size();
    out.per_class_recall.assign(c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
      double sum = 0.0;
      for (const auto& r : runs) sum += r.per_class_recall[i];
      out.per_class_recall[i] = sum / static_cast<double>(runs.size());
    }
  }
  return out;
}

MetricReport run_standard_eval(const EpisodePredictor& predictor,
                               const Dataset& test_source,
                               const std::vector<std::string>& test_pool,
                               const StandardEvalSpec& spec, std::uint64_t seed,
                               int threads) {
  if (spec.episodes < 2) {
    throw std::invalid_argument("run_standard_eval: need at least 2 episodes");
  }
  std::vector<double> accuracies(static_cast<std::size_t>(spec.episodes), 0.0);
  parallel_for(accuracies.size(), threads, [&](std::size_t e) {
    Rng rng = Rng::stream(seed, "standard-eval", e);
    Episode ep = sample_episode(test_source, spec.episode, test_pool, rng);
    std::vector<int> preds = predictor(ep);
    if (preds.size() != ep.query.size()) {
      throw std::runtime_error("run_standard_eval: predictor returned wrong count");
    }
    long correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == ep.query[i].second) ++correct;
    }
    accuracies[e] = static_cast<double>(correct) / static_cast<double>(preds.size());
  });
  auto [mean, hw] = confidence_interval(accuracies);
  MetricReport report;
  report.top1 = MetricValue{mean, hw};
  report.runs = spec.episodes;
  return report;
}

MetricReport run_realworld_eval(const LabelPredictor& predictor, const Dataset& test,
                                const ClassRegistry& registry, int threads) {
  if (test.empty()) throw std::invalid_argument("run_realworld_eval: empty test set");
  const std::size_t c = registry.size();
  std::vector<int> true_labels(test.size());
  std::vector<int> preds(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    true_labels[i] = registry.index(test.examples[i].label);
  }
  parallel_for(test.size(), threads,
               [&](std::size_t i) { preds[i] = predictor(test.examples[i].features); });

  ConfusionMatrix confusion(c);
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (preds[i] < 0 || static_cast<std::size_t>(preds[i]) >= c) {
      throw std::runtime_error("run_realworld_eval: prediction out of range");
    }
    confusion.at(true_labels[i], preds[i]) += 1;
  }

  // Classes without test examples are excluded from the subsets; the
  // registry knows which those are.
  auto present = [&](const std::vector<int>& subset) {
    std::vector<int> out;
    for (int cls : subset) {
      if (confusion.row_sum(cls) > 0) out.push_back(cls);
    }
    return out;
  };
  std::vector<int> all_classes;
  for (std::size_t i = 0; i < c; ++i) all_classes.push_back(static_cast<int>(i));

  MetricReport report;
  report.runs = 1;
  report.top1 = MetricValue{top1_accuracy(preds, true_labels), 0.0};
  const auto all_present = present(all_classes);
  const auto common_present = present(registry.group_indices(ClassGroup::Common));
  const auto rare_present = present(registry.group_indices(ClassGroup::Rare));
  report.ba_all = MetricValue{balanced_accuracy(confusion, all_present), 0.0};
  if (!common_present.empty()) {
    report.ba_common = MetricValue{balanced_accuracy(confusion, common_present), 0.0};
  }
  if (!rare_present.empty()) {
    report.ba_rare = MetricValue{balanced_accuracy(confusion, rare_present), 0.0};
  }
  report.per_class_recall.assign(c, std::numeric_limits<double>::quiet_NaN());
  for (int cls : all_present) {
    report.per_class_recall[static_cast<std::size_t>(cls)] =
        static_cast<double>(confusion.at(cls, cls)) /
        static_cast<double>(confusion.row_sum(cls));
  }
  return report;
}

MetricReport run_realworld_eval(const Predictor& predictor, const Dataset& test,
                                const ClassRegistry& registry, int threads) {
  return run_realworld_eval(
      LabelPredictor([&](const Vector& x) { return predictor(x).argmax(); }), test,
      registry, threads);
}

}  // namespace longtail
