#include "longtail/ensemble.hpp"

#include <cmath>
#include <stdexcept>

namespace longtail {

Vector normalize_logits(const Vector& f) {
  const double lse = logsumexp(f);
  Vector out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] - lse;
  return out;
}

Vector ensemble_logits(const std::vector<Vector>& member_logits) {
  if (member_logits.empty()) {
    throw std::invalid_argument("ensemble_logits: no members");
  }
  const std::size_t c = member_logits.front().size();
  Vector mean(c, 0.0);
  const double inv_m = 1.0 / static_cast<double>(member_logits.size());
  for (const auto& f : member_logits) {
    if (f.size() != c) throw std::invalid_argument("ensemble_logits: length mismatch");
    const Vector n = normalize_logits(f);
    for (std::size_t i = 0; i < c; ++i) mean[i] += inv_m * n[i];
  }
  return mean;
}

Vector ensemble_probs_geomean(const std::vector<Vector>& member_probs) {
  if (member_probs.empty()) {
    throw std::invalid_argument("ensemble_probs_geomean: no members");
  }
  const std::size_t c = member_probs.front().size();
  const double inv_m = 1.0 / static_cast<double>(member_probs.size());
  Vector log_mean(c, 0.0);
  for (const auto& p : member_probs) {
    if (p.size() != c) {
      throw std::invalid_argument("ensemble_probs_geomean: length mismatch");
    }
    for (std::size_t i = 0; i < c; ++i) {
      log_mean[i] += inv_m * std::log(std::max(p[i], 1e-300));
    }
  }
  double total = 0.0;
  Vector out(c);
  const double shift = logsumexp(log_mean);
  for (std::size_t i = 0; i < c; ++i) {
    out[i] = std::exp(log_mean[i] - shift);
    total += out[i];
  }
  if (!(total > 0.0)) {
    throw std::runtime_error("ensemble_probs_geomean: no probability mass");
  }
  for (double& v : out) v /= total;
  return out;
}

RoutedPrediction route_prediction(const ModelOutput& ensemble_out,
                                  const ModelOutput& csl_out, const ModelOutput& fsl_out,
                                  const ClassRegistry& registry) {
  const std::size_t c = registry.size();
  if (ensemble_out.logits.size() != c || csl_out.logits.size() != c ||
      fsl_out.logits.size() != c) {
    throw std::invalid_argument("route_prediction: output size != registry class count");
  }
  RoutedPrediction out;
  out.ensemble = ensemble_out;
  out.csl_label = csl_out.argmax();
  out.fsl_label = fsl_out.argmax();
  const int ens_label = ensemble_out.argmax();
  if (registry.group_of(ens_label) == ClassGroup::Common) {
    out.route = Route::CommonToCsl;
    out.final_label = out.csl_label;
  } else {
    out.route = Route::RareToFsl;
    out.final_label = out.fsl_label;
  }
  return out;
}

RoutedPrediction unrouted_prediction(const ModelOutput& ensemble_out) {
  RoutedPrediction out;
  out.final_label = ensemble_out.argmax();
  out.ensemble = ensemble_out;
  out.route = Route::NoRouting;
  return out;
}

}  // namespace longtail
