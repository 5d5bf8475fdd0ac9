#pragma once

#include <vector>

#include "longtail/data_model.hpp"
#include "longtail/numerics.hpp"

namespace longtail {

// out = f - logsumexp(f); softmax-invariant, logsumexp(out) = 0.
Vector normalize_logits(const Vector& f);

// Mean of LogSumExp-normalized member logits.
Vector ensemble_logits(const std::vector<Vector>& member_logits);

// Per-class geometric mean with exponent 1/M, renormalized. Equivalent to
// softmax(ensemble_logits(log members)); kept as the algebraic cross-check
// route, ensemble_logits is the numerically preferred path.
Vector ensemble_probs_geomean(const std::vector<Vector>& member_probs);

enum class Route { CommonToCsl, RareToFsl, NoRouting };

struct RoutedPrediction {
  int final_label = 0;
  ModelOutput ensemble;
  int csl_label = -1;
  int fsl_label = -1;
  Route route = Route::NoRouting;
};

// Common ensemble argmax takes the CSL family's label, rare takes the FSL
// family's; each family's label comes from its own sub-ensemble output.
RoutedPrediction route_prediction(const ModelOutput& ensemble_out,
                                  const ModelOutput& csl_out, const ModelOutput& fsl_out,
                                  const ClassRegistry& registry);

RoutedPrediction unrouted_prediction(const ModelOutput& ensemble_out);

}  // namespace longtail
