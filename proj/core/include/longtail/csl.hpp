#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "longtail/data_model.hpp"
#include "longtail/mlp.hpp"
#include "longtail/numerics.hpp"

namespace longtail {

enum class Technique { Upsampling, BiasInit, Ifw, FocalLoss, PriorCorrection };

Technique technique_from_string(const std::string& name);
std::string technique_to_string(Technique t);

struct CslConfig {
  std::set<Technique> techniques;
  double gamma = 2.0;  // focal focusing parameter, used when FocalLoss is on
  std::int64_t steps = 5000;
  int batch_size = 64;
  double lr = 1e-3;
  double decay_factor = 0.95;
  std::int64_t decay_interval = 1000;
  std::vector<std::size_t> hidden = {64, 64};
  OptKind optimizer = OptKind::Adam;
  // Early stopping on validation balanced accuracy.
  std::int64_t eval_every = 100;
  int patience = 10;

  bool has(Technique t) const { return techniques.count(t) > 0; }
  void validate() const;
};

struct CslModel {
  MlpParams net;  // embedder layers + linear head over all C classes
  ClassRegistry registry;
  Vector priors;  // training class priors, by registry index
  bool prior_correction = false;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// prior_c = count_c / total over registry classes; absent classes get 0.
Vector class_priors(const Dataset& train, const ClassRegistry& registry);

// w_c proportional to 1/count_c, scaled so the weights sum to C.
Vector ifw_weights(const Dataset& train, const ClassRegistry& registry);

// Sets the final-layer bias to ln(count_c); weights untouched.
void bias_init(MlpParams& net, const Dataset& train, const ClassRegistry& registry);

// Draws batch indices into `train`. Upsampling picks a class uniformly
// then an example uniformly within it (with replacement); the baseline is
// uniform over all examples.
class BatchSampler {
 public:
  BatchSampler(const Dataset& train, bool upsampling, int batch_size);
  std::vector<std::size_t> draw(Rng& rng) const;

 private:
  const Dataset& train_;
  bool upsampling_;
  int batch_size_;
  std::vector<std::vector<std::size_t>> by_class_;
};

CslModel train_csl(const Dataset& train, const Dataset& val,
                   const ClassRegistry& registry, const CslConfig& config,
                   std::uint64_t seed);

ModelOutput predict_csl(const CslModel& model, const Vector& x);

// out_c proportional to probs_c / priors_c, renormalized.
Vector prior_correct(const Vector& probs, const Vector& priors);

}  // namespace longtail
