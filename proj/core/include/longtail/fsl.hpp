#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "longtail/data_model.hpp"
#include "longtail/mlp.hpp"
#include "longtail/numerics.hpp"

namespace longtail {

enum class FslMethod { Knn, BaselinePP, Matching, Proto, Relation, Maml, ProtoMaml };

FslMethod fsl_method_from_string(const std::string& name);
std::string fsl_method_to_string(FslMethod m);
bool is_batch_method(FslMethod m);

struct FslConfig {
  FslMethod method = FslMethod::Proto;
  std::vector<std::size_t> embed_hidden = {64};
  std::size_t embed_dim = 32;
  std::vector<std::size_t> relation_hidden = {64};
  EpisodeSpec train_episode;  // N-way-k-shot(-q) used during meta-training
  std::int64_t steps = 2000;
  int batch_size = 64;  // batch methods only
  double lr = 1e-3;
  double decay_factor = 0.95;
  std::int64_t decay_interval = 1000;
  int inner_steps = 5;     // MAML family
  double inner_lr = 0.01;  // MAML family
  double bpp_scale = 10.0;
  int bpp_finetune_steps = 100;
  double bpp_finetune_lr = 0.01;
  std::int64_t eval_every = 100;
  int patience = 10;
  int val_episodes = 20;

  void validate() const;
};

struct MetaModel {
  FslMethod method = FslMethod::Proto;
  FslConfig config;
  MlpParams embedder;                  // for MAML family: the learned initialization
  std::optional<MlpParams> relation;   // relation module, 2*E_dim -> 1
};

// Linear classification head on top of the embedding: logits = W e + b.
struct LinearHead {
  Matrix w;
  Vector b;

  static LinearHead zeros(std::size_t classes, std::size_t embed_dim);
};

Vector head_apply(const LinearHead& head, const Vector& embedding);

// Per-class embedded support examples plus their mean-embedding prototypes.
struct SupportIndex {
  std::vector<std::string> class_labels;
  std::vector<std::vector<Vector>> embedded;  // [class][shot]
  std::vector<Vector> prototypes;
};

SupportIndex build_support_index(const MlpParams& embedder, const Dataset& support,
                                 const std::vector<std::string>& class_order);
SupportIndex build_support_index(const MlpParams& embedder,
                                 const std::vector<std::pair<FeatureExample, int>>& support,
                                 std::size_t n_classes);

// logit_c = cosine(embed(x), prototype_c).
ModelOutput knn_predict(const MlpParams& embedder, const SupportIndex& index,
                        const Vector& x);

// Attention over support embeddings; probability_c sums the attention of
// class-c supports; logits are log probabilities.
ModelOutput matching_predict(const MlpParams& embedder,
                             const std::vector<std::pair<FeatureExample, int>>& support,
                             std::size_t n_classes, const Vector& x);

// logit_c = -||embed(x) - prototype_c||^2.
ModelOutput proto_predict(const MlpParams& embedder, const SupportIndex& index,
                          const Vector& x);

// Relation scores: logits are the pre-sigmoid relation outputs, probs the
// normalized sigmoid scores.
ModelOutput relation_predict(const MlpParams& embedder, const MlpParams& relation,
                             const SupportIndex& index, const Vector& x);

// Embedder + head trained jointly in the MAML inner loop.
struct AdaptableNet {
  MlpParams embedder;
  LinearHead head;
};

Vector adaptable_apply(const AdaptableNet& net, const Vector& x);

struct AdaptationDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Plain gradient descent on the mean support CE for inner_steps steps.
AdaptableNet maml_adapt(const AdaptableNet& init,
                        const std::vector<LabeledExample>& support, int inner_steps,
                        double inner_lr);

// Generic inner loop used by tests: theta_{t+1} = theta_t - lr * grad(theta_t).
MlpParams maml_adapt_generic(const MlpParams& init, int inner_steps, double inner_lr,
                             const std::function<MlpGrads(const MlpParams&)>& grad_fn);

// W_c = 2 * prototype_c, b_c = -||prototype_c||^2; argmax-equivalent to
// proto_predict, differing per query only by a class-independent constant.
LinearHead proto_maml_head_init(const SupportIndex& index);

MetaModel meta_train(const FslConfig& config, const Dataset& source,
                     const std::vector<std::string>& train_pool,
                     const std::vector<std::string>& val_pool, std::uint64_t seed);

// Batch methods (KNN, Baseline++): embedder + all-train-classes linear head
// trained with CE; the head is discarded.
MetaModel batch_train(const FslConfig& config, const Dataset& train,
                      const Dataset& val, std::uint64_t seed);

// Cosine-similarity head: logits = scale * cos(embed(x), w_c).
struct CosineHead {
  Matrix w;  // one row per class
  double scale = 10.0;
};

Vector cosine_head_apply(const MlpParams& embedder, const CosineHead& head,
                         const Vector& x);

// Trains the cosine head on the support with the embedder frozen.
CosineHead baselinepp_finetune(const MetaModel& model,
                               const std::vector<std::pair<FeatureExample, int>>& support,
                               std::size_t n_classes);

// Predictions for one episode's query set, episode-local indices.
std::vector<int> fsl_episode_predict(const MetaModel& model, const Episode& episode);

// All-way deployment: adapts/finetunes on the full support set once, then
// predicts over all registry classes.
class FslAllWayPredictor {
 public:
  FslAllWayPredictor(const MetaModel& model, const Dataset& support_all,
                     const ClassRegistry& registry);
  ModelOutput predict(const Vector& x) const;

 private:
  const MetaModel& model_;
  std::vector<std::string> class_order_;
  std::vector<std::pair<FeatureExample, int>> support_pairs_;
  SupportIndex index_;
  std::optional<AdaptableNet> adapted_;   // MAML family
  std::optional<CosineHead> bpp_head_;    // Baseline++
};

ModelOutput fsl_all_way_predict(const MetaModel& model, const Dataset& support_all,
                                const ClassRegistry& registry, const Vector& x);

}  // namespace longtail
