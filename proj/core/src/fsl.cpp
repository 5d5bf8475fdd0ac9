#include "longtail/fsl.hpp"

#include "longtail/csl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace longtail {

namespace {

Vector embed(const MlpParams& embedder, const Vector& x, MlpCache* cache = nullptr) {
  return mlp_forward(embedder, x, cache);
}

// d cos(u, e) / du; gradient is 0 by convention when either norm is 0.
void accumulate_cosine_grad(const Vector& u, const Vector& e, double upstream,
                            Vector& du, Vector& de) {
  const double nu = norm(u);
  const double ne = norm(e);
  if (nu == 0.0 || ne == 0.0) return;
  const double c = dot(u, e) / (nu * ne);
  for (std::size_t i = 0; i < u.size(); ++i) {
    du[i] += upstream * (e[i] / (nu * ne) - c * u[i] / (nu * nu));
    de[i] += upstream * (u[i] / (nu * ne) - c * e[i] / (ne * ne));
  }
}

Vector ce_logit_grad(const Vector& logits, int label) {
  Vector g = softmax(logits);
  g[static_cast<std::size_t>(label)] -= 1.0;
  return g;
}

double ce_loss(const Vector& logits, int label) {
  return logsumexp(logits) - logits[static_cast<std::size_t>(label)];
}

struct EmbeddedSupport {
  std::vector<MlpCache> caches;
  std::vector<Vector> embeddings;
  std::vector<std::vector<std::size_t>> by_class;  // indices into support list
  std::vector<Vector> prototypes;
};

EmbeddedSupport embed_support(const MlpParams& embedder,
                              const std::vector<std::pair<FeatureExample, int>>& support,
                              std::size_t n_classes, bool with_prototypes) {
  EmbeddedSupport out;
  out.by_class.resize(n_classes);
  for (std::size_t i = 0; i < support.size(); ++i) {
    MlpCache cache;
    out.embeddings.push_back(embed(embedder, support[i].first.features, &cache));
    out.caches.push_back(std::move(cache));
    out.by_class[static_cast<std::size_t>(support[i].second)].push_back(i);
  }
  if (with_prototypes) {
    const std::size_t e_dim = embedder.output_dim();
    out.prototypes.assign(n_classes, Vector(e_dim, 0.0));
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (out.by_class[c].empty()) {
        throw std::invalid_argument("embed_support: class " + std::to_string(c) +
                                    " has no support examples");
      }
      for (std::size_t i : out.by_class[c]) {
        for (std::size_t d = 0; d < e_dim; ++d) {
          out.prototypes[c][d] += out.embeddings[i][d];
        }
      }
      const double inv = 1.0 / static_cast<double>(out.by_class[c].size());
      for (double& v : out.prototypes[c]) v *= inv;
    }
  }
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---- per-method episode losses with embedder (+relation) gradients ----

double proto_episode_grads(const MlpParams& embedder, const Episode& ep,
                           MlpGrads& acc) {
  const std::size_t n = ep.class_labels.size();
  EmbeddedSupport sup = embed_support(embedder, ep.support, n, true);
  const std::size_t e_dim = embedder.output_dim();
  std::vector<Vector> d_proto(n, Vector(e_dim, 0.0));
  const double inv_q = 1.0 / static_cast<double>(ep.query.size());
  double loss = 0.0;
  for (const auto& [qex, qlabel] : ep.query) {
    MlpCache qcache;
    const Vector u = embed(embedder, qex.features, &qcache);
    Vector logits(n);
    for (std::size_t c = 0; c < n; ++c) logits[c] = -sq_euclidean(u, sup.prototypes[c]);
    loss += ce_loss(logits, qlabel) * inv_q;
    Vector g = ce_logit_grad(logits, qlabel);
    Vector du(e_dim, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      const double gc = g[c] * inv_q;
      for (std::size_t d = 0; d < e_dim; ++d) {
        const double diff = u[d] - sup.prototypes[c][d];
        du[d] += gc * (-2.0) * diff;
        d_proto[c][d] += gc * 2.0 * diff;
      }
    }
    mlp_backward(embedder, qcache, du, acc);
  }
  for (std::size_t c = 0; c < n; ++c) {
    const double inv_k = 1.0 / static_cast<double>(sup.by_class[c].size());
    for (std::size_t i : sup.by_class[c]) {
      Vector de(e_dim);
      for (std::size_t d = 0; d < e_dim; ++d) de[d] = d_proto[c][d] * inv_k;
      mlp_backward(embedder, sup.caches[i], de, acc);
    }
  }
  return loss;
}

double matching_episode_grads(const MlpParams& embedder, const Episode& ep,
                              MlpGrads& acc) {
  const std::size_t n = ep.class_labels.size();
  EmbeddedSupport sup = embed_support(embedder, ep.support, n, false);
  const std::size_t e_dim = embedder.output_dim();
  const std::size_t s = ep.support.size();
  std::vector<Vector> de(s, Vector(e_dim, 0.0));
  const double inv_q = 1.0 / static_cast<double>(ep.query.size());
  double loss = 0.0;
  for (const auto& [qex, qlabel] : ep.query) {
    MlpCache qcache;
    const Vector u = embed(embedder, qex.features, &qcache);
    Vector cos(s);
    for (std::size_t i = 0; i < s; ++i) cos[i] = cosine_similarity(u, sup.embeddings[i]);
    const Vector a = softmax(cos);
    Vector p(n, 0.0);
    for (std::size_t i = 0; i < s; ++i) p[static_cast<std::size_t>(ep.support[i].second)] += a[i];
    const double pt = std::max(p[static_cast<std::size_t>(qlabel)], 1e-300);
    loss += -std::log(pt) * inv_q;
    // dL/da_i = -[y_i == t] / p_t, then through the softmax jacobian.
    Vector dla(s, 0.0);
    for (std::size_t i = 0; i < s; ++i) {
      if (ep.support[i].second == qlabel) dla[i] = -inv_q / pt;
    }
    double inner = 0.0;
    for (std::size_t i = 0; i < s; ++i) inner += a[i] * dla[i];
    Vector du(e_dim, 0.0);
    for (std::size_t i = 0; i < s; ++i) {
      const double dc = a[i] * (dla[i] - inner);
      accumulate_cosine_grad(u, sup.embeddings[i], dc, du, de[i]);
    }
    mlp_backward(embedder, qcache, du, acc);
  }
  for (std::size_t i = 0; i < s; ++i) mlp_backward(embedder, sup.caches[i], de[i], acc);
  return loss;
}

double relation_episode_grads(const MlpParams& embedder, const MlpParams& relation,
                              const Episode& ep, MlpGrads& emb_acc,
                              MlpGrads& rel_acc) {
  const std::size_t n = ep.class_labels.size();
  EmbeddedSupport sup = embed_support(embedder, ep.support, n, true);
  const std::size_t e_dim = embedder.output_dim();
  std::vector<Vector> d_proto(n, Vector(e_dim, 0.0));
  const double inv_qn = 1.0 / (static_cast<double>(ep.query.size()) * static_cast<double>(n));
  double loss = 0.0;
  for (const auto& [qex, qlabel] : ep.query) {
    MlpCache qcache;
    const Vector u = embed(embedder, qex.features, &qcache);
    Vector du(e_dim, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      Vector concat(2 * e_dim);
      std::copy(sup.prototypes[c].begin(), sup.prototypes[c].end(), concat.begin());
      std::copy(u.begin(), u.end(), concat.begin() + static_cast<std::ptrdiff_t>(e_dim));
      MlpCache rcache;
      const Vector z = mlp_forward(relation, concat, &rcache);
      const double sc = sigmoid(z[0]);
      const double target = (static_cast<int>(c) == qlabel) ? 1.0 : 0.0;
      loss += (sc - target) * (sc - target) * inv_qn;
      const double dz = 2.0 * (sc - target) * sc * (1.0 - sc) * inv_qn;
      const Vector dconcat = mlp_backward(relation, rcache, Vector{dz}, rel_acc);
      for (std::size_t d = 0; d < e_dim; ++d) {
        d_proto[c][d] += dconcat[d];
        du[d] += dconcat[e_dim + d];
      }
    }
    mlp_backward(embedder, qcache, du, emb_acc);
  }
  for (std::size_t c = 0; c < n; ++c) {
    const double inv_k = 1.0 / static_cast<double>(sup.by_class[c].size());
    for (std::size_t i : sup.by_class[c]) {
      Vector de(e_dim);
      for (std::size_t d = 0; d < e_dim; ++d) de[d] = d_proto[c][d] * inv_k;
      mlp_backward(embedder, sup.caches[i], de, emb_acc);
    }
  }
  return loss;
}

// Mean CE over the batch; accumulates embedder and head gradients.
double adaptable_ce_grads(const AdaptableNet& net,
                          const std::vector<LabeledExample>& batch, MlpGrads& emb_acc,
                          Matrix& dw, Vector& db) {
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& ex : batch) {
    MlpCache cache;
    const Vector e = mlp_forward(net.embedder, ex.features, &cache);
    const Vector logits = head_apply(net.head, e);
    loss += ce_loss(logits, ex.label) * inv_n;
    Vector dlogits = ce_logit_grad(logits, ex.label);
    for (double& g : dlogits) g *= inv_n;
    Vector de(e.size(), 0.0);
    for (std::size_t r = 0; r < net.head.w.rows; ++r) {
      db[r] += dlogits[r];
      for (std::size_t c = 0; c < net.head.w.cols; ++c) {
        dw(r, c) += dlogits[r] * e[c];
        de[c] += net.head.w(r, c) * dlogits[r];
      }
    }
    mlp_backward(net.embedder, cache, de, emb_acc);
  }
  return loss;
}

std::vector<LabeledExample> to_batch(
    const std::vector<std::pair<FeatureExample, int>>& support) {
  std::vector<LabeledExample> out;
  out.reserve(support.size());
  for (const auto& [ex, label] : support) out.push_back({ex.features, label});
  return out;
}

AdaptableNet maml_init_net(const MetaModel& model, std::size_t n_classes) {
  AdaptableNet net;
  net.embedder = model.embedder;
  net.head = LinearHead::zeros(n_classes, model.embedder.output_dim());
  return net;
}

AdaptableNet proto_maml_init_net(const MetaModel& model, const SupportIndex& index) {
  AdaptableNet net;
  net.embedder = model.embedder;
  net.head = proto_maml_head_init(index);
  return net;
}

// First-order outer gradient: query CE gradient taken at the adapted
// parameters, applied to the embedder initialization.
double maml_episode_grads(const MetaModel& model, const Episode& ep, MlpGrads& acc,
                          bool proto_init) {
  const std::size_t n = ep.class_labels.size();
  AdaptableNet net =
      proto_init
          ? proto_maml_init_net(model,
                                build_support_index(model.embedder, ep.support, n))
          : maml_init_net(model, n);
  const AdaptableNet adapted = maml_adapt(net, to_batch(ep.support),
                                          model.config.inner_steps,
                                          model.config.inner_lr);
  Matrix dw(adapted.head.w.rows, adapted.head.w.cols);
  Vector db(adapted.head.b.size(), 0.0);
  return adaptable_ce_grads(adapted, to_batch(ep.query), acc, dw, db);
}

}  // namespace

FslMethod fsl_method_from_string(const std::string& name) {
  if (name == "knn") return FslMethod::Knn;
  if (name == "baselinepp") return FslMethod::BaselinePP;
  if (name == "matching") return FslMethod::Matching;
  if (name == "proto") return FslMethod::Proto;
  if (name == "relation") return FslMethod::Relation;
  if (name == "maml") return FslMethod::Maml;
  if (name == "protomaml") return FslMethod::ProtoMaml;
  throw std::invalid_argument("unknown fsl method: " + name);
}

std::string fsl_method_to_string(FslMethod m) {
  switch (m) {
    case FslMethod::Knn: return "knn";
    case FslMethod::BaselinePP: return "baselinepp";
    case FslMethod::Matching: return "matching";
    case FslMethod::Proto: return "proto";
    case FslMethod::Relation: return "relation";
    case FslMethod::Maml: return "maml";
    case FslMethod::ProtoMaml: return "protomaml";
  }
  throw std::invalid_argument("bad fsl method enum");
}

bool is_batch_method(FslMethod m) {
  return m == FslMethod::Knn || m == FslMethod::BaselinePP;
}

void FslConfig::validate() const {
  train_episode.validate();
  if (steps < 0) throw std::invalid_argument("FslConfig: steps must be >= 0");
  if (lr <= 0.0) throw std::invalid_argument("FslConfig: lr must be > 0");
  if (inner_steps < 0) throw std::invalid_argument("FslConfig: inner_steps must be >= 0");
  if (inner_lr <= 0.0) throw std::invalid_argument("FslConfig: inner_lr must be > 0");
  if (embed_dim < 1) throw std::invalid_argument("FslConfig: embed_dim must be >= 1");
  if (bpp_finetune_steps < 0) {
    throw std::invalid_argument("FslConfig: bpp_finetune_steps must be >= 0");
  }
}

LinearHead LinearHead::zeros(std::size_t classes, std::size_t embed_dim) {
  LinearHead h;
  h.w = Matrix(classes, embed_dim);
  h.b.assign(classes, 0.0);
  return h;
}

Vector head_apply(const LinearHead& head, const Vector& embedding) {
  if (embedding.size() != head.w.cols) {
    throw std::invalid_argument("head_apply: embedding dimension mismatch");
  }
  Vector logits(head.w.rows);
  for (std::size_t r = 0; r < head.w.rows; ++r) {
    double s = head.b[r];
    for (std::size_t c = 0; c < head.w.cols; ++c) s += head.w(r, c) * embedding[c];
    logits[r] = s;
  }
  return logits;
}

SupportIndex build_support_index(const MlpParams& embedder,
                                 const std::vector<std::pair<FeatureExample, int>>& support,
                                 std::size_t n_classes) {
  EmbeddedSupport sup = embed_support(embedder, support, n_classes, true);
  SupportIndex index;
  index.class_labels.resize(n_classes);
  index.embedded.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t i : sup.by_class[c]) index.embedded[c].push_back(sup.embeddings[i]);
  }
  index.prototypes = std::move(sup.prototypes);
  return index;
}

SupportIndex build_support_index(const MlpParams& embedder, const Dataset& support,
                                 const std::vector<std::string>& class_order) {
  std::unordered_map<std::string, int> idx;
  for (std::size_t i = 0; i < class_order.size(); ++i) {
    idx[class_order[i]] = static_cast<int>(i);
  }
  std::vector<std::pair<FeatureExample, int>> pairs;
  for (const auto& ex : support.examples) {
    auto it = idx.find(ex.label);
    if (it == idx.end()) {
      throw std::invalid_argument("build_support_index: label outside class order: " +
                                  ex.label);
    }
    pairs.emplace_back(ex, it->second);
  }
  SupportIndex index = build_support_index(embedder, pairs, class_order.size());
  index.class_labels = class_order;
  return index;
}

ModelOutput knn_predict(const MlpParams& embedder, const SupportIndex& index,
                        const Vector& x) {
  if (index.prototypes.empty()) throw std::invalid_argument("knn_predict: empty index");
  const Vector u = embed(embedder, x);
  Vector logits(index.prototypes.size());
  for (std::size_t c = 0; c < index.prototypes.size(); ++c) {
    logits[c] = cosine_similarity(u, index.prototypes[c]);
  }
  return ModelOutput::from_logits(std::move(logits));
}

ModelOutput matching_predict(const MlpParams& embedder,
                             const std::vector<std::pair<FeatureExample, int>>& support,
                             std::size_t n_classes, const Vector& x) {
  if (support.empty()) throw std::invalid_argument("matching_predict: empty support");
  const Vector u = embed(embedder, x);
  Vector cos(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    cos[i] = cosine_similarity(u, embed(embedder, support[i].first.features));
  }
  const Vector a = softmax(cos);
  ModelOutput out;
  out.probs.assign(n_classes, 0.0);
  for (std::size_t i = 0; i < support.size(); ++i) {
    out.probs[static_cast<std::size_t>(support[i].second)] += a[i];
  }
  out.logits.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    out.logits[c] = std::log(std::max(out.probs[c], 1e-300));
  }
  return out;
}

ModelOutput proto_predict(const MlpParams& embedder, const SupportIndex& index,
                          const Vector& x) {
  if (index.prototypes.empty()) throw std::invalid_argument("proto_predict: empty index");
  const Vector u = embed(embedder, x);
  Vector logits(index.prototypes.size());
  for (std::size_t c = 0; c < index.prototypes.size(); ++c) {
    logits[c] = -sq_euclidean(u, index.prototypes[c]);
  }
  return ModelOutput::from_logits(std::move(logits));
}

ModelOutput relation_predict(const MlpParams& embedder, const MlpParams& relation,
                             const SupportIndex& index, const Vector& x) {
  if (index.prototypes.empty()) {
    throw std::invalid_argument("relation_predict: empty index");
  }
  const std::size_t e_dim = embedder.output_dim();
  if (relation.input_dim() != 2 * e_dim || relation.output_dim() != 1) {
    throw std::invalid_argument("relation_predict: relation module shape mismatch");
  }
  const Vector u = embed(embedder, x);
  ModelOutput out;
  out.logits.resize(index.prototypes.size());
  out.probs.resize(index.prototypes.size());
  double total = 0.0;
  for (std::size_t c = 0; c < index.prototypes.size(); ++c) {
    Vector concat(2 * e_dim);
    std::copy(index.prototypes[c].begin(), index.prototypes[c].end(), concat.begin());
    std::copy(u.begin(), u.end(), concat.begin() + static_cast<std::ptrdiff_t>(e_dim));
    out.logits[c] = mlp_apply(relation, concat)[0];
    out.probs[c] = sigmoid(out.logits[c]);
    total += out.probs[c];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

Vector adaptable_apply(const AdaptableNet& net, const Vector& x) {
  return head_apply(net.head, mlp_apply(net.embedder, x));
}

AdaptableNet maml_adapt(const AdaptableNet& init,
                        const std::vector<LabeledExample>& support, int inner_steps,
                        double inner_lr) {
  if (inner_steps < 0) throw std::invalid_argument("maml_adapt: inner_steps < 0");
  if (inner_lr <= 0.0) throw std::invalid_argument("maml_adapt: inner_lr <= 0");
  AdaptableNet net = init;
  for (int t = 0; t < inner_steps; ++t) {
    MlpGrads emb_grads = zeros_like(net.embedder);
    Matrix dw(net.head.w.rows, net.head.w.cols);
    Vector db(net.head.b.size(), 0.0);
    const double loss = adaptable_ce_grads(net, support, emb_grads, dw, db);
    if (!std::isfinite(loss)) {
      throw AdaptationDiverged("maml_adapt: non-finite loss at inner step " +
                               std::to_string(t));
    }
    axpy(net.embedder, emb_grads, -inner_lr);
    for (std::size_t i = 0; i < dw.data.size(); ++i) net.head.w.data[i] -= inner_lr * dw.data[i];
    for (std::size_t i = 0; i < db.size(); ++i) net.head.b[i] -= inner_lr * db[i];
  }
  return net;
}

MlpParams maml_adapt_generic(const MlpParams& init, int inner_steps, double inner_lr,
                             const std::function<MlpGrads(const MlpParams&)>& grad_fn) {
  if (inner_steps < 0) throw std::invalid_argument("maml_adapt_generic: inner_steps < 0");
  if (inner_lr <= 0.0) throw std::invalid_argument("maml_adapt_generic: inner_lr <= 0");
  MlpParams params = init;
  for (int t = 0; t < inner_steps; ++t) {
    axpy(params, grad_fn(params), -inner_lr);
  }
  return params;
}

LinearHead proto_maml_head_init(const SupportIndex& index) {
  if (index.prototypes.empty()) {
    throw std::invalid_argument("proto_maml_head_init: empty index");
  }
  const std::size_t n = index.prototypes.size();
  const std::size_t e_dim = index.prototypes.front().size();
  LinearHead head = LinearHead::zeros(n, e_dim);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t d = 0; d < e_dim; ++d) head.w(c, d) = 2.0 * index.prototypes[c][d];
    head.b[c] = -dot(index.prototypes[c], index.prototypes[c]);
  }
  return head;
}

Vector cosine_head_apply(const MlpParams& embedder, const CosineHead& head,
                         const Vector& x) {
  const Vector e = embed(embedder, x);
  Vector logits(head.w.rows);
  for (std::size_t c = 0; c < head.w.rows; ++c) {
    Vector wc(head.w.cols);
    for (std::size_t d = 0; d < head.w.cols; ++d) wc[d] = head.w(c, d);
    logits[c] = head.scale * cosine_similarity(e, wc);
  }
  return logits;
}

CosineHead baselinepp_finetune(const MetaModel& model,
                               const std::vector<std::pair<FeatureExample, int>>& support,
                               std::size_t n_classes) {
  if (support.empty()) throw std::invalid_argument("baselinepp_finetune: empty support");
  EmbeddedSupport sup = embed_support(model.embedder, support, n_classes, true);
  const std::size_t e_dim = model.embedder.output_dim();
  CosineHead head;
  head.scale = model.config.bpp_scale;
  head.w = Matrix(n_classes, e_dim);
  // Head rows start at the class prototypes; deterministic, no RNG needed.
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t d = 0; d < e_dim; ++d) head.w(c, d) = sup.prototypes[c][d];
  }
  const double inv_n = 1.0 / static_cast<double>(support.size());
  for (int step = 0; step < model.config.bpp_finetune_steps; ++step) {
    Matrix dw(n_classes, e_dim);
    double loss = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
      const Vector& e = sup.embeddings[i];
      Vector logits(n_classes);
      for (std::size_t c = 0; c < n_classes; ++c) {
        Vector wc(e_dim);
        for (std::size_t d = 0; d < e_dim; ++d) wc[d] = head.w(c, d);
        logits[c] = head.scale * cosine_similarity(e, wc);
      }
      loss += ce_loss(logits, support[i].second) * inv_n;
      Vector dlogits = ce_logit_grad(logits, support[i].second);
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double upstream = dlogits[c] * inv_n * head.scale;
        Vector wc(e_dim);
        for (std::size_t d = 0; d < e_dim; ++d) wc[d] = head.w(c, d);
        Vector de(e_dim, 0.0), dwc(e_dim, 0.0);
        accumulate_cosine_grad(e, wc, upstream, de, dwc);
        for (std::size_t d = 0; d < e_dim; ++d) dw(c, d) += dwc[d];
      }
    }
    if (!std::isfinite(loss)) {
      throw AdaptationDiverged("baselinepp_finetune: non-finite loss at step " +
                               std::to_string(step));
    }
    for (std::size_t i = 0; i < dw.data.size(); ++i) {
      head.w.data[i] -= model.config.bpp_finetune_lr * dw.data[i];
    }
  }
  return head;
}

std::vector<int> fsl_episode_predict(const MetaModel& model, const Episode& episode) {
  const std::size_t n = episode.class_labels.size();
  std::vector<int> preds;
  preds.reserve(episode.query.size());
  switch (model.method) {
    case FslMethod::Knn: {
      const SupportIndex index = build_support_index(model.embedder, episode.support, n);
      for (const auto& [qex, _] : episode.query) {
        preds.push_back(knn_predict(model.embedder, index, qex.features).argmax());
      }
      break;
    }
    case FslMethod::BaselinePP: {
      const CosineHead head = baselinepp_finetune(model, episode.support, n);
      for (const auto& [qex, _] : episode.query) {
        preds.push_back(argmax_index(cosine_head_apply(model.embedder, head, qex.features)));
      }
      break;
    }
    case FslMethod::Matching: {
      for (const auto& [qex, _] : episode.query) {
        preds.push_back(
            matching_predict(model.embedder, episode.support, n, qex.features).argmax());
      }
      break;
    }
    case FslMethod::Proto: {
      const SupportIndex index = build_support_index(model.embedder, episode.support, n);
      for (const auto& [qex, _] : episode.query) {
        preds.push_back(proto_predict(model.embedder, index, qex.features).argmax());
      }
      break;
    }
    case FslMethod::Relation: {
      const SupportIndex index = build_support_index(model.embedder, episode.support, n);
      for (const auto& [qex, _] : episode.query) {
        preds.push_back(
            relation_predict(model.embedder, *model.relation, index, qex.features).argmax());
      }
      break;
    }
    case FslMethod::Maml:
    case FslMethod::ProtoMaml: {
      AdaptableNet net =
          model.method == FslMethod::Maml
              ? maml_init_net(model, n)
              : proto_maml_init_net(
                    model, build_support_index(model.embedder, episode.support, n));
      const AdaptableNet adapted = maml_adapt(net, to_batch(episode.support),
                                              model.config.inner_steps,
                                              model.config.inner_lr);
      for (const auto& [qex, _] : episode.query) {
        preds.push_back(argmax_index(adaptable_apply(adapted, qex.features)));
      }
      break;
    }
  }
  return preds;
}

namespace {

double val_episode_accuracy(const MetaModel& model, const Dataset& source,
                            const std::vector<std::string>& val_pool,
                            std::uint64_t seed, std::int64_t step, int episodes) {
  double sum = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng = Rng::stream(seed, "fsl-val",
                          static_cast<std::uint64_t>(step) * 10007ULL +
                              static_cast<std::uint64_t>(e));
    const Episode ep =
        sample_episode(source, model.config.train_episode, val_pool, rng);
    const std::vector<int> preds = fsl_episode_predict(model, ep);
    long correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == ep.query[i].second) ++correct;
    }
    sum += static_cast<double>(correct) / static_cast<double>(preds.size());
  }
  return sum / static_cast<double>(episodes);
}

}  // namespace

MetaModel meta_train(const FslConfig& config, const Dataset& source,
                     const std::vector<std::string>& train_pool,
                     const std::vector<std::string>& val_pool, std::uint64_t seed) {
  config.validate();
  if (is_batch_method(config.method)) {
    throw std::invalid_argument("meta_train: batch method, use batch_train");
  }
  MetaModel model;
  model.method = config.method;
  model.config = config;

  Rng init_rng = Rng::stream(seed, "fsl-init", 0);
  std::vector<std::size_t> sizes;
  sizes.push_back(source.dim);
  for (std::size_t h : config.embed_hidden) sizes.push_back(h);
  sizes.push_back(config.embed_dim);
  model.embedder = MlpParams::init(sizes, init_rng);
  if (config.method == FslMethod::Relation) {
    std::vector<std::size_t> rsizes;
    rsizes.push_back(2 * config.embed_dim);
    for (std::size_t h : config.relation_hidden) rsizes.push_back(h);
    rsizes.push_back(1);
    model.relation = MlpParams::init(rsizes, init_rng);
  }

  OptimizerState emb_opt =
      OptimizerState::adam(config.lr, config.decay_factor, config.decay_interval);
  OptimizerState rel_opt =
      OptimizerState::adam(config.lr, config.decay_factor, config.decay_interval);

  // Early stopping needs the val pool to support full training episodes;
  // small pools (e.g. standard-protocol val splits) just train to the end.
  const bool use_early_stop =
      config.steps > 0 && !val_pool.empty() &&
      static_cast<int>(feasible_classes(source, val_pool, config.train_episode).size()) >=
          config.train_episode.n_way;
  MetaModel best = model;
  double best_val = -1.0;
  int evals_since_best = 0;

  for (std::int64_t step = 0; step < config.steps; ++step) {
    Rng ep_rng = Rng::stream(seed, "fsl-episodes", static_cast<std::uint64_t>(step));
    const Episode ep = sample_episode(source, config.train_episode, train_pool, ep_rng);
    MlpGrads emb_grads = zeros_like(model.embedder);
    double loss = 0.0;
    switch (config.method) {
      case FslMethod::Proto:
        loss = proto_episode_grads(model.embedder, ep, emb_grads);
        break;
      case FslMethod::Matching:
        loss = matching_episode_grads(model.embedder, ep, emb_grads);
        break;
      case FslMethod::Relation: {
        MlpGrads rel_grads = zeros_like(*model.relation);
        loss = relation_episode_grads(model.embedder, *model.relation, ep, emb_grads,
                                      rel_grads);
        if (!std::isfinite(loss)) {
          throw TrainingDiverged("training: non-finite loss at step " + std::to_string(step));
        }
        optimizer_step(rel_opt, *model.relation, rel_grads);
        break;
      }
      case FslMethod::Maml:
        loss = maml_episode_grads(model, ep, emb_grads, false);
        break;
      case FslMethod::ProtoMaml:
        loss = maml_episode_grads(model, ep, emb_grads, true);
        break;
      default:
        break;
    }
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("training: non-finite loss at step " + std::to_string(step));
    }
    optimizer_step(emb_opt, model.embedder, emb_grads);

    if (use_early_stop && (step + 1) % config.eval_every == 0) {
      const double acc = val_episode_accuracy(model, source, val_pool, seed, step,
                                              config.val_episodes);
      if (acc > best_val) {
        best_val = acc;
        best = model;
        evals_since_best = 0;
      } else if (++evals_since_best >= config.patience) {
        return best;
      }
    }
  }
  if (use_early_stop && best_val >= 0.0) {
    const double final_acc = val_episode_accuracy(model, source, val_pool, seed,
                                                  config.steps, config.val_episodes);
    if (final_acc < best_val) return best;
  }
  return model;
}

MetaModel batch_train(const FslConfig& config, const Dataset& train,
                      const Dataset& val, std::uint64_t seed) {
  config.validate();
  if (!is_batch_method(config.method)) {
    throw std::invalid_argument("batch_train: episodic method, use meta_train");
  }
  if (train.empty()) throw std::invalid_argument("batch_train: empty train set");

  // Class indexing over the train label set.
  const std::vector<std::string> class_order = train.labels();
  std::unordered_map<std::string, int> class_of;
  for (std::size_t i = 0; i < class_order.size(); ++i) {
    class_of[class_order[i]] = static_cast<int>(i);
  }

  MetaModel model;
  model.method = config.method;
  model.config = config;

  Rng init_rng = Rng::stream(seed, "fsl-init", 0);
  std::vector<std::size_t> sizes;
  sizes.push_back(train.dim);
  for (std::size_t h : config.embed_hidden) sizes.push_back(h);
  sizes.push_back(config.embed_dim);
  model.embedder = MlpParams::init(sizes, init_rng);

  AdaptableNet net;
  net.embedder = model.embedder;
  net.head = LinearHead::zeros(class_order.size(), config.embed_dim);
  {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(config.embed_dim + class_order.size()));
    for (double& x : net.head.w.data) x = init_rng.uniform(-limit, limit);
  }

  OptimizerState emb_opt =
      OptimizerState::adam(config.lr, config.decay_factor, config.decay_interval);
  OptimizerState head_opt = emb_opt;
  MlpParams head_as_mlp;  // reuse the optimizer over a single-layer view
  head_as_mlp.weights.push_back(net.head.w);
  head_as_mlp.biases.push_back(net.head.b);

  Rng batch_rng = Rng::stream(seed, "fsl-batches", 0);
  const std::vector<std::string> val_pool = val.empty() ? std::vector<std::string>{}
                                                        : val.labels();
  const bool use_early_stop =
      !feasible_classes(val, val_pool, config.train_episode).empty() &&
      static_cast<int>(feasible_classes(val, val_pool, config.train_episode).size()) >=
          config.train_episode.n_way;
  MetaModel best = model;
  double best_val = -1.0;
  int evals_since_best = 0;

  for (std::int64_t step = 0; step < config.steps; ++step) {
    std::vector<LabeledExample> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));
    for (int i = 0; i < config.batch_size; ++i) {
      const auto& ex = train.examples[static_cast<std::size_t>(
          batch_rng.uniform_int(train.size()))];
      batch.push_back({ex.features, class_of.at(ex.label)});
    }
    MlpGrads emb_grads = zeros_like(net.embedder);
    Matrix dw(net.head.w.rows, net.head.w.cols);
    Vector db(net.head.b.size(), 0.0);
    const double loss = adaptable_ce_grads(net, batch, emb_grads, dw, db);
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("training: non-finite loss at step " + std::to_string(step));
    }
    optimizer_step(emb_opt, net.embedder, emb_grads);
    head_as_mlp.weights[0] = net.head.w;
    head_as_mlp.biases[0] = net.head.b;
    MlpGrads head_grads;
    head_grads.weights.push_back(dw);
    head_grads.biases.push_back(db);
    optimizer_step(head_opt, head_as_mlp, head_grads);
    net.head.w = head_as_mlp.weights[0];
    net.head.b = head_as_mlp.biases[0];

    if (use_early_stop && (step + 1) % config.eval_every == 0) {
      model.embedder = net.embedder;
      const double acc = val_episode_accuracy(model, val, val_pool, seed, step,
                                              config.val_episodes);
      if (acc > best_val) {
        best_val = acc;
        best = model;
        evals_since_best = 0;
      } else if (++evals_since_best >= config.patience) {
        return best;
      }
    }
  }
  model.embedder = net.embedder;
  if (use_early_stop && best_val >= 0.0) {
    const double final_acc = val_episode_accuracy(model, val, val_pool, seed,
                                                  config.steps, config.val_episodes);
    if (final_acc < best_val) return best;
  }
  return model;
}

FslAllWayPredictor::FslAllWayPredictor(const MetaModel& model,
                                       const Dataset& support_all,
                                       const ClassRegistry& registry)
    : model_(model) {
  for (const auto& e : registry.classes) class_order_.push_back(e.label);
  std::unordered_map<std::string, int> class_of;
  for (std::size_t i = 0; i < class_order_.size(); ++i) {
    class_of[class_order_[i]] = static_cast<int>(i);
  }
  for (const auto& ex : support_all.examples) {
    auto it = class_of.find(ex.label);
    if (it == class_of.end()) {
      throw std::invalid_argument("FslAllWayPredictor: support label outside registry: " +
                                  ex.label);
    }
    support_pairs_.emplace_back(ex, it->second);
  }
  index_ = build_support_index(model.embedder, support_pairs_, class_order_.size());
  index_.class_labels = class_order_;
  if (model.method == FslMethod::Maml || model.method == FslMethod::ProtoMaml) {
    AdaptableNet net = model.method == FslMethod::Maml
                           ? maml_init_net(model, class_order_.size())
                           : proto_maml_init_net(model, index_);
    adapted_ = maml_adapt(net, to_batch(support_pairs_), model.config.inner_steps,
                          model.config.inner_lr);
  } else if (model.method == FslMethod::BaselinePP) {
    bpp_head_ = baselinepp_finetune(model, support_pairs_, class_order_.size());
  }
}

ModelOutput FslAllWayPredictor::predict(const Vector& x) const {
  switch (model_.method) {
    case FslMethod::Knn:
      return knn_predict(model_.embedder, index_, x);
    case FslMethod::BaselinePP:
      return ModelOutput::from_logits(cosine_head_apply(model_.embedder, *bpp_head_, x));
    case FslMethod::Matching:
      return matching_predict(model_.embedder, support_pairs_, class_order_.size(), x);
    case FslMethod::Proto:
      return proto_predict(model_.embedder, index_, x);
    case FslMethod::Relation:
      return relation_predict(model_.embedder, *model_.relation, index_, x);
    case FslMethod::Maml:
    case FslMethod::ProtoMaml:
      return ModelOutput::from_logits(adaptable_apply(*adapted_, x));
  }
  throw std::logic_error("FslAllWayPredictor: bad method");
}

ModelOutput fsl_all_way_predict(const MetaModel& model, const Dataset& support_all,
                                const ClassRegistry& registry, const Vector& x) {
  return FslAllWayPredictor(model, support_all, registry).predict(x);
}

}  // namespace longtail
