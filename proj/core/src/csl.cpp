#include "longtail/csl.hpp"

#include <cmath>
#include <stdexcept>

namespace longtail {

namespace {

// Mean per-class recall over the classes present in `val`.
double val_balanced_accuracy(const MlpParams& net, const Dataset& val,
                             const ClassRegistry& registry) {
  std::map<int, std::pair<long, long>> per_class;  // class -> (correct, total)
  for (const auto& ex : val.examples) {
    const int label = registry.index(ex.label);
    const Vector logits = mlp_apply(net, ex.features);
    auto& [correct, total] = per_class[label];
    if (argmax_index(logits) == label) ++correct;
    ++total;
  }
  double sum = 0.0;
  for (const auto& [_, ct] : per_class) {
    sum += static_cast<double>(ct.first) / static_cast<double>(ct.second);
  }
  return per_class.empty() ? 0.0 : sum / static_cast<double>(per_class.size());
}

}  // namespace

Technique technique_from_string(const std::string& name) {
  if (name == "upsampling") return Technique::Upsampling;
  if (name == "bias_init") return Technique::BiasInit;
  if (name == "ifw") return Technique::Ifw;
  if (name == "focal") return Technique::FocalLoss;
  if (name == "prior_correction") return Technique::PriorCorrection;
  throw std::invalid_argument("unknown technique: " + name);
}

std::string technique_to_string(Technique t) {
  switch (t) {
    case Technique::Upsampling: return "upsampling";
    case Technique::BiasInit: return "bias_init";
    case Technique::Ifw: return "ifw";
    case Technique::FocalLoss: return "focal";
    case Technique::PriorCorrection: return "prior_correction";
  }
  throw std::invalid_argument("bad technique enum");
}

void CslConfig::validate() const {
  if (gamma < 0.0) throw std::invalid_argument("CslConfig: gamma must be >= 0");
  if (steps < 0) throw std::invalid_argument("CslConfig: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("CslConfig: batch size must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("CslConfig: lr must be > 0");
  if (eval_every < 1) throw std::invalid_argument("CslConfig: eval_every must be >= 1");
  if (patience < 1) throw std::invalid_argument("CslConfig: patience must be >= 1");
}

Vector class_priors(const Dataset& train, const ClassRegistry& registry) {
  if (train.empty()) throw std::invalid_argument("class_priors: empty train set");
  Vector priors(registry.size(), 0.0);
  for (const auto& ex : train.examples) {
    priors[static_cast<std::size_t>(registry.index(ex.label))] += 1.0;
  }
  for (double& p : priors) p /= static_cast<double>(train.size());
  return priors;
}

Vector ifw_weights(const Dataset& train, const ClassRegistry& registry) {
  auto counts = train.class_counts();
  Vector w(registry.size(), 0.0);
  double sum = 0.0;
  for (std::size_t c = 0; c < registry.size(); ++c) {
    const auto& label = registry.classes[c].label;
    auto it = counts.find(label);
    if (it == counts.end() || it->second < 1) {
      throw std::invalid_argument("ifw_weights: class with zero train count: " + label);
    }
    w[c] = 1.0 / static_cast<double>(it->second);
    sum += w[c];
  }
  const double scale = static_cast<double>(registry.size()) / sum;
  for (double& x : w) x *= scale;
  return w;
}

void bias_init(MlpParams& net, const Dataset& train, const ClassRegistry& registry) {
  if (net.output_dim() != registry.size()) {
    throw std::invalid_argument("bias_init: head output dim != class count");
  }
  auto counts = train.class_counts();
  Vector& bias = net.biases.back();
  for (std::size_t c = 0; c < registry.size(); ++c) {
    const auto& label = registry.classes[c].label;
    auto it = counts.find(label);
    if (it == counts.end() || it->second < 1) {
      throw std::invalid_argument("bias_init: class with zero train count: " + label);
    }
    bias[c] = std::log(static_cast<double>(it->second));
  }
}

BatchSampler::BatchSampler(const Dataset& train, bool upsampling, int batch_size)
    : train_(train), upsampling_(upsampling), batch_size_(batch_size) {
  if (batch_size < 1) throw std::invalid_argument("BatchSampler: batch size must be >= 1");
  if (train.empty()) throw std::invalid_argument("BatchSampler: empty train set");
  if (upsampling_) {
    for (auto& [_, indices] : train.class_index()) by_class_.push_back(indices);
  }
}

std::vector<std::size_t> BatchSampler::draw(Rng& rng) const {
  std::vector<std::size_t> batch(static_cast<std::size_t>(batch_size_));
  for (auto& slot : batch) {
    if (upsampling_) {
      const auto& pool = by_class_[static_cast<std::size_t>(rng.uniform_int(by_class_.size()))];
      slot = pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))];
    } else {
      slot = static_cast<std::size_t>(rng.uniform_int(train_.size()));
    }
  }
  return batch;
}

CslModel train_csl(const Dataset& train, const Dataset& val,
                   const ClassRegistry& registry, const CslConfig& config,
                   std::uint64_t seed) {
  config.validate();
  if (train.class_counts().size() < 2) {
    throw std::invalid_argument("train_csl: train must cover at least 2 classes");
  }
  const std::size_t C = registry.size();

  std::vector<std::size_t> sizes;
  sizes.push_back(train.dim);
  for (std::size_t h : config.hidden) sizes.push_back(h);
  sizes.push_back(C);

  Rng init_rng = Rng::stream(seed, "csl-init", 0);
  MlpParams net = MlpParams::init(sizes, init_rng);
  if (config.has(Technique::BiasInit)) bias_init(net, train, registry);

  FocalConfig loss_cfg;
  loss_cfg.gamma = config.has(Technique::FocalLoss) ? config.gamma : 0.0;
  loss_cfg.alpha = config.has(Technique::Ifw) ? ifw_weights(train, registry)
                                              : Vector(C, 1.0);

  BatchSampler sampler(train, config.has(Technique::Upsampling), config.batch_size);
  OptimizerState opt =
      config.optimizer == OptKind::Adam
          ? OptimizerState::adam(config.lr, config.decay_factor, config.decay_interval)
          : OptimizerState::sgd(config.lr);
  opt.decay_factor = config.decay_factor;
  opt.decay_interval = config.decay_interval;

  Rng batch_rng = Rng::stream(seed, "csl-batches", 0);
  MlpParams best = net;
  double best_val = -1.0;
  int evals_since_best = 0;
  const bool use_early_stop = !val.empty();

  for (std::int64_t step = 0; step < config.steps; ++step) {
    std::vector<LabeledExample> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));
    for (std::size_t idx : sampler.draw(batch_rng)) {
      batch.push_back(
          {train.examples[idx].features, registry.index(train.examples[idx].label)});
    }
    const double loss = batch_loss(net, batch, loss_cfg);
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("train_csl: non-finite loss at step " + std::to_string(step));
    }
    MlpGrads grads = gradients(net, batch, loss_cfg);
    optimizer_step(opt, net, grads);

    if (use_early_stop && (step + 1) % config.eval_every == 0) {
      const double acc = val_balanced_accuracy(net, val, registry);
      if (acc > best_val) {
        best_val = acc;
        best = net;
        evals_since_best = 0;
      } else if (++evals_since_best >= config.patience) {
        net = best;
        break;
      }
    }
  }
  if (use_early_stop && best_val >= 0.0 &&
      val_balanced_accuracy(net, val, registry) < best_val) {
    net = best;
  }

  CslModel model;
  model.net = std::move(net);
  model.registry = registry;
  model.priors = class_priors(train, registry);
  model.prior_correction = config.has(Technique::PriorCorrection);
  return model;
}

ModelOutput predict_csl(const CslModel& model, const Vector& x) {
  Vector logits = mlp_apply(model.net, x);
  if (!model.prior_correction) return ModelOutput::from_logits(std::move(logits));
  const Vector probs = softmax(logits);
  Vector corrected = prior_correct(probs, model.priors);
  ModelOutput out;
  out.logits.resize(corrected.size());
  for (std::size_t i = 0; i < corrected.size(); ++i) {
    out.logits[i] = std::log(std::max(corrected[i], 1e-300));
  }
  out.probs = std::move(corrected);
  return out;
}

Vector prior_correct(const Vector& probs, const Vector& priors) {
  if (probs.size() != priors.size()) {
    throw std::invalid_argument("prior_correct: length mismatch");
  }
  Vector out(probs.size(), 0.0);
  double sum = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (probs[c] > 0.0 && priors[c] <= 0.0) {
      throw std::invalid_argument("prior_correct: zero prior for class with mass");
    }
    out[c] = priors[c] > 0.0 ? probs[c] / priors[c] : 0.0;
    sum += out[c];
  }
  if (sum <= 0.0) throw std::invalid_argument("prior_correct: no probability mass");
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace longtail
