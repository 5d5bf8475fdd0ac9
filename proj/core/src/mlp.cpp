#include "longtail/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace longtail {

MlpParams MlpParams::init(const std::vector<std::size_t>& layer_sizes, Rng& rng) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("MlpParams: need at least input and output sizes");
  }
  MlpParams p;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l];
    const std::size_t fan_out = layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& x : w.data) x = rng.uniform(-limit, limit);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

MlpParams MlpParams::zeros(const std::vector<std::size_t>& layer_sizes) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("MlpParams: need at least input and output sizes");
  }
  MlpParams p;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    p.weights.emplace_back(layer_sizes[l + 1], layer_sizes[l]);
    p.biases.emplace_back(layer_sizes[l + 1], 0.0);
  }
  return p;
}

std::vector<std::size_t> MlpParams::layer_sizes() const {
  std::vector<std::size_t> sizes;
  sizes.push_back(input_dim());
  for (const auto& w : weights) sizes.push_back(w.rows);
  return sizes;
}

void MlpParams::check_same_shape(const MlpParams& other, const char* op) const {
  if (weights.size() != other.weights.size()) {
    throw std::invalid_argument(std::string(op) + ": layer count mismatch");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows != other.weights[l].rows ||
        weights[l].cols != other.weights[l].cols ||
        biases[l].size() != other.biases[l].size()) {
      throw std::invalid_argument(std::string(op) + ": layer shape mismatch");
    }
  }
}

MlpGrads zeros_like(const MlpParams& params) {
  return MlpParams::zeros(params.layer_sizes());
}

void axpy(MlpGrads& acc, const MlpGrads& g, double scale) {
  acc.check_same_shape(g, "axpy");
  for (std::size_t l = 0; l < acc.weights.size(); ++l) {
    for (std::size_t i = 0; i < acc.weights[l].data.size(); ++i) {
      acc.weights[l].data[i] += scale * g.weights[l].data[i];
    }
    for (std::size_t i = 0; i < acc.biases[l].size(); ++i) {
      acc.biases[l][i] += scale * g.biases[l][i];
    }
  }
}

void scale_params(MlpParams& p, double s) {
  for (auto& w : p.weights) {
    for (double& x : w.data) x *= s;
  }
  for (auto& b : p.biases) {
    for (double& x : b) x *= s;
  }
}

Vector mlp_forward(const MlpParams& params, const Vector& x, MlpCache* cache) {
  if (x.size() != params.input_dim()) {
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  }
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Vector cur = x;
  const std::size_t L = params.layer_count();
  for (std::size_t l = 0; l < L; ++l) {
    const Matrix& w = params.weights[l];
    Vector next(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
      double s = params.biases[l][r];
      for (std::size_t c = 0; c < w.cols; ++c) s += w(r, c) * cur[c];
      next[r] = s;
    }
    if (cache) cache->pre.push_back(next);
    if (l + 1 < L) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;  // ReLU
    }
    if (cache) cache->post.push_back(next);
    cur = std::move(next);
  }
  return cur;
}

Vector mlp_apply(const MlpParams& params, const Vector& x) {
  return mlp_forward(params, x, nullptr);
}

Vector mlp_backward(const MlpParams& params, const MlpCache& cache,
                    const Vector& d_out, MlpGrads& acc) {
  const std::size_t L = params.layer_count();
  if (d_out.size() != params.output_dim()) {
    throw std::invalid_argument("mlp_backward: output gradient dimension mismatch");
  }
  Vector delta = d_out;
  for (std::size_t li = L; li-- > 0;) {
    if (li + 1 < L) {
      // ReLU: subgradient 0 at 0.
      for (std::size_t r = 0; r < delta.size(); ++r) {
        if (cache.pre[li][r] <= 0.0) delta[r] = 0.0;
      }
    }
    const Vector& in = (li == 0) ? cache.input : cache.post[li - 1];
    Matrix& gw = acc.weights[li];
    for (std::size_t r = 0; r < gw.rows; ++r) {
      const double d = delta[r];
      for (std::size_t c = 0; c < gw.cols; ++c) gw(r, c) += d * in[c];
      acc.biases[li][r] += d;
    }
    if (li == 0) break;
    const Matrix& w = params.weights[li];
    Vector prev(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double d = delta[r];
      for (std::size_t c = 0; c < w.cols; ++c) prev[c] += w(r, c) * d;
    }
    delta = std::move(prev);
  }
  // dL/d input
  {
    const Matrix& w = params.weights[0];
    Vector din(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double d = delta[r];
      for (std::size_t c = 0; c < w.cols; ++c) din[c] += w(r, c) * d;
    }
    return din;
  }
}

double batch_loss(const MlpParams& params, const std::vector<LabeledExample>& batch,
                  const FocalConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    const Vector logits = mlp_apply(params, ex.features);
    total += focal_loss(logits, ex.label, cfg);
  }
  return total / static_cast<double>(batch.size());
}

MlpGrads gradients(const MlpParams& params, const std::vector<LabeledExample>& batch,
                   const FocalConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
  MlpGrads acc = zeros_like(params);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    MlpCache cache;
    const Vector logits = mlp_forward(params, ex.features, &cache);
    const double loss = focal_loss(logits, ex.label, cfg);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("gradients: non-finite loss");
    }
    Vector dlogits = focal_loss_logit_grad(logits, ex.label, cfg);
    for (double& g : dlogits) g *= inv_n;
    mlp_backward(params, cache, dlogits, acc);
  }
  return acc;
}

MlpGrads finite_diff_gradients(const std::function<double(const MlpParams&)>& loss,
                               const MlpParams& params, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("finite_diff_gradients: epsilon <= 0");
  MlpGrads g = zeros_like(params);
  MlpParams probe = params;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    for (std::size_t i = 0; i < params.weights[l].data.size(); ++i) {
      const double orig = probe.weights[l].data[i];
      probe.weights[l].data[i] = orig + epsilon;
      const double up = loss(probe);
      probe.weights[l].data[i] = orig - epsilon;
      const double down = loss(probe);
      probe.weights[l].data[i] = orig;
      g.weights[l].data[i] = (up - down) / (2.0 * epsilon);
    }
    for (std::size_t i = 0; i < params.biases[l].size(); ++i) {
      const double orig = probe.biases[l][i];
      probe.biases[l][i] = orig + epsilon;
      const double up = loss(probe);
      probe.biases[l][i] = orig - epsilon;
      const double down = loss(probe);
      probe.biases[l][i] = orig;
      g.biases[l][i] = (up - down) / (2.0 * epsilon);
    }
  }
  return g;
}

OptimizerState OptimizerState::sgd(double lr) {
  OptimizerState s;
  s.kind = OptKind::Sgd;
  s.lr = lr;
  s.validate();
  return s;
}

OptimizerState OptimizerState::adam(double lr, double decay_factor,
                                    std::int64_t decay_interval) {
  OptimizerState s;
  s.kind = OptKind::Adam;
  s.lr = lr;
  s.decay_factor = decay_factor;
  s.decay_interval = decay_interval;
  s.validate();
  return s;
}

void OptimizerState::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("OptimizerState: lr must be > 0");
  if (decay_factor <= 0.0 || decay_factor > 1.0) {
    throw std::invalid_argument("OptimizerState: decay factor must be in (0, 1]");
  }
}

void optimizer_step(OptimizerState& state, MlpParams& params, const MlpGrads& grads) {
  params.check_same_shape(grads, "optimizer_step");
  state.step += 1;
  if (state.kind == OptKind::Sgd) {
    axpy(params, grads, -state.lr);
  } else {
    if (state.m.weights.empty()) {
      state.m = zeros_like(params);
      state.v = zeros_like(params);
    }
    params.check_same_shape(state.m, "optimizer_step");
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      auto update = [&](double& theta, double& m, double& v, double g) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        theta -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
      };
      for (std::size_t i = 0; i < params.weights[l].data.size(); ++i) {
        update(params.weights[l].data[i], state.m.weights[l].data[i],
               state.v.weights[l].data[i], grads.weights[l].data[i]);
      }
      for (std::size_t i = 0; i < params.biases[l].size(); ++i) {
        update(params.biases[l][i], state.m.biases[l][i], state.v.biases[l][i],
               grads.biases[l][i]);
      }
    }
  }
  if (state.decay_interval > 0 && state.step % state.decay_interval == 0) {
    state.lr *= state.decay_factor;
  }
}

}  // namespace longtail
