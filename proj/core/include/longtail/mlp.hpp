#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "longtail/numerics.hpp"
#include "longtail/rng.hpp"

namespace longtail {

// Fully connected net: ReLU on hidden layers, identity on the output layer.
struct MlpParams {
  std::vector<Matrix> weights;  // weights[l] is (out x in)
  std::vector<Vector> biases;

  std::size_t layer_count() const { return weights.size(); }
  std::size_t input_dim() const { return weights.front().cols; }
  std::size_t output_dim() const { return weights.back().rows; }

  // Glorot-uniform weights, zero biases, drawn from the given stream.
  static MlpParams init(const std::vector<std::size_t>& layer_sizes, Rng& rng);
  static MlpParams zeros(const std::vector<std::size_t>& layer_sizes);

  std::vector<std::size_t> layer_sizes() const;
  void check_same_shape(const MlpParams& other, const char* op) const;
};

// Same storage as MlpParams; separate name to keep parameter vs gradient
// call sites readable.
using MlpGrads = MlpParams;

MlpGrads zeros_like(const MlpParams& params);
void axpy(MlpGrads& acc, const MlpGrads& g, double scale);  // acc += scale * g
void scale_params(MlpParams& p, double s);

struct MlpCache {
  Vector input;
  std::vector<Vector> pre;   // pre-activation per layer
  std::vector<Vector> post;  // post-activation per layer
};

Vector mlp_apply(const MlpParams& params, const Vector& x);
Vector mlp_forward(const MlpParams& params, const Vector& x, MlpCache* cache);

// Backpropagates d_out (dL/d output) through the cached forward pass,
// accumulating into acc; returns dL/d input. ReLU subgradient at 0 is 0.
Vector mlp_backward(const MlpParams& params, const MlpCache& cache,
                    const Vector& d_out, MlpGrads& acc);

struct LabeledExample {
  Vector features;
  int label = 0;
};

// Mean focal/CE loss over a batch (CE == gamma 0, alpha 1).
double batch_loss(const MlpParams& params, const std::vector<LabeledExample>& batch,
                  const FocalConfig& cfg);

// Analytic mean gradient of batch_loss. Throws on non-finite loss.
MlpGrads gradients(const MlpParams& params, const std::vector<LabeledExample>& batch,
                   const FocalConfig& cfg);

// Central-difference gradient of an arbitrary scalar loss of the
// parameters. Test oracle; independent of the backprop path.
MlpGrads finite_diff_gradients(const std::function<double(const MlpParams&)>& loss,
                               const MlpParams& params, double epsilon);

enum class OptKind { Sgd, Adam };

struct OptimizerState {
  OptKind kind = OptKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // lr is multiplied by decay_factor every decay_interval steps
  // (decay_interval 0 disables decay).
  double decay_factor = 1.0;
  std::int64_t decay_interval = 0;
  std::int64_t step = 0;
  MlpGrads m;  // first moment (Adam)
  MlpGrads v;  // second moment (Adam)

  static OptimizerState sgd(double lr);
  static OptimizerState adam(double lr, double decay_factor = 1.0,
                             std::int64_t decay_interval = 0);
  void validate() const;
};

void optimizer_step(OptimizerState& state, MlpParams& params, const MlpGrads& grads);

}  // namespace longtail
