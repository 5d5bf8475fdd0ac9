#pragma once

#include <cstddef>
#include <vector>

namespace longtail {

using Vector = std::vector<double>;

// Dense row-major matrix with explicit dimensions.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Per-query model output: raw logits and the softmax-derived probabilities.
struct ModelOutput {
  Vector logits;
  Vector probs;

  static ModelOutput from_logits(Vector logits);
  // Argmax with ties broken toward the lowest class index.
  int argmax() const;
};

int argmax_index(const Vector& v);

// log(sum(exp(v))) with max-shift; rejects empty or non-finite input.
double logsumexp(const Vector& v);

Vector softmax(const Vector& v);

// Per-class focal-loss configuration: focusing parameter gamma >= 0 and a
// per-class weight vector alpha (alpha[c] >= 0, length = class count).
struct FocalConfig {
  double gamma = 0.0;
  Vector alpha;

  void validate(std::size_t class_count) const;
  static FocalConfig uniform(std::size_t class_count, double gamma);
};

// -alpha[label] * log p_label with p = softmax(logits).
double alpha_ce_loss(const Vector& logits, int label, const Vector& alpha);

// -alpha[label] * (1 - p_label)^gamma * log p_label. Reduces exactly to
// alpha_ce_loss at gamma = 0.
double focal_loss(const Vector& logits, int label, const FocalConfig& cfg);

// d focal_loss / d logits (analytic).
Vector focal_loss_logit_grad(const Vector& logits, int label, const FocalConfig& cfg);

// Zero-norm inputs are defined to have similarity 0.
double cosine_similarity(const Vector& a, const Vector& b);
double sq_euclidean(const Vector& a, const Vector& b);

double dot(const Vector& a, const Vector& b);
double norm(const Vector& a);

}  // namespace longtail
