#include "longtail/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace longtail {

namespace {

void check_finite_nonempty(const Vector& v, const char* op) {
  if (v.empty()) throw std::invalid_argument(std::string(op) + ": empty input");
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument(std::string(op) + ": non-finite input");
    }
  }
}

void check_label(const Vector& logits, int label, const Vector& alpha,
                 const char* op) {
  check_finite_nonempty(logits, op);
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::invalid_argument(std::string(op) + ": label out of range");
  }
  if (alpha.size() != logits.size()) {
    throw std::invalid_argument(std::string(op) + ": alpha length mismatch");
  }
}

}  // namespace

ModelOutput ModelOutput::from_logits(Vector logits) {
  ModelOutput out;
  out.probs = softmax(logits);
  out.logits = std::move(logits);
  return out;
}

int ModelOutput::argmax() const { return argmax_index(logits); }

int argmax_index(const Vector& v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<int>(best);
}

double logsumexp(const Vector& v) {
  check_finite_nonempty(v, "logsumexp");
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

Vector softmax(const Vector& v) {
  check_finite_nonempty(v, "softmax");
  const double lse = logsumexp(v);
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i] - lse);
  return out;
}

void FocalConfig::validate(std::size_t class_count) const {
  if (gamma < 0.0 || !std::isfinite(gamma)) {
    throw std::invalid_argument("FocalConfig: gamma must be >= 0");
  }
  if (alpha.size() != class_count) {
    throw std::invalid_argument("FocalConfig: alpha length must equal class count");
  }
  for (double a : alpha) {
    if (a < 0.0 || !std::isfinite(a)) {
      throw std::invalid_argument("FocalConfig: alpha entries must be >= 0");
    }
  }
}

FocalConfig FocalConfig::uniform(std::size_t class_count, double gamma) {
  return FocalConfig{gamma, Vector(class_count, 1.0)};
}

double alpha_ce_loss(const Vector& logits, int label, const Vector& alpha) {
  check_label(logits, label, alpha, "alpha_ce_loss");
  const double log_p = logits[static_cast<std::size_t>(label)] - logsumexp(logits);
  return -alpha[static_cast<std::size_t>(label)] * log_p;
}

double focal_loss(const Vector& logits, int label, const FocalConfig& cfg) {
  cfg.validate(logits.size());
  if (cfg.gamma == 0.0) return alpha_ce_loss(logits, label, cfg.alpha);
  check_label(logits, label, cfg.alpha, "focal_loss");
  const double log_p = logits[static_cast<std::size_t>(label)] - logsumexp(logits);
  const double p = std::exp(log_p);
  return -cfg.alpha[static_cast<std::size_t>(label)] *
         std::pow(1.0 - p, cfg.gamma) * log_p;
}

Vector focal_loss_logit_grad(const Vector& logits, int label,
                             const FocalConfig& cfg) {
  cfg.validate(logits.size());
  check_label(logits, label, cfg.alpha, "focal_loss_logit_grad");
  const Vector p = softmax(logits);
  const std::size_t t = static_cast<std::size_t>(label);
  const double a = cfg.alpha[t];
  const double pt = p[t];
  // dL/dz_j = coeff * (delta_jt - p_j), where coeff = p_t * dL/dp_t.
  double coeff;
  if (cfg.gamma == 0.0) {
    coeff = -a;
  } else {
    const double one_minus = 1.0 - pt;
    if (one_minus <= 0.0) {
      coeff = 0.0;  // limit p_t -> 1
    } else {
      const double log_p = logits[t] - logsumexp(logits);
      coeff = a * (cfg.gamma * std::pow(one_minus, cfg.gamma - 1.0) * pt * log_p -
                   std::pow(one_minus, cfg.gamma));
    }
  }
  Vector grad(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double delta = (j == t) ? 1.0 : 0.0;
    grad[j] = coeff * (delta - p[j]);
  }
  return grad;
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

double sq_euclidean(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("sq_euclidean: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace longtail
