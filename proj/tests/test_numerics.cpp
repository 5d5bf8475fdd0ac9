#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "longtail/numerics.hpp"
#include "longtail/rng.hpp"

using namespace longtail;

TEST_CASE("logsumexp of a single element is the element") {
  CHECK(logsumexp({5.0}) == doctest::Approx(5.0));
}

TEST_CASE("logsumexp of [0,0] is ln 2") {
  CHECK(logsumexp({0.0, 0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("logsumexp shift invariance avoids overflow") {
  CHECK(logsumexp({1000.0, 1000.0}) ==
        doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("logsumexp rejects empty and non-finite input") {
  CHECK_THROWS_AS(logsumexp({}), std::invalid_argument);
  CHECK_THROWS_AS(logsumexp({1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("softmax symmetry") {
  const Vector p = softmax({0.0, 0.0, 0.0});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3));
}

TEST_CASE("softmax of log weights recovers normalized weights") {
  const Vector p = softmax({std::log(1.0), std::log(2.0), std::log(3.0)});
  CHECK(p[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(2.0 / 6).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance on random vectors") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    Vector v(5), shifted(5);
    const double a = rng.uniform(-50.0, 50.0);
    for (int i = 0; i < 5; ++i) {
      v[i] = rng.normal();
      shifted[i] = v[i] + a;
    }
    const Vector p = softmax(v), q = softmax(shifted);
    for (int i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
  }
}

TEST_CASE("alpha-weighted CE on uniform logits is ln 2") {
  CHECK(alpha_ce_loss({0.0, 0.0}, 0, {1.0, 1.0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("CE of a perfect prediction is 0") {
  CHECK(alpha_ce_loss({500.0, -500.0}, 0, {1.0, 1.0}) == doctest::Approx(0.0));
}

TEST_CASE("CE is linear in alpha") {
  const double base = alpha_ce_loss({0.3, -0.7}, 1, {1.0, 1.0});
  CHECK(alpha_ce_loss({0.3, -0.7}, 1, {2.0, 2.0}) ==
        doctest::Approx(2.0 * base).epsilon(1e-12));
}

TEST_CASE("focal loss at gamma 0 equals weighted CE bit-for-bit") {
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    Vector logits(4);
    for (auto& l : logits) l = rng.normal() * 3.0;
    FocalConfig cfg;
    cfg.gamma = 0.0;
    cfg.alpha = {0.25, 1.0, 0.5, 2.0};
    const int label = static_cast<int>(rng.uniform_int(4));
    CHECK(focal_loss(logits, label, cfg) == alpha_ce_loss(logits, label, cfg.alpha));
  }
}

TEST_CASE("focal loss hand-computed value at p=0.5") {
  // -0.25 * (1-0.5)^2 * ln 0.5 = 0.0433216...
  FocalConfig cfg;
  cfg.gamma = 2.0;
  cfg.alpha = {0.25, 0.25};
  const double loss = focal_loss({0.0, 0.0}, 0, cfg);
  CHECK(loss == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(loss == doctest::Approx(0.043322).epsilon(1e-4));
}

TEST_CASE("focal loss decreases monotonically as p_label approaches 1") {
  FocalConfig cfg = FocalConfig::uniform(2, 2.0);
  double prev = focal_loss({0.0, 0.0}, 0, cfg);
  for (double m = 1.0; m < 20.0; m += 1.0) {
    const double cur = focal_loss({m, 0.0}, 0, cfg);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(prev == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("focal gradient matches central finite differences") {
  Rng rng(23);
  for (double gamma : {0.0, 1.0, 2.0}) {
    FocalConfig cfg;
    cfg.gamma = gamma;
    cfg.alpha = {0.5, 1.0, 1.5};
    for (int t = 0; t < 20; ++t) {
      Vector logits(3);
      for (auto& l : logits) l = rng.normal() * 2.0;
      const int label = static_cast<int>(rng.uniform_int(3));
      const Vector grad = focal_loss_logit_grad(logits, label, cfg);
      const double eps = 1e-6;
      for (int j = 0; j < 3; ++j) {
        Vector lo = logits, hi = logits;
        lo[j] -= eps;
        hi[j] += eps;
        const double fd =
            (focal_loss(hi, label, cfg) - focal_loss(lo, label, cfg)) / (2 * eps);
        CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("cosine and squared euclidean basics") {
  CHECK(cosine_similarity({1.0, 2.0}, {1.0, 2.0}) == doctest::Approx(1.0));
  CHECK(sq_euclidean({1.0, 2.0}, {1.0, 2.0}) == doctest::Approx(0.0));
  CHECK(cosine_similarity({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
  CHECK(sq_euclidean({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(2.0));
  CHECK(cosine_similarity({3.0, -1.0}, {-3.0, 1.0}) == doctest::Approx(-1.0));
  CHECK(cosine_similarity({0.0, 0.0}, {1.0, 1.0}) == doctest::Approx(0.0));
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax_index({1.0, 3.0, 3.0}) == 1);
  CHECK(argmax_index({2.0, 2.0}) == 0);
  const ModelOutput out = ModelOutput::from_logits({0.0, 0.0, 1.0});
  CHECK(out.argmax() == 2);
  double sum = 0.0;
  for (double p : out.probs) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}
