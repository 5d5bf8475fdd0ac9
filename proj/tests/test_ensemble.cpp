#include <doctest.h>

#include <cmath>

#include "longtail/ensemble.hpp"

using namespace longtail;

namespace {

ClassRegistry mixed_registry() {
  Dataset devset, testset;
  devset.dim = testset.dim = 1;
  std::int64_t id = 0;
  auto add = [&](Dataset& ds, const std::string& label, int n) {
    for (int i = 0; i < n; ++i) ds.examples.push_back({id++, label, 0, {0.0}});
  };
  add(devset, "common_a", 150);
  add(devset, "common_b", 120);
  add(devset, "rare_a", 40);
  add(devset, "rare_b", 30);
  for (const auto& l : {"common_a", "common_b", "rare_a", "rare_b"}) {
    add(testset, l, 10);
  }
  return build_class_registry(devset, testset, GroupThresholds{});
}

}  // namespace

TEST_CASE("logit normalization closed forms") {
  const Vector z = normalize_logits({0.0, 0.0});
  CHECK(z[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(z[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(logsumexp(z) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("logit normalization is idempotent and softmax-invariant") {
  const Vector f = {3.0, -1.0, 0.5, 700.0};
  const Vector once = normalize_logits(f);
  const Vector twice = normalize_logits(once);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-12));
  }
  const Vector p1 = softmax(f);
  const Vector p2 = softmax(once);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(p2[i] == doctest::Approx(p1[i]).epsilon(1e-12));
  }
}

TEST_CASE("single-member ensembles pass logits through normalized") {
  const Vector f = {1.0, 2.0, -3.0};
  const Vector out = ensemble_logits({f});
  const Vector want = normalize_logits(f);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(out[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("identical members reproduce the member distribution") {
  const Vector f = {0.2, -1.5, 4.0};
  const Vector out = ensemble_logits({f, f, f});
  const Vector ps = softmax(out);
  const Vector want = softmax(f);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(ps[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("opposing members average to a uniform distribution") {
  // softmax probabilities [0.8, 0.2] and [0.2, 0.8] as logits.
  const Vector a = {std::log(0.8), std::log(0.2)};
  const Vector b = {std::log(0.2), std::log(0.8)};
  const Vector probs = softmax(ensemble_logits({a, b}));
  CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("geometric mean closed forms") {
  const Vector same = ensemble_probs_geomean({{0.3, 0.7}, {0.3, 0.7}});
  CHECK(same[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(same[1] == doctest::Approx(0.7).epsilon(1e-12));

  // geomean of [0.8, 0.2] and [0.2, 0.8] is [0.4, 0.4] before renormalizing.
  const Vector even = ensemble_probs_geomean({{0.8, 0.2}, {0.2, 0.8}});
  CHECK(even[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(even[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("geometric mean equals the log-domain ensemble") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + int(rng.uniform_int(4));
    const int c = 2 + int(rng.uniform_int(6));
    std::vector<Vector> logits(m);
    std::vector<Vector> probs(m);
    for (int i = 0; i < m; ++i) {
      Vector f(c);
      for (double& v : f) v = 4.0 * rng.normal();
      logits[i] = f;
      probs[i] = softmax(f);
      Vector lp(c);
      for (int j = 0; j < c; ++j) lp[j] = std::log(probs[i][j]);
      logits[i] = lp;
    }
    const Vector via_logits = softmax(ensemble_logits(logits));
    const Vector via_probs = ensemble_probs_geomean(probs);
    for (int j = 0; j < c; ++j) {
      CHECK(via_probs[j] == doctest::Approx(via_logits[j]).epsilon(1e-9));
    }
  }
}

TEST_CASE("ensemble input validation") {
  CHECK_THROWS_AS(ensemble_logits({}), std::invalid_argument);
  CHECK_THROWS_AS(ensemble_logits({{1.0, 2.0}, {1.0}}), std::invalid_argument);
}

TEST_CASE("routing sends common predictions to the CSL family") {
  const ClassRegistry reg = mixed_registry();
  const int common = reg.index("common_a");
  const int common_b = reg.index("common_b");
  const int rare = reg.index("rare_a");

  Vector ens_logits(reg.size(), 0.0);
  ens_logits[static_cast<std::size_t>(common)] = 5.0;
  Vector csl_logits(reg.size(), 0.0);
  csl_logits[static_cast<std::size_t>(common_b)] = 5.0;
  Vector fsl_logits(reg.size(), 0.0);
  fsl_logits[static_cast<std::size_t>(rare)] = 5.0;

  const RoutedPrediction p = route_prediction(
      ModelOutput::from_logits(ens_logits), ModelOutput::from_logits(csl_logits),
      ModelOutput::from_logits(fsl_logits), reg);
  CHECK(p.route == Route::CommonToCsl);
  CHECK(p.final_label == common_b);
  CHECK(p.csl_label == common_b);
  CHECK(p.fsl_label == rare);
}

TEST_CASE("routing sends rare predictions to the FSL family") {
  const ClassRegistry reg = mixed_registry();
  const int rare = reg.index("rare_a");
  const int rare_b = reg.index("rare_b");
  const int common = reg.index("common_a");

  Vector ens_logits(reg.size(), 0.0);
  ens_logits[static_cast<std::size_t>(rare)] = 5.0;
  Vector csl_logits(reg.size(), 0.0);
  csl_logits[static_cast<std::size_t>(common)] = 5.0;
  Vector fsl_logits(reg.size(), 0.0);
  fsl_logits[static_cast<std::size_t>(rare_b)] = 5.0;

  const RoutedPrediction p = route_prediction(
      ModelOutput::from_logits(ens_logits), ModelOutput::from_logits(csl_logits),
      ModelOutput::from_logits(fsl_logits), reg);
  CHECK(p.route == Route::RareToFsl);
  CHECK(p.final_label == rare_b);
}

TEST_CASE("disabled routing takes the ensemble argmax") {
  const ClassRegistry reg = mixed_registry();
  Vector ens_logits(reg.size(), 0.0);
  ens_logits[2] = 3.0;
  const RoutedPrediction p =
      unrouted_prediction(ModelOutput::from_logits(ens_logits));
  CHECK(p.route == Route::NoRouting);
  CHECK(p.final_label == 2);
  CHECK(p.csl_label == -1);
  CHECK(p.fsl_label == -1);
}
