#include <doctest.h>

#include <cmath>

#include "longtail/mlp.hpp"

using namespace longtail;

namespace {

MlpParams random_net(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  Rng rng(seed);
  return MlpParams::init(sizes, rng);
}

// Independent re-implementation of the affine+ReLU chain used as an oracle.
Vector reference_forward(const MlpParams& p, Vector x) {
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    Vector out(p.weights[l].rows, 0.0);
    for (std::size_t r = 0; r < p.weights[l].rows; ++r) {
      double acc = p.biases[l][r];
      for (std::size_t c = 0; c < p.weights[l].cols; ++c) {
        acc += p.weights[l](r, c) * x[c];
      }
      out[r] = acc;
    }
    if (l + 1 < p.layer_count()) {
      for (auto& v : out) v = v > 0.0 ? v : 0.0;
    }
    x = std::move(out);
  }
  return x;
}

}  // namespace

TEST_CASE("all-zero weights output the bias") {
  MlpParams p = MlpParams::zeros({3, 2});
  p.biases[0] = {0.5, -1.5};
  const Vector out = mlp_apply(p, {9.0, 9.0, 9.0});
  CHECK(out[0] == doctest::Approx(0.5));
  CHECK(out[1] == doctest::Approx(-1.5));
}

TEST_CASE("single identity layer passes input through") {
  MlpParams p = MlpParams::zeros({2, 2});
  p.weights[0](0, 0) = 1.0;
  p.weights[0](1, 1) = 1.0;
  const Vector out = mlp_apply(p, {-3.0, 4.0});
  CHECK(out[0] == doctest::Approx(-3.0));
  CHECK(out[1] == doctest::Approx(4.0));
}

TEST_CASE("forward pass matches an independent re-implementation") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MlpParams p = random_net({4, 8, 5, 3}, seed);
    Rng rng(seed + 100);
    Vector x(4);
    for (auto& v : x) v = rng.normal();
    const Vector got = mlp_apply(p, x);
    const Vector want = reference_forward(p, x);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("finite differences recover hand-computed derivatives") {
  // Single parameter theta (1x1 weight), loss (theta-1)^2 at theta 0.
  MlpParams p = MlpParams::zeros({1, 1});
  auto loss = [](const MlpParams& q) {
    const double theta = q.weights[0](0, 0);
    return (theta - 1.0) * (theta - 1.0);
  };
  const MlpGrads g = finite_diff_gradients(loss, p, 1e-5);
  CHECK(g.weights[0](0, 0) == doctest::Approx(-2.0).epsilon(1e-8));

  // Linear loss c * theta has exact gradient c.
  auto linear = [](const MlpParams& q) { return 3.5 * q.weights[0](0, 0); };
  CHECK(finite_diff_gradients(linear, p, 1e-5).weights[0](0, 0) ==
        doctest::Approx(3.5).epsilon(1e-9));
}

TEST_CASE("gradient at the minimum of a convex quadratic is zero") {
  MlpParams p = MlpParams::zeros({1, 1});
  p.weights[0](0, 0) = 1.0;
  auto loss = [](const MlpParams& q) {
    const double theta = q.weights[0](0, 0);
    return (theta - 1.0) * (theta - 1.0);
  };
  CHECK(finite_diff_gradients(loss, p, 1e-5).weights[0](0, 0) ==
        doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("analytic batch gradients match the finite-difference oracle") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const MlpParams p = random_net({3, 6, 4}, seed);
    Rng rng(seed + 50);
    std::vector<LabeledExample> batch;
    for (int i = 0; i < 8; ++i) {
      Vector x(3);
      for (auto& v : x) v = rng.normal();
      batch.push_back({x, static_cast<int>(rng.uniform_int(4))});
    }
    const FocalConfig cfg = FocalConfig::uniform(4, 0.0);
    const MlpGrads analytic = gradients(p, batch, cfg);
    const MlpGrads fd = finite_diff_gradients(
        [&](const MlpParams& q) { return batch_loss(q, batch, cfg); }, p, 1e-5);
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      for (std::size_t i = 0; i < p.weights[l].data.size(); ++i) {
        const double a = analytic.weights[l].data[i], b = fd.weights[l].data[i];
        CHECK(a == doctest::Approx(b).epsilon(1e-4));
      }
      for (std::size_t i = 0; i < p.biases[l].size(); ++i) {
        CHECK(analytic.biases[l][i] == doctest::Approx(fd.biases[l][i]).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("sgd step moves against the gradient") {
  MlpParams p = MlpParams::zeros({1, 1});
  p.weights[0](0, 0) = 1.0;
  MlpGrads g = zeros_like(p);
  g.weights[0](0, 0) = 0.5;
  OptimizerState opt = OptimizerState::sgd(0.1);
  optimizer_step(opt, p, g);
  CHECK(p.weights[0](0, 0) == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("zero gradient leaves parameters unchanged for both optimizers") {
  for (OptKind kind : {OptKind::Sgd, OptKind::Adam}) {
    MlpParams p = MlpParams::zeros({2, 2});
    p.weights[0](0, 1) = 3.0;
    const MlpGrads g = zeros_like(p);
    OptimizerState opt = kind == OptKind::Sgd ? OptimizerState::sgd(0.1)
                                              : OptimizerState::adam(0.1);
    optimizer_step(opt, p, g);
    CHECK(p.weights[0](0, 1) == doctest::Approx(3.0));
    CHECK(p.weights[0](0, 0) == doctest::Approx(0.0));
  }
}

TEST_CASE("adam first step approximates a signed step") {
  MlpParams p = MlpParams::zeros({1, 1});
  MlpGrads g = zeros_like(p);
  g.weights[0](0, 0) = 0.37;
  OptimizerState opt = OptimizerState::adam(0.01);
  opt.eps = 1e-12;
  optimizer_step(opt, p, g);
  CHECK(p.weights[0](0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("lr decay multiplies the rate on the configured interval") {
  OptimizerState opt = OptimizerState::adam(1.0, 0.5, 2);
  MlpParams p = MlpParams::zeros({1, 1});
  MlpGrads g = zeros_like(p);
  g.weights[0](0, 0) = 1.0;
  optimizer_step(opt, p, g);
  CHECK(opt.lr == doctest::Approx(1.0));
  optimizer_step(opt, p, g);
  CHECK(opt.lr == doctest::Approx(0.5));
  optimizer_step(opt, p, g);
  CHECK(opt.lr == doctest::Approx(0.5));
  optimizer_step(opt, p, g);
  CHECK(opt.lr == doctest::Approx(0.25));
}

TEST_CASE("glorot init is deterministic in the stream") {
  Rng a(5), b(5);
  const MlpParams p = MlpParams::init({4, 8, 2}, a);
  const MlpParams q = MlpParams::init({4, 8, 2}, b);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    CHECK(p.weights[l].data == q.weights[l].data);
    for (double bias : p.biases[l]) CHECK(bias == 0.0);
  }
}
