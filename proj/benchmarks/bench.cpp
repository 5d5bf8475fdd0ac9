#include <benchmark/benchmark.h>

#include <vector>

#include "longtail/csl.hpp"
#include "longtail/data_model.hpp"
#include "longtail/ensemble.hpp"
#include "longtail/fsl.hpp"
#include "longtail/mlp.hpp"
#include "longtail/numerics.hpp"

using namespace longtail;

namespace {

Vector random_vector(std::size_t n, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

Dataset clustered_dataset(int classes, int per_class, std::size_t dim) {
  Dataset ds;
  ds.dim = dim;
  Rng rng(11);
  std::int64_t id = 0;
  for (int c = 0; c < classes; ++c) {
    Vector center = random_vector(dim, rng);
    for (int i = 0; i < per_class; ++i) {
      Vector x = center;
      for (double& v : x) v += 0.2 * rng.normal();
      ds.examples.push_back({id, "c" + std::to_string(c), id, x});
      ++id;
    }
  }
  return ds;
}

void BM_LogSumExp(benchmark::State& state) {
  Rng rng(1);
  const Vector v = random_vector(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(logsumexp(v));
  }
}
BENCHMARK(BM_LogSumExp)->Arg(16)->Arg(69)->Arg(512);

void BM_Softmax(benchmark::State& state) {
  Rng rng(2);
  const Vector v = random_vector(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax(v));
  }
}
BENCHMARK(BM_Softmax)->Arg(16)->Arg(69)->Arg(512);

void BM_FocalGrad(benchmark::State& state) {
  Rng rng(3);
  const std::size_t c = 50;
  const Vector logits = random_vector(c, rng);
  const FocalConfig cfg = FocalConfig::uniform(c, 2.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(focal_loss_logit_grad(logits, 7, cfg));
  }
}
BENCHMARK(BM_FocalGrad);

void BM_MlpForward(benchmark::State& state) {
  Rng rng(4);
  const MlpParams params = MlpParams::init({16, 64, 64, 50}, rng);
  const Vector x = random_vector(16, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mlp_apply(params, x));
  }
}
BENCHMARK(BM_MlpForward);

void BM_MlpBatchGradients(benchmark::State& state) {
  Rng rng(5);
  const MlpParams params = MlpParams::init({16, 64, 64, 50}, rng);
  std::vector<LabeledExample> batch;
  for (int i = 0; i < 64; ++i) {
    batch.push_back({random_vector(16, rng), static_cast<int>(rng.uniform_int(50))});
  }
  const FocalConfig cfg = FocalConfig::uniform(50, 0.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gradients(params, batch, cfg));
  }
}
BENCHMARK(BM_MlpBatchGradients);

void BM_EpisodeSampling(benchmark::State& state) {
  const Dataset ds = clustered_dataset(50, 30, 16);
  const std::vector<std::string> pool = ds.labels();
  const EpisodeSpec spec{5, 5, 10};
  Rng rng(6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_episode(ds, spec, pool, rng));
  }
}
BENCHMARK(BM_EpisodeSampling);

void BM_ProtoPredict(benchmark::State& state) {
  Rng rng(7);
  const MlpParams emb = MlpParams::init({16, 64, 32}, rng);
  const Dataset ds = clustered_dataset(static_cast<int>(state.range(0)), 5, 16);
  std::vector<std::pair<FeatureExample, int>> support;
  for (const auto& e : ds.examples) {
    support.push_back({e, static_cast<int>(e.id / 5)});
  }
  const SupportIndex index =
      build_support_index(emb, support, static_cast<std::size_t>(state.range(0)));
  const Vector q = random_vector(16, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(proto_predict(emb, index, q));
  }
}
BENCHMARK(BM_ProtoPredict)->Arg(5)->Arg(50);

void BM_EnsembleLogits(benchmark::State& state) {
  Rng rng(8);
  std::vector<Vector> members;
  for (int m = 0; m < 4; ++m) members.push_back(random_vector(50, rng));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ensemble_logits(members));
  }
}
BENCHMARK(BM_EnsembleLogits);

void BM_BatchSamplerUpsampling(benchmark::State& state) {
  const Dataset ds = clustered_dataset(50, 30, 4);
  const BatchSampler sampler(ds, true, 64);
  Rng rng(9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sampler.draw(rng));
  }
}
BENCHMARK(BM_BatchSamplerUpsampling);

}  // namespace

BENCHMARK_MAIN();
