// Microbenchmarks for the hot paths: dense kernels, the autodiff round trip,
// the full model forward, singular value shrinkage, and the rank metrics.

#include <benchmark/benchmark.h>

#include <vector>

#include "geomoe/data.hpp"
#include "geomoe/linalg.hpp"
#include "geomoe/losses.hpp"
#include "geomoe/metrics.hpp"
#include "geomoe/model.hpp"
#include "geomoe/rng.hpp"
#include "geomoe/tensor.hpp"

namespace {

using namespace geomoe;

Tensor random_tensor(Rng& rng, Shape shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return Tensor::from_data(std::move(shape), rng.normal_vec(n));
}

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  NoGradGuard ng;
  Tensor a = random_tensor(rng, {n, n});
  Tensor b = random_tensor(rng, {n, n});
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_HuberBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(2);
  Tensor pred = random_tensor(rng, {n, 12}).set_requires_grad(true);
  Tensor targ = random_tensor(rng, {n, 12});
  for (auto _ : state) {
    Tensor w = mul_scalar(pred, 1.0);
    Tensor loss = huber_loss(w, targ, 1.0);
    backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_HuberBackward)->Arg(32)->Arg(256);

void BM_ModelForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.d_model = static_cast<int>(state.range(0));
  cfg.d_e = cfg.d_model / 2;
  cfg.pre_layers = 1;
  cfg.pre_heads = 2;
  cfg.temporal_heads = 2;
  cfg.expert_layers = 1;
  cfg.attn_tokens = 2;
  cfg.attn_heads = 2;
  cfg.router_hidden = 16;
  cfg.head_shared = 32;
  cfg.head_adapter = 8;
  cfg.dropout = 0.0;
  Rng rng(3);
  CrmfModel model = CrmfModel::init(cfg, rng);
  FeatureBundle clip;
  clip.text = random_tensor(rng, {4, cfg.d_model});
  clip.audio = random_tensor(rng, {4, cfg.d_model});
  clip.video = random_tensor(rng, {6, cfg.d_model});
  NoGradGuard ng;
  for (auto _ : state) {
    ForwardOutput out = crmf_forward(model, clip, {});
    benchmark::DoNotOptimize(out.pred.data());
  }
}
BENCHMARK(BM_ModelForward)->Arg(16)->Arg(48);

void BM_Svt(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(4);
  Matrix y(n, n);
  for (auto& x : y.a) x = rng.normal();
  for (auto _ : state) {
    Matrix z = svt(y, 0.5);
    benchmark::DoNotOptimize(z.a.data());
  }
}
BENCHMARK(BM_Svt)->Arg(16)->Arg(60);

void BM_Spearman(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(5);
  std::vector<double> x(static_cast<std::size_t>(n)),
      y(static_cast<std::size_t>(n));
  for (auto& v : x) v = static_cast<double>(rng.uniform_int(0, 9));
  for (auto& v : y) v = static_cast<double>(rng.uniform_int(0, 9));
  for (auto _ : state) {
    benchmark::DoNotOptimize(spearman(x, y));
    benchmark::DoNotOptimize(kendall_tau_b(x, y));
  }
}
BENCHMARK(BM_Spearman)->Arg(100)->Arg(300);

}  // namespace

BENCHMARK_MAIN();
