#include <benchmark/benchmark.h>

#include <vector>

#include "gano/autodiff.hpp"
#include "gano/geometry.hpp"
#include "gano/helmholtz.hpp"
#include "gano/kernels.hpp"
#include "gano/optloop.hpp"
#include "gano/pipeline.hpp"
#include "gano/rng.hpp"
#include "gano/stablesdf.hpp"
#include "gano/surrogate.hpp"

namespace {

using namespace gano;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    ad::kernels::matmul(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

sdf::SdfDecoder bench_decoder() { return sdf::SdfDecoder(sdf::DecoderConfig{16, {64, 64, 64}}, 3); }

void BM_DecoderEval(benchmark::State& state) {
  const auto dec = bench_decoder();
  const std::vector<double> z(16, 0.1);
  const std::vector<geo::Vec2> xs = geo::make_grid(static_cast<std::size_t>(state.range(0))).points();
  for (auto _ : state) benchmark::DoNotOptimize(dec.eval(xs, z));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * xs.size()));
}
BENCHMARK(BM_DecoderEval)->Arg(16)->Arg(64);

void BM_DecoderEvalWithGrad(benchmark::State& state) {
  const auto dec = bench_decoder();
  const std::vector<double> z(16, 0.1);
  const std::vector<geo::Vec2> xs = geo::make_grid(16).points();
  for (auto _ : state) benchmark::DoNotOptimize(dec.eval_with_grad(xs, z));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * xs.size()));
}
BENCHMARK(BM_DecoderEvalWithGrad);

void BM_Reprojection(benchmark::State& state) {
  const auto dec = bench_decoder();
  const std::vector<double> z(16, 0.1);
  const std::vector<geo::Vec2> xs = geo::make_grid(16).points();
  for (auto _ : state) benchmark::DoNotOptimize(opt::reproject_points(dec, xs, z, 5, 1e-8));
}
BENCHMARK(BM_Reprojection);

void BM_HelmholtzSolve(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const geo::GridField q = helm::rasterize_q(geo::FourierShape{}, n, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(helm::solve_forward(q, 7.0, 0.0));
}
BENCHMARK(BM_HelmholtzSolve)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_SurrogateForward(benchmark::State& state) {
  surrogate::SurrogateConfig cfg;
  cfg.width = static_cast<std::size_t>(state.range(0));
  cfg.blocks = static_cast<std::size_t>(state.range(1));
  const surrogate::Surrogate model(cfg, 4);
  Rng rng(5);
  ad::Tensor q(228, 4);
  for (auto& v : q.values()) v = rng.uniform(-1.0, 1.0);
  const std::vector<double> z(cfg.latent_dim, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(q, z));
}
BENCHMARK(BM_SurrogateForward)->Args({32, 2})->Args({64, 3})->Unit(benchmark::kMillisecond);

void BM_SurrogateTrainStep(benchmark::State& state) {
  surrogate::SurrogateConfig cfg;
  cfg.width = 32;
  cfg.blocks = 2;
  const surrogate::Surrogate model(cfg, 4);
  Rng rng(6);
  ad::Tensor q(228, 4), target(228, 2), zt(1, cfg.latent_dim);
  for (auto& v : q.values()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : target.values()) v = rng.normal();
  for (auto _ : state) {
    ad::Tape tape;
    const auto bound = model.params().bind(tape, true);
    const ad::Var loss =
        surrogate::relative_l1(model.forward(tape, bound, tape.constant(q), tape.constant(zt)), tape.constant(target));
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_SurrogateTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
