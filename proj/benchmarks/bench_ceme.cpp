#include <benchmark/benchmark.h>

#include "ceme/eval/metrics.hpp"
#include "ceme/gpdata/generator.hpp"
#include "ceme/gpdata/gp.hpp"
#include "ceme/nnet/mlp.hpp"
#include "ceme/scm/model.hpp"
#include "ceme/vi/iw_elbo.hpp"

using namespace ceme;

namespace {

// Batch 64 with 32 importance samples is what the decoder sees per step.
void BM_MlpForward(benchmark::State& state) {
  Rng rng(1);
  const auto net = nnet::Mlp::he_uniform({2, 20, 20, 20, 1}, rng);
  const Eigen::MatrixXd x = standard_normal(2, state.range(0), rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(64)->Arg(2048);

void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const auto net = nnet::Mlp::he_uniform({2, 20, 20, 20, 1}, rng);
  const Eigen::MatrixXd x = standard_normal(2, state.range(0), rng);
  const Eigen::MatrixXd dy = Eigen::MatrixXd::Ones(1, state.range(0));
  nnet::ForwardCache cache;
  for (auto _ : state) {
    net.forward(x, cache);
    benchmark::DoNotOptimize(net.backward(cache, dy));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(2048);

void BM_IwElboGradient(benchmark::State& state) {
  Rng rng(3);
  scm::CemeModel model(1, scm::NetworkShape{}, rng, 0.5, 0.5);
  const auto n = state.range(0);
  const auto k = static_cast<int>(state.range(1));
  Dataset batch;
  batch.z = standard_normal(1, n, rng);
  batch.x = standard_normal(n, 1, rng);
  batch.y = standard_normal(n, 1, rng);
  const Eigen::MatrixXd eps = standard_normal(k, n, rng);
  for (auto _ : state) {
    scm::CemeGradient g;
    benchmark::DoNotOptimize(vi::iw_elbo(model, batch, eps, 2.0, &g));
  }
  state.SetItemsProcessed(state.iterations() * n * k);
}
BENCHMARK(BM_IwElboGradient)->Args({64, 32})->Args({256, 32})->Args({64, 1});

void BM_IwElboValue(benchmark::State& state) {
  Rng rng(4);
  scm::CemeModel model(1, scm::NetworkShape{}, rng, 0.5, 0.5);
  const auto n = state.range(0);
  Dataset batch;
  batch.z = standard_normal(1, n, rng);
  batch.x = standard_normal(n, 1, rng);
  batch.y = standard_normal(n, 1, rng);
  const Eigen::MatrixXd eps = standard_normal(32, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(vi::iw_elbo(model, batch, eps, 1.0));
  state.SetItemsProcessed(state.iterations() * n * 32);
}
BENCHMARK(BM_IwElboValue)->Arg(1024);

void BM_GpSample1d(benchmark::State& state) {
  const Eigen::VectorXd grid = gpdata::make_grid(-3.0, 3.0, static_cast<int>(state.range(0)), {});
  Rng rng(5);
  for (auto _ : state) benchmark::DoNotOptimize(gpdata::GpFunction::sample({}, 0.0, grid.transpose(), rng, 1e-8));
}
BENCHMARK(BM_GpSample1d)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_GpEvaluate2d(benchmark::State& state) {
  Rng rng(6);
  const Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(10, -3, 3);
  const auto f = gpdata::GpFunction::sample({}, 0.0, gpdata::make_grid_2d(a, a, 31, {}), rng, 1e-8);
  const Eigen::MatrixXd pts = standard_normal(2, state.range(0), rng);
  for (auto _ : state) benchmark::DoNotOptimize(f.evaluate(pts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GpEvaluate2d)->Arg(5000);

void BM_DatasetBundle(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gpdata::dataset_bundle(4000, 2000, 5000, 0.2, ++seed));
}
BENCHMARK(BM_DatasetBundle)->Unit(benchmark::kMillisecond);

// One x* value of AID: model mixture over the test z sample, 2000 y draws.
void BM_MixtureDensity(benchmark::State& state) {
  Rng rng(7);
  const Eigen::VectorXd means = standard_normal(state.range(0), 1, rng);
  Eigen::VectorXd y = standard_normal(2000, 1, rng);
  std::sort(y.data(), y.data() + y.size());
  for (auto _ : state) benchmark::DoNotOptimize(scm::mixture_density(means, 0.3, y));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 2000);
}
BENCHMARK(BM_MixtureDensity)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_TruthDensityQuadrature(benchmark::State& state) {
  const auto bundle = gpdata::dataset_bundle(200, 50, 50, 0.2, 9);
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(2000, -3, 3);
  for (auto _ : state) benchmark::DoNotOptimize(eval::truth_interventional_density(*bundle.truth, 0.1, y));
}
BENCHMARK(BM_TruthDensityQuadrature)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
