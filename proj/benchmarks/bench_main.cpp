#include <benchmark/benchmark.h>

#include <vector>

#include "sparsema/model.hpp"
#include "sparsema/nuts.hpp"
#include "sparsema/projection.hpp"
#include "sparsema/rng.hpp"
#include "sparsema/simulator.hpp"
#include "sparsema/univariate.hpp"

using namespace sparsema;

namespace {

// A default-configuration simulated meta-analysis with about 23 variates.
MetaDataset bench_dataset() {
  SimConfig config;
  config.seed = 7;
  config.variates = {23, 23};
  config.studies = {7, 7};
  return simulate_meta(config, 0).data;
}

void BM_LogPosteriorGradient(benchmark::State& state) {
  const MetaDataset data = bench_dataset();
  const int p = static_cast<int>(data.num_variates());
  const int q = static_cast<int>(state.range(0));
  const LowDimModel model(data, make_projection(p, q, 3));
  Philox rng(11);
  Eigen::VectorXd theta(model.dim());
  for (int k = 0; k < theta.size(); ++k) theta(k) = 0.1 * rng.normal();
  Eigen::VectorXd grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.log_posterior_gradient(theta, grad));
  }
  state.counters["estimates"] = static_cast<double>(data.num_estimates());
}
BENCHMARK(BM_LogPosteriorGradient)->Arg(1)->Arg(3)->Arg(5);

void BM_NutsTransition(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const LogDensityFn density = [](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    grad = -x;
    return -0.5 * x.squaredNorm();
  };
  NutsSampler sampler(density, dim, Philox(5));
  sampler.set_position(Eigen::VectorXd::Zero(dim));
  sampler.set_step_size(0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sampler.transition());
  }
}
BENCHMARK(BM_NutsTransition)->Arg(10)->Arg(50);

void BM_RemlTau2(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  Philox rng(2);
  std::vector<double> y(k);
  std::vector<double> v(k);
  for (int i = 0; i < k; ++i) {
    v[i] = rng.uniform(0.001, 0.05);
    y[i] = 0.2 + rng.normal(0.0, 0.15);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(reml_tau2(y, v));
  }
}
BENCHMARK(BM_RemlTau2)->Arg(3)->Arg(15);

}  // namespace

BENCHMARK_MAIN();
