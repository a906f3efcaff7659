#include "ufmlab/linalg.hpp"
#include "ufmlab/model.hpp"
#include "ufmlab/spectral.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace ufm;

static void BM_FlowRhs(benchmark::State& state) {
  const model::ProblemSpec spec{10, 5, static_cast<int>(state.range(0)), static_cast<int>(state.range(1))};
  const model::ModelParams p = model::random_init(spec, 0.3, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model::flow_rhs(p, spec, 1e-3));
}
BENCHMARK(BM_FlowRhs)->Args({100, 1})->Args({100, 4})->Args({100, 10})->Args({512, 3});

static void BM_LogitVelocity(benchmark::State& state) {
  const model::ProblemSpec spec{10, 5, static_cast<int>(state.range(0)), 3};
  const model::ModelParams p = model::random_init(spec, 0.01, 2);
  for (auto _ : state) benchmark::DoNotOptimize(model::logit_velocity(p, spec));
}
BENCHMARK(BM_LogitVelocity)->Arg(64)->Arg(1024);

static void BM_Train1000(benchmark::State& state) {
  const model::ProblemSpec spec{10, 5, 100, static_cast<int>(state.range(0))};
  const model::ModelParams p = model::random_init(spec, 0.3, 3);
  model::TrainSchedule s;
  s.epochs_phase2 = 1000;
  s.log_every = 1000;
  s.stop_loss.reset();
  for (auto _ : state) benchmark::DoNotOptimize(model::train(p, spec, s));
}
BENCHMARK(BM_Train1000)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

static void BM_SpectralRhs(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const spectral::ReducedDynamics dyn(K, 2);
  std::mt19937_64 rng(4);
  const spectral::SpectralState s = spectral::random_state(K, 2, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dyn.rhs(s.a));
}
BENCHMARK(BM_SpectralRhs)->Arg(16)->Arg(64)->Arg(256);

static void BM_Integrate(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const spectral::SpectralState s = spectral::random_state(16, 2, 1e-3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(spectral::integrate(s, 1e3));
}
BENCHMARK(BM_Integrate)->Unit(benchmark::kMillisecond);

static void BM_SingularValues(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  const int cols = static_cast<int>(state.range(1));
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  linalg::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(linalg::singular_values(m));
}
BENCHMARK(BM_SingularValues)->Args({10, 50})->Args({100, 100})->Args({200, 100});
BENCHMARK_MAIN();
