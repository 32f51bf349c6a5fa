#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "hsp/allocator.hpp"
#include "hsp/baselines.hpp"
#include "hsp/drivers.hpp"
#include "hsp/nnet.hpp"
#include "hsp/sensmat.hpp"

namespace {

using hsp::Matrix;

Matrix gaussian(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

std::vector<std::string> labels(const char* prefix, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

void BM_Linkage(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix d = hsp::sensmat::distance_matrix(gaussian(1, n, 5));
  for (auto _ : state) benchmark::DoNotOptimize(hsp::alloc::linkage(d, hsp::alloc::LinkageMethod::single));
}
BENCHMARK(BM_Linkage)->Arg(14)->Arg(50)->Arg(200);

void BM_HspWeights(benchmark::State& state) {
  const auto n = state.range(0);
  const hsp::sensmat::SensitivityEmbedding e{labels("A", n), labels("D", 5), gaussian(2, n, 5)};
  for (auto _ : state) benchmark::DoNotOptimize(hsp::alloc::hsp_weights(e, {}));
}
BENCHMARK(BM_HspWeights)->Arg(14)->Arg(50)->Arg(200);

void BM_HrpCorrelation(benchmark::State& state) {
  const Matrix r = gaussian(3, 126, state.range(0), 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(hsp::baselines::hrp_correlation(r));
}
BENCHMARK(BM_HrpCorrelation)->Arg(14)->Arg(50);

void BM_TrainMlp(benchmark::State& state) {
  const auto layers = static_cast<std::size_t>(state.range(0));
  const auto units = static_cast<std::size_t>(state.range(1));
  const Matrix drivers = gaussian(4, 200, 5, 0.01);
  std::vector<double> asset(200);
  for (Eigen::Index t = 0; t < 200; ++t) asset[static_cast<std::size_t>(t)] = 0.7 * drivers(t, 0) - 0.3 * drivers(t, 2);
  const hsp::nnet::ArchitectureConfig arch{layers, units, 0, 126, false, 7};
  const auto design = hsp::nnet::build_design(asset, drivers, labels("D", 5), arch);
  for (auto _ : state) benchmark::DoNotOptimize(hsp::nnet::train(arch, design));
}
BENCHMARK(BM_TrainMlp)->Args({1, 4})->Args({2, 16})->Unit(benchmark::kMillisecond);

void BM_LaggedCorrelation(benchmark::State& state) {
  const Matrix xy = gaussian(5, state.range(0), 2);
  const std::vector<double> x(xy.col(0).begin(), xy.col(0).end());
  const std::vector<double> y(xy.col(1).begin(), xy.col(1).end());
  for (auto _ : state) benchmark::DoNotOptimize(hsp::drivers::lagged_correlation(x, y, 1));
}
BENCHMARK(BM_LaggedCorrelation)->Arg(126)->Arg(2520);

}  // namespace

BENCHMARK_MAIN();
