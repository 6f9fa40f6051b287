#include "support.hpp"

#include <mtsk/baseline_kernels.hpp>
#include <mtsk/cluster.hpp>
#include <mtsk/impute.hpp>
#include <mtsk/lps.hpp>
#include <mtsk/tck.hpp>

#include <benchmark/benchmark.h>

using namespace mtsk;

namespace {

Cohort cohort(int n, int days, double rate) {
  return testing::synthetic(n / 4, n - n / 4, 5, days, rate, 1);
}

void BM_GakGram(benchmark::State& state) {
  const Cohort raw = cohort(static_cast<int>(state.range(0)), 20, 0.3);
  const Cohort c = impute(fit_imputer(raw, ImputeMethod::Zero, true), raw);
  const GakParams p = fit_gak_params(c);
  for (auto _ : state) benchmark::DoNotOptimize(gak_gram(c, nullptr, p).gram.sum());
}
BENCHMARK(BM_GakGram)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_TckTrain(benchmark::State& state) {
  const Cohort c = cohort(static_cast<int>(state.range(0)), 20, 0.3);
  TckOptions opt;
  opt.Q = 10;
  for (auto _ : state) benchmark::DoNotOptimize(tck_train(c, opt).kernel.gram.sum());
}
BENCHMARK(BM_TckTrain)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_LpsTrain(benchmark::State& state) {
  const Cohort c = cohort(static_cast<int>(state.range(0)), 20, 0.3);
  LpsOptions opt;
  opt.trees = 50;
  for (auto _ : state) {
    const auto forest = lps_train(c, opt);
    benchmark::DoNotOptimize(lps_gram(forest, c, nullptr).gram.sum());
  }
}
BENCHMARK(BM_LpsTrain)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_KpcaFit(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = state.range(0);
  const Matrix a = testing::random_matrix(n, n, rng);
  const Matrix K = a * a.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(kpca_fit(K, 10).second.sum());
}
BENCHMARK(BM_KpcaFit)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
