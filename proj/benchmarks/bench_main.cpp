#include <benchmark/benchmark.h>

#include "difftune/arith.hpp"
#include "difftune/environment.hpp"
#include "difftune/paramspace.hpp"
#include "difftune/rng.hpp"
#include "difftune/spatial.hpp"
#include "difftune/surrogate.hpp"

namespace {

using namespace difftune;

void BM_ArithEnumerate(benchmark::State& state) {
  arith::ArithProblem p;
  p.x = arith::Number(3);
  p.y = arith::Number(36);
  const std::vector<arith::Op> ops = {arith::Op::kAdd, arith::Op::kSub, arith::Op::kMul,
                                      arith::Op::kDiv};
  const auto len = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(arith::enumerate_solutions(p, ops, len, 1000));
  }
}
BENCHMARK(BM_ArithEnumerate)->DenseRange(2, 6, 2);

void BM_SpatialGroundTruth(benchmark::State& state) {
  const auto env = env::Environment::spatial();
  const auto config = paramspace::sample_uniform(env.spec(), 5);
  const auto params = spatial::params_from_config(config);
  const auto problem = spatial::generate_problem(params, 17);
  for (auto _ : state) {
    benchmark::DoNotOptimize(spatial::compute_ground_truth(problem));
  }
}
BENCHMARK(BM_SpatialGroundTruth);

void BM_RidgeFit(benchmark::State& state) {
  Rng rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<double>> rows(n, std::vector<double>(12));
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : rows[i]) v = rng.uniform01();
    y[i] = 0.5 * rows[i][0] + 0.1 * rng.uniform01();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(designers::fit_ridge(rows, y, 0.1));
  }
}
BENCHMARK(BM_RidgeFit)->Arg(100)->Arg(1000);

}  // namespace
BENCHMARK_MAIN();
