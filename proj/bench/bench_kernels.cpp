// Serial reference vs OpenMP for the four parallel kernels.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "crnsynth/extremal.hpp"
#include "crnsynth/lieseries.hpp"
#include "crnsynth/synthesis.hpp"

using namespace crnsynth;

namespace {

std::vector<Vec3d> sweep_samples() {
  std::vector<Vec3d> s;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) s.push_back({0, -0.1 + 0.04 * i, -0.3 + 0.08 * j});
  return s;
}

template <bool Parallel>
void BM_sweep(benchmark::State& st) {
  const auto sys = make_tutorial({1.0, 1.0});
  const auto samples = sweep_samples();
  SweepOptions opt;
  opt.horizon = 0.4;
  for (auto _ : st) {
    auto r = Parallel ? backward_bc_sweep(sys, samples, opt) : backward_bc_sweep_serial(sys, samples, opt);
    benchmark::DoNotOptimize(r.data());
  }
  st.counters["threads"] = Parallel ? omp_get_max_threads() : 1;
}

template <bool Parallel>
void BM_stratify(benchmark::State& st) {
  const auto sys = make_tutorial({1.0, 1.0});
  TargetGrid g;
  g.ny = g.nz = 121;
  for (auto _ : st) {
    auto r = Parallel ? stratify_target(sys, g) : stratify_target_serial(sys, g);
    benchmark::DoNotOptimize(r.grid.data());
  }
  st.counters["threads"] = Parallel ? omp_get_max_threads() : 1;
}

template <bool Parallel>
void BM_splitting(benchmark::State& st) {
  SemiNormalFormParams p;
  p.a = 1.0;
  p.us0 = 3.0;
  const auto sys = make_semi_normal_form(p);
  SplitOptions o;
  o.w0_grid = {-0.08, -0.04, 0.0, 0.04, 0.06, 0.08};
  o.s0_grid = {-0.2, -0.1, -0.05, 0.0, 0.05};
  for (auto _ : st) {
    auto r = Parallel ? splitting_locus(sys, SplitKind::C1, o) : splitting_locus_serial(sys, SplitKind::C1, o);
    benchmark::DoNotOptimize(r.data());
  }
  st.counters["threads"] = Parallel ? omp_get_max_threads() : 1;
}

template <bool Parallel>
void BM_oracle(benchmark::State& st) {
  const auto sys = make_unfolding_2d({-1.0, 0.3});
  OracleOptions o;
  o.dt = 5e-3;
  o.horizon = 0.3;
  for (auto _ : st) {
    auto r = Parallel ? brute_force_oracle(sys, {-0.15, -0.02, 0.0}, o)
                      : brute_force_oracle_serial(sys, {-0.15, -0.02, 0.0}, o);
    benchmark::DoNotOptimize(r.best.time);
  }
  st.counters["threads"] = Parallel ? omp_get_max_threads() : 1;
}

}  // namespace

BENCHMARK(BM_sweep<false>)->Name("sweep/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep<true>)->Name("sweep/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_stratify<false>)->Name("stratify/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_stratify<true>)->Name("stratify/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_splitting<false>)->Name("splitting/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_splitting<true>)->Name("splitting/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_oracle<false>)->Name("oracle/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_oracle<true>)->Name("oracle/omp")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
