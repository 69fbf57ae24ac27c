// Serial vs OpenMP timings for the hot loops: kernel-block construction and
// the per-round objective/gradient/Hessian-product passes. Run with
// --benchmark_filter=... to narrow.

#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "nytron/data.hpp"
#include "nytron/kernel.hpp"
#include "nytron/objective.hpp"
#include "nytron/rng.hpp"

using namespace nytron;

namespace {

constexpr std::size_t kRows = 4000;
constexpr std::size_t kBasis = 200;
constexpr int kDim = 20;
constexpr double kLambda = 0.5;
constexpr double kSigma = 3.0;

double gauss(Rng64& rng) {
  const double u1 = rng.next_unit() + 1e-300;
  const double u2 = rng.next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

Shard make_shard() {
  Rng64 rng(4242);
  Shard s;
  s.examples.reserve(kRows);
  s.global_ids.reserve(kRows);
  for (std::size_t i = 0; i < kRows; ++i) {
    SparseExample ex;
    for (int j = 0; j < kDim; ++j) {
      ex.x.idx.push_back(j);
      ex.x.val.push_back(gauss(rng));
    }
    ex.label = (i % 2 == 0) ? 1 : -1;
    s.examples.push_back(std::move(ex));
    s.global_ids.push_back(static_cast<std::int64_t>(i));
  }
  return s;
}

BasisSet make_basis(const Shard& shard) {
  BasisSet bs;
  bs.sigma = kSigma;
  for (std::size_t k = 0; k < kBasis; ++k) bs.append(shard.examples[k * 7].x);
  return bs;
}

struct Fixture {
  Shard shard = make_shard();
  BasisSet basis;
  KernelBlock block;
  std::vector<double> beta, d;

  Fixture() : basis(make_basis(shard)) {
    block = build_kernel_block(shard, basis, {kLambda, kSigma},
                               {0, static_cast<std::int32_t>(kBasis)});
    Rng64 rng(99);
    beta.resize(kBasis);
    d.resize(kBasis);
    for (auto& v : beta) v = 0.3 * gauss(rng);
    for (auto& v : d) v = gauss(rng);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_BuildBlockSerial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto b = serial::build_kernel_block(f.shard, f.basis, {kLambda, kSigma},
                                        {0, static_cast<std::int32_t>(kBasis)});
    benchmark::DoNotOptimize(b.c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(kRows * kBasis));
}
BENCHMARK(BM_BuildBlockSerial)->Unit(benchmark::kMillisecond);

void BM_BuildBlockOmp(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto b = build_kernel_block(f.shard, f.basis, {kLambda, kSigma},
                                {0, static_cast<std::int32_t>(kBasis)});
    benchmark::DoNotOptimize(b.c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(kRows * kBasis));
}
BENCHMARK(BM_BuildBlockOmp)->Unit(benchmark::kMillisecond);

void BM_EvalFusedSerial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    LocalPartials lp;
    const LossState st = serial::local_outputs(f.block, f.beta, Loss::squared_hinge);
    serial::local_objective(f.block, st, f.beta, lp);
    serial::local_gradient(f.block, st, f.beta, kLambda, lp);
    benchmark::DoNotOptimize(lp.g.data());
  }
}
BENCHMARK(BM_EvalFusedSerial)->Unit(benchmark::kMicrosecond);

void BM_EvalFusedOmp(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    LocalPartials lp;
    const LossState st = local_eval_fused(f.block, f.beta, Loss::squared_hinge, kLambda, lp);
    benchmark::DoNotOptimize(lp.g.data());
    benchmark::DoNotOptimize(st.outputs.data());
  }
}
BENCHMARK(BM_EvalFusedOmp)->Unit(benchmark::kMicrosecond);

void BM_HessVecSerial(benchmark::State& state) {
  auto& f = fixture();
  LocalPartials lp;
  const LossState st = serial::local_outputs(f.block, f.beta, Loss::squared_hinge);
  for (auto _ : state) {
    serial::local_hessian_vec(f.block, st, f.d, kLambda, lp);
    benchmark::DoNotOptimize(lp.hd.data());
  }
}
BENCHMARK(BM_HessVecSerial)->Unit(benchmark::kMicrosecond);

void BM_HessVecOmp(benchmark::State& state) {
  auto& f = fixture();
  LocalPartials lp;
  const LossState st = local_outputs(f.block, f.beta, Loss::squared_hinge);
  for (auto _ : state) {
    local_hessian_vec(f.block, st, f.d, kLambda, lp);
    benchmark::DoNotOptimize(lp.hd.data());
  }
}
BENCHMARK(BM_HessVecOmp)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
