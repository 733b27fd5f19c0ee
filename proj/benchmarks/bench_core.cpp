// Hot paths: batched tape evaluation, symbolic differentiation with
// simplification, reducer application and one spectral windowed transform.

#include <benchmark/benchmark.h>

#include <random>

#include "oscint/microlocal.hpp"
#include "oscint/tape.hpp"

using namespace oscint;

namespace {

const char* const kKleinGordon = "-x1*sqrt(t1^2+t2^2+t3^2+1) + x2*t1 + x3*t2 + x4*t3";
const Dims kDims(4, 3);

PhaseFn kg_phase() {
  ScanConfig cfg;
  cfg.box = Box::cube(4, -2, 2);
  return validate_phase(parse(kKleinGordon, kDims), kDims, 1.0, cfg);
}

void BM_TapeBatch(benchmark::State& state) {
  const Expr phi = parse(kKleinGordon, kDims);
  std::vector<Expr> outs{phi};
  for (int j = 0; j < 3; ++j) outs.push_back(diff(phi, Theta(j)));
  const Tape tape(outs, kDims);
  const auto count = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> in(count * tape.inputs()), out(count * tape.outputs());
  for (auto& v : in) v = u(rng);
  for (auto _ : state) {
    tape.eval_batch(in, count, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * count));
}
BENCHMARK(BM_TapeBatch)->Arg(64)->Arg(1024)->Arg(16384);

void BM_DiffSimplify(benchmark::State& state) {
  const Expr phi = parse(kKleinGordon, kDims);
  for (auto _ : state) {
    Expr e = phi;
    for (int k = 0; k < state.range(0); ++k) e = simplify(diff(e, Theta(k % 3)));
    benchmark::DoNotOptimize(e.get());
  }
}
BENCHMARK(BM_DiffSimplify)->Arg(1)->Arg(3)->Arg(5);

void BM_ParseFormat(benchmark::State& state) {
  for (auto _ : state) {
    const Expr e = parse(kKleinGordon, kDims);
    benchmark::DoNotOptimize(format(e));
  }
}
BENCHMARK(BM_ParseFormat);

void BM_ApplyReducer(benchmark::State& state) {
  const PhaseFn phi = kg_phase();
  const Reducer R = build_reducer(phi);
  const SymbolFn u{CExpr(build_bump(Axis::X, {0, 0, 0, 0}, 0.5, 1).expr), kDims, 0.0};
  for (auto _ : state) {
    SymbolFn v = u;
    for (int k = 0; k < state.range(0); ++k) v = apply_reducer(R, v);
    benchmark::DoNotOptimize(v.expr.re.get());
  }
}
BENCHMARK(BM_ApplyReducer)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_TransposeIdentity(benchmark::State& state) {
  const PhaseFn phi = kg_phase();
  const Reducer R = build_reducer(phi);
  for (auto _ : state) benchmark::DoNotOptimize(verify_transpose_identity(R, phi, 1000));
}
BENCHMARK(BM_TransposeIdentity)->Unit(benchmark::kMillisecond);

void BM_SpectralWindowedFourier(benchmark::State& state) {
  const PhaseFn phi = kg_phase();
  const SymbolFn one{CExpr(constant(1)), kDims, 0.0};
  const TestFn psi = TestFn::gaussian({1, 0.5, 0, 0}, 0.25);
  QuadOptions o;
  o.strict = false;
  const double rho = static_cast<double>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(windowed_fourier(one, phi, psi, {rho * 0.6, rho * 0.8, 0, 0}, FourierPolicy::Spectral, o));
  }
}
BENCHMARK(BM_SpectralWindowedFourier)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
