// Hankel products: FFT-based operator against the explicit matrix.
#include "ddpc/datamat.hpp"
#include "ddpc/dft.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

ddpc::Matrix random_record(ddpc::Index q, ddpc::Index T)
{
    std::mt19937_64 rng(static_cast<std::uint64_t>(T));
    std::normal_distribution<double> n;
    ddpc::Matrix w(q, T);
    for (ddpc::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = n(rng);
    }
    return w;
}

constexpr ddpc::Index kQ = 2;
constexpr ddpc::Index kDepth = 20;

void BM_DftMatvec(benchmark::State& state)
{
    const ddpc::DftFactorization f(random_record(kQ, state.range(0)), kDepth);
    const ddpc::Vector g = ddpc::Vector::Ones(f.cols());
    for (auto _ : state) {
        benchmark::DoNotOptimize(f.matvec(g));
    }
    state.SetComplexityN(state.range(0));
}

void BM_DftRmatvec(benchmark::State& state)
{
    const ddpc::DftFactorization f(random_record(kQ, state.range(0)), kDepth);
    const ddpc::Vector v = ddpc::Vector::Ones(f.rows());
    for (auto _ : state) {
        benchmark::DoNotOptimize(f.rmatvec(v));
    }
    state.SetComplexityN(state.range(0));
}

void BM_DenseMatvec(benchmark::State& state)
{
    const ddpc::Matrix H = ddpc::build_hankel(random_record(kQ, state.range(0)), kDepth);
    const ddpc::Vector g = ddpc::Vector::Ones(H.cols());
    for (auto _ : state) {
        ddpc::Vector y = H * g;
        benchmark::DoNotOptimize(y.data());
    }
    state.SetComplexityN(state.range(0));
}

}  // namespace

BENCHMARK(BM_DftMatvec)->RangeMultiplier(2)->Range(1 << 10, 1 << 15)->Complexity(benchmark::oNLogN);
BENCHMARK(BM_DftRmatvec)->RangeMultiplier(2)->Range(1 << 10, 1 << 15)->Complexity(benchmark::oNLogN);
BENCHMARK(BM_DenseMatvec)->RangeMultiplier(2)->Range(1 << 10, 1 << 15)->Complexity(benchmark::oN);

BENCHMARK_MAIN();
