#include <benchmark/benchmark.h>

#include "pathssl/objectives.hpp"

using namespace pathssl;

namespace {

Matrix make_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    return random_matrix(rows, cols, rng);
}

void BM_NtXent(benchmark::State& state) {
    const std::size_t b = static_cast<std::size_t>(state.range(0));
    const Matrix za = make_batch(b, 128, 1), zb = make_batch(b, 128, 2);
    for (auto _ : state) {
        auto res = nt_xent(za, zb, 0.1);
        benchmark::DoNotOptimize(res.loss);
    }
    state.SetComplexityN(static_cast<int64_t>(b));
}
BENCHMARK(BM_NtXent)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_NtXentWithGrad(benchmark::State& state) {
    const std::size_t b = static_cast<std::size_t>(state.range(0));
    const Matrix za = make_batch(b, 128, 3), zb = make_batch(b, 128, 4);
    for (auto _ : state) {
        auto res = nt_xent(za, zb, 0.1, true);
        benchmark::DoNotOptimize(res.grad_a);
    }
}
BENCHMARK(BM_NtXentWithGrad)->RangeMultiplier(2)->Range(16, 128);

void BM_ReweightedNtXent(benchmark::State& state) {
    const std::size_t b = static_cast<std::size_t>(state.range(0));
    const Matrix za = make_batch(b, 128, 5), zb = make_batch(b, 128, 6);
    for (auto _ : state) {
        auto res = reweighted_nt_xent(za, zb, 0.1, 0.1);
        benchmark::DoNotOptimize(res.loss);
    }
}
BENCHMARK(BM_ReweightedNtXent)->RangeMultiplier(2)->Range(16, 256);

void BM_Sinkhorn(benchmark::State& state) {
    const std::size_t k = static_cast<std::size_t>(state.range(0));
    Rng rng(7);
    Matrix scores(64, k);
    for (auto& v : scores.data()) v = 0.01 + rng.uniform();
    for (auto _ : state) {
        auto out = sinkhorn(scores, 3);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_Sinkhorn)->RangeMultiplier(4)->Range(64, 1024);

void BM_MsnLoss(benchmark::State& state) {
    const std::size_t k = static_cast<std::size_t>(state.range(0));
    Rng rng(8);
    std::vector<Matrix> students;
    for (int v = 0; v < 10; ++v) students.push_back(make_batch(32, 64, 100 + static_cast<std::uint64_t>(v)));
    const Matrix teacher = make_batch(32, 64, 9);
    const Prototypes protos = Prototypes::random(k, 64, rng);
    LossConfig cfg;
    for (auto _ : state) {
        auto res = msn_loss(students, teacher, protos, cfg);
        benchmark::DoNotOptimize(res.loss);
    }
}
BENCHMARK(BM_MsnLoss)->RangeMultiplier(4)->Range(64, 1024);

} // namespace
