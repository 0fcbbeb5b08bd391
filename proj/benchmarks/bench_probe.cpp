#include <benchmark/benchmark.h>

#include "pathssl/probe.hpp"
#include "pathssl/rng.hpp"

using namespace pathssl;

namespace {

struct ProbeData {
    Matrix x;
    std::vector<int> y;
    std::vector<std::string> slides;
};

ProbeData make_data(std::size_t n, std::size_t dim, int classes, std::uint64_t seed) {
    Rng rng(seed);
    ProbeData d;
    d.x = Matrix(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
        for (std::size_t j = 0; j < dim; ++j)
            d.x(i, j) = (j % static_cast<std::size_t>(classes) == static_cast<std::size_t>(c) ? 1.0 : 0.0) +
                        rng.normal();
        d.y.push_back(c);
        d.slides.push_back("s" + std::to_string(i % 25));
    }
    return d;
}

void BM_TrainLogreg(benchmark::State& state) {
    const auto d = make_data(static_cast<std::size_t>(state.range(0)), 32, 3, 1);
    for (auto _ : state) {
        auto model = train_logreg(d.x, d.y, 1.0);
        benchmark::DoNotOptimize(model);
    }
}
BENCHMARK(BM_TrainLogreg)->Arg(500)->Arg(2000)->Arg(8000);

void BM_CrossValidate(benchmark::State& state) {
    const auto d = make_data(static_cast<std::size_t>(state.range(0)), 32, 3, 2);
    for (auto _ : state) {
        const double c = cross_validate(d.x, d.y, d.slides, Rng(3));
        benchmark::DoNotOptimize(c);
    }
}
BENCHMARK(BM_CrossValidate)->Arg(500)->Arg(2000);

void BM_AucMacro(benchmark::State& state) {
    Rng rng(4);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Matrix probs(n, 3);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        double z = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            probs(i, c) = 0.05 + rng.uniform();
            z += probs(i, c);
        }
        for (std::size_t c = 0; c < 3; ++c) probs(i, c) /= z;
        labels[i] = static_cast<int>(i % 3);
    }
    for (auto _ : state) {
        const double auc = auc_macro(probs, labels);
        benchmark::DoNotOptimize(auc);
    }
}
BENCHMARK(BM_AucMacro)->Arg(1000)->Arg(5000)->Arg(20000);

} // namespace
