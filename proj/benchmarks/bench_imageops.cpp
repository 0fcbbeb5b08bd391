#include <benchmark/benchmark.h>

#include "pathssl/corruptions.hpp"
#include "pathssl/imagecolor.hpp"
#include "pathssl/synth.hpp"
#include "pathssl/views.hpp"

using namespace pathssl;

namespace {

Patch test_patch(int size, std::uint64_t seed) {
    SynthClassParams params;
    return gen_patch(params, Magnification::x20, Rng(seed), size);
}

void BM_ConvertLab(benchmark::State& state) {
    const Patch p = test_patch(224, 1);
    for (auto _ : state) {
        auto v = convert(p, ColorSpace::LAB);
        benchmark::DoNotOptimize(v);
    }
}
BENCHMARK(BM_ConvertLab);

void BM_RandStainNa(benchmark::State& state) {
    const Patch p = test_patch(224, 2);
    const std::vector<Patch> pool = {test_patch(224, 3), test_patch(224, 4), test_patch(224, 5)};
    const StainTemplate tmpl = fit_template(pool);
    Rng rng(6);
    for (auto _ : state) {
        auto out = randstainna(p, tmpl, rng);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_RandStainNa);

void BM_GaussianBlur(benchmark::State& state) {
    const Patch p = test_patch(224, 7);
    const double sigma = state.range(0) / 10.0;
    for (auto _ : state) {
        auto out = gaussian_blur(p, sigma);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_GaussianBlur)->Arg(5)->Arg(10)->Arg(20);

void BM_JpegRoundtrip(benchmark::State& state) {
    const Patch p = test_patch(224, 8);
    for (auto _ : state) {
        auto out = jpeg_roundtrip(p, static_cast<int>(state.range(0)));
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_JpegRoundtrip)->Arg(30)->Arg(90);

void BM_MultiCrop(benchmark::State& state) {
    const Patch p = test_patch(256, 9);
    MultiCropConfig cfg;
    cfg.min_overlap = 0.2;
    Rng rng(10);
    for (auto _ : state) {
        auto batch = make_multicrop(p, cfg, rng);
        benchmark::DoNotOptimize(batch);
    }
}
BENCHMARK(BM_MultiCrop);

void BM_ToyEncoder(benchmark::State& state) {
    const Patch p = test_patch(224, 11);
    for (auto _ : state) {
        auto rec = toy_encoder(p, "bench");
        benchmark::DoNotOptimize(rec);
    }
}
BENCHMARK(BM_ToyEncoder);

} // namespace
