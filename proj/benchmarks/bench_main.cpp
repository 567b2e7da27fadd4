#include <benchmark/benchmark.h>

#include <vector>

#include "anatpaste/augment.hpp"
#include "anatpaste/classifier.hpp"
#include "anatpaste/imgcore.hpp"
#include "anatpaste/lungseg.hpp"
#include "anatpaste/phantom.hpp"
#include "anatpaste/scoring.hpp"

namespace {

using namespace anatpaste;

const phantom::PhantomSample& sample() {
    static const auto s = phantom::generate({}, 0, phantom::SampleClass::normal);
    return s;
}

void BM_SegmentLungs(benchmark::State& state) {
    const auto cfg = seg::SegConfig::defaults_for(256, 256);
    for (auto _ : state) benchmark::DoNotOptimize(seg::segment_lungs(sample().image, cfg));
}
BENCHMARK(BM_SegmentLungs)->Unit(benchmark::kMillisecond);

void BM_Clahe(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(img::clahe(sample().image));
}
BENCHMARK(BM_Clahe)->Unit(benchmark::kMillisecond);

void BM_GaussianBlur(benchmark::State& state) {
    const double radius = static_cast<double>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(img::gaussian_blur(sample().image, radius));
}
BENCHMARK(BM_GaussianBlur)->Arg(3)->Arg(15)->Unit(benchmark::kMillisecond);

void BM_AnatPaste(benchmark::State& state) {
    const auto lung = seg::segment_lungs(sample().image, seg::SegConfig::defaults_for(256, 256)).mask;
    const aug::AnatPasteConfig cfg;
    std::uint64_t k = 0;
    for (auto _ : state) {
        Rng rng = Rng::derive(1, {k++});
        benchmark::DoNotOptimize(aug::anat_paste(sample().image, lung, cfg, rng));
    }
}
BENCHMARK(BM_AnatPaste)->Unit(benchmark::kMillisecond);

void BM_ExtractFeatures(benchmark::State& state) {
    const nn::Descriptor d;
    for (auto _ : state) benchmark::DoNotOptimize(nn::extract_features(sample().image, d));
}
BENCHMARK(BM_ExtractFeatures)->Unit(benchmark::kMicrosecond);

void BM_KdeLogDensity(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    std::vector<kde::FeatureVector> refs(n, kde::FeatureVector(32));
    for (auto& r : refs) {
        for (double& v : r) v = rng.normal();
    }
    const auto model = kde::KdeModel::fit(refs);
    kde::FeatureVector q(32);
    for (double& v : q) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(model.log_density(q));
}
BENCHMARK(BM_KdeLogDensity)->Arg(100)->Arg(400)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
    Rng rng(3);
    const std::vector<std::size_t> sizes{288, 128, 64, 32, 2};
    nn::MlpModel model = nn::MlpModel::random(sizes, rng);
    auto opt = nn::OptimState::for_model(model);
    auto grads = nn::Gradients::like(model);
    std::vector<double> x(288);
    for (double& v : x) v = rng.uniform();
    for (auto _ : state) {
        grads.clear();
        for (int i = 0; i < 128; ++i) nn::accumulate_gradients(model, x, i % 2, grads, 1.0 / 128.0);
        nn::sgd_step(model, grads, opt, 0.01);
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
