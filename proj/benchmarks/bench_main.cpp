// Copyright (C) 2026 The compogen Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "compogen/compositor.hpp"
#include "compogen/layout.hpp"
#include "compogen/metrics.hpp"
#include "compogen/mock_backends.hpp"
#include "metric_fixtures.hpp"

using namespace compogen;

namespace {

Image random_mask(int side, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Image m(side, side, 1);
    for (auto& v : m.data()) {
        v = static_cast<double>(rng() & 1U);
    }
    return m;
}

void BM_SmoothMask(benchmark::State& state) {
    const Image mask = random_mask(static_cast<int>(state.range(0)), 1);
    const int window = static_cast<int>(state.range(1));
    for (auto _ : state) {
        benchmark::DoNotOptimize(smooth_mask(mask, window));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_SmoothMask)->Args({64, 5})->Args({512, 5})->Args({512, 15});

void BM_EvaluateSample(benchmark::State& state) {
    const auto f = fixtures::make_metric_fixture(42, static_cast<std::size_t>(state.range(0)));
    const auto backends = make_mock_backends(f.registry, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate_sample(f.request, *backends.detector, *backends.embedder));
    }
}
BENCHMARK(BM_EvaluateSample)->Arg(32)->Arg(512);

void BM_AssignAndDedup(benchmark::State& state) {
    const auto boxes_n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<DetectionBox> boxes(boxes_n);
    std::vector<std::vector<double>> scores(boxes_n, std::vector<double>(5));
    for (auto& row : scores) {
        for (auto& s : row) {
            s = u(rng);
        }
    }
    const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
    for (auto _ : state) {
        benchmark::DoNotOptimize(assign_and_dedup(boxes, scores, ids));
    }
}
BENCHMARK(BM_AssignAndDedup)->Arg(8)->Arg(128);

void BM_PlaceForegrounds(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    std::vector<std::string> ids;
    std::vector<ForegroundAsset> assets;
    for (int i = 0; i < k; ++i) {
        ids.push_back("c" + std::to_string(i));
        ForegroundAsset a;
        a.concept_id = ids.back();
        a.cutout = Image(256, 256, 4, 0.5);
        a.mask = Image(256, 256, 1, 1.0);
        a.tight_bbox = PixelRect{16, 16, 224, 224};
        assets.push_back(std::move(a));
    }
    const Layout layout = fallback_layout("bench", ids, Canvas{512, 512}, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(place_foregrounds(assets, layout));
    }
}
BENCHMARK(BM_PlaceForegrounds)->Arg(2)->Arg(5);

}  // namespace
BENCHMARK_MAIN();
