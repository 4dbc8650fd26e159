// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "flexsel/kernels.hpp"
#include "flexsel/pipeline.hpp"
#include "flexsel/probe.hpp"
#include "flexsel/reference_model.hpp"
#include "flexsel/rng.hpp"

using namespace flexsel;

namespace {

Tensor random_matrix(size_t rows, size_t cols, uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::matrix(rows, cols);
    for (double& v : t.data()) {
        v = rng.normal();
    }
    return t;
}

template <Tensor (*Fn)(const Tensor&, const Tensor&)>
void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<size_t>(state.range(0));
    const Tensor a = random_matrix(n, n, 1);
    const Tensor b = random_matrix(n, n, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(a, b));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * n));
}

template <Tensor (*Fn)(const Tensor&, const kernels::AttentionMask&)>
void bm_softmax(benchmark::State& state) {
    const auto n = static_cast<size_t>(state.range(0));
    const Tensor x = random_matrix(n, n, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(x, {}));
    }
}

struct PipelineFixture {
    Haystack haystack;
    ReferenceModel model;
    PartitionSpec partition;

    explicit PipelineFixture(size_t frames)
        : haystack(make_haystack(frames)), model(make_model()), partition{frames, 32} {}

    static Haystack make_haystack(size_t frames) {
        HaystackSpec spec;
        spec.frames = frames;
        spec.tokens_per_frame = 4;
        spec.visual_dim = 16;
        spec.seed = 5;
        return build_haystack(spec);
    }

    static ReferenceModel make_model() {
        ModelConfig config;
        config.layers = 4;
        config.heads = 2;
        config.hidden = 32;
        config.ffn = 64;
        config.visual_dim = 16;
        config.max_positions = 256;
        return ReferenceModel::init(config);
    }
};

template <bool Parallel>
void bm_pipeline(benchmark::State& state) {
    const PipelineFixture fixture(static_cast<size_t>(state.range(0)));
    const ReferenceScorer scorer(fixture.model, 2);
    const SelectionConfig selection;
    for (auto _ : state) {
        const TokenSequence& seq = fixture.haystack.sequence;
        if constexpr (Parallel) {
            benchmark::DoNotOptimize(run_training_free(seq, fixture.partition, selection, scorer));
        } else {
            benchmark::DoNotOptimize(serial::run_training_free(seq, fixture.partition, selection, scorer));
        }
    }
}

}  // namespace

BENCHMARK(bm_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul<kernels::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul<kernels::serial::matmul_nt>)->Name("matmul_nt/serial")->Arg(128)->Arg(256);
BENCHMARK(bm_matmul<kernels::matmul_nt>)->Name("matmul_nt/parallel")->Arg(128)->Arg(256);
BENCHMARK(bm_softmax<kernels::serial::softmax_rows>)->Name("softmax_rows/serial")->Arg(256)->Arg(1024);
BENCHMARK(bm_softmax<kernels::softmax_rows>)->Name("softmax_rows/parallel")->Arg(256)->Arg(1024);
BENCHMARK(bm_pipeline<false>)->Name("training_free/serial")->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_pipeline<true>)->Name("training_free/parallel")->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
