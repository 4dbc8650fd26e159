// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>

#include "flexsel/optimizer.hpp"
#include "flexsel/pipeline.hpp"
#include "flexsel/probe.hpp"
#include "flexsel/softrank.hpp"

namespace flexsel {

struct SelectorConfig {
    size_t layers = 2;
    size_t heads = 2;
    size_t hidden = 32;
    size_t ffn = 64;
    size_t visual_dim = 64;
    size_t vocab = 7;
    size_t max_query = 8;
    size_t context_limit = 4096;
    bool linear_head = false;  // score with a linear head instead of final-layer attention
    uint64_t seed = 0;

    void validate() const;
    DecoderShape decoder_shape() const;
};

/// Compact scorer. Visual tokens attend to each other bidirectionally and
/// carry no positional embedding, so scores are permutation-equivariant in
/// the visual tokens; query tokens attend causally to everything before them.
class Selector {
public:
    Selector(SelectorConfig config, NamedTensors weights);
    static Selector init(const SelectorConfig& config);

    const SelectorConfig& config() const noexcept { return m_config; }
    const NamedTensors& weights() const noexcept { return m_weights; }
    NamedTensors& weights() noexcept { return m_weights; }

    /// Head-averaged final-layer attention from the query rows to each visual
    /// token (or the linear head output).
    std::vector<double> scores(const TokenSequence& seq) const;

    /// Differentiable form of `scores`, 1 x M.
    ad::Var scores(ad::Tape& tape, const NamedVars& params, const TokenSequence& seq) const;

private:
    SelectorConfig m_config;
    NamedTensors m_weights;
};

void save_selector(const Selector& selector, const std::filesystem::path& path);
Selector load_selector(const std::filesystem::path& path);

struct TrainingSample {
    TokenSequence sequence;
    std::vector<double> teacher;  // reference relevance scores, one per visual token
    std::vector<size_t> relevant;
};

/// Frozen planted teacher: one tent profile shared by every sample, with its
/// noise directions fixed by `seed`.
struct TeacherSpec {
    size_t layers = 8;
    size_t heads = 4;
    size_t peak_layer = 4;
    double peak = 0.9;
    double noise = 0.05;
    uint64_t seed = 7;

    PlantedSpec planted_for(const Haystack& haystack) const;
};

TrainingSample make_training_sample(const Haystack& haystack, const TeacherSpec& teacher);

/// Spec of dataset item `index`: `base` with a derived seed and payload.
HaystackSpec dataset_item_spec(const HaystackSpec& base, uint64_t seed, size_t index);

/// `count` haystacks derived from `base` with per-sample seeds and payloads.
std::vector<TrainingSample> planted_dataset(size_t count, const HaystackSpec& base, uint64_t seed,
                                            const TeacherSpec& teacher);

struct SelectorTrainOptions {
    size_t epochs = 5;
    size_t batch_size = 8;
    double lr = 3e-4;
    double warmup_fraction = 0.05;
    AdamWOptions adamw;
    SoftRankConfig rank;
    bool shuffle = true;
    size_t eval_every = 0;  // steps between curve points; 0 means once per epoch
    uint64_t seed = 0;
};

struct TrainState {
    uint64_t step = 0;
    uint64_t total_steps = 0;
    size_t epoch = 0;
    size_t cursor = 0;            // next position in `order`
    std::vector<size_t> order;    // sample visiting order of the current epoch
    AdamWMoments moments;
    std::string rng_state;
    double pending_loss = 0.0;    // loss sum since the last curve point
    size_t pending_steps = 0;
};

struct CurvePoint {
    size_t epoch = 0;
    uint64_t step = 0;
    double loss = 0.0;
    double holdout_spearman = 0.0;
};

/// Mean rank loss of the batch; per-sample gradients are computed in
/// parallel and reduced in batch order.
double batch_loss(const Selector& selector, const std::vector<const TrainingSample*>& batch,
                  const SoftRankConfig& rank, NamedTensors* grads);

/// One AdamW update on the batch. Returns the loss before the update; throws
/// DivergenceError naming the step when it is not finite.
double train_step(Selector& selector, TrainState& state, const std::vector<const TrainingSample*>& batch,
                  const SelectorTrainOptions& options);

double mean_spearman(const Selector& selector, const std::vector<TrainingSample>& samples);

/// Resumable training loop.
class SelectorTrainer {
public:
    SelectorTrainer(Selector selector, SelectorTrainOptions options, size_t train_size);
    SelectorTrainer(Selector selector, SelectorTrainOptions options, TrainState state);

    bool done() const noexcept { return m_state.step >= m_state.total_steps; }
    /// Runs one step; appends a curve point when an evaluation boundary is crossed.
    void advance(const std::vector<TrainingSample>& train, const std::vector<TrainingSample>& holdout);
    void run(const std::vector<TrainingSample>& train, const std::vector<TrainingSample>& holdout);

    const Selector& selector() const noexcept { return m_selector; }
    const TrainState& state() const noexcept { return m_state; }
    const std::vector<CurvePoint>& curve() const noexcept { return m_curve; }
    const std::vector<double>& step_losses() const noexcept { return m_step_losses; }

    void save_checkpoint(const std::filesystem::path& path) const;
    static SelectorTrainer load_checkpoint(const std::filesystem::path& path, SelectorTrainOptions options);

private:
    void begin_epoch();

    Selector m_selector;
    SelectorTrainOptions m_options;
    TrainState m_state;
    size_t m_train_size = 0;
    std::vector<CurvePoint> m_curve;
    std::vector<double> m_step_losses;
};

/// CSV with header `epoch,step,loss,holdout_spearman`.
std::string curve_csv(const std::vector<CurvePoint>& curve);

/// Lite path: the training-free pipeline scored by the selector.
SelectedTokens run_lite(const TokenSequence& seq, const PartitionSpec& partition, const SelectionConfig& selection,
                        const Selector& selector);

}  // namespace flexsel
