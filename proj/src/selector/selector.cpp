// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/selector.hpp"

#include <cmath>
#include <exception>

#include "flexsel/errors.hpp"
#include "flexsel/serialize.hpp"
#include "flexsel/weight_file.hpp"

namespace flexsel {

void SelectorConfig::validate() const {
    if (layers < 1 || heads < 1 || hidden < 1 || ffn < 1 || visual_dim < 1 || vocab < 1 || max_query < 1) {
        throw ConfigError("selector sizes must be at least 1");
    }
    if (hidden % heads != 0) {
        throw ConfigError("selector hidden size " + std::to_string(hidden) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
}

DecoderShape SelectorConfig::decoder_shape() const {
    DecoderShape s;
    s.layers = layers;
    s.heads = heads;
    s.hidden = hidden;
    s.ffn = ffn;
    s.visual_dim = visual_dim;
    s.vocab = vocab;
    s.max_positions = 0;
    s.max_query = max_query;
    s.mask = kernels::AttentionMask::Kind::prefix;
    return s;
}

Selector::Selector(SelectorConfig config, NamedTensors weights) : m_config(config), m_weights(std::move(weights)) {
    m_config.validate();
    check_decoder_weights(m_config.decoder_shape(), m_weights);
    if (m_config.linear_head) {
        auto it = m_weights.find("head.score");
        if (it == m_weights.end() || it->second.shape() != Shape{1, m_config.hidden}) {
            throw ConfigError("missing or misshapen parameter head.score");
        }
    }
}

Selector Selector::init(const SelectorConfig& config) {
    config.validate();
    Rng rng(config.seed);
    NamedTensors weights = init_decoder(config.decoder_shape(), rng);
    if (config.linear_head) {
        Tensor head = Tensor::matrix(1, config.hidden);
        for (double& v : head.data()) {
            v = rng.normal() / std::sqrt(static_cast<double>(config.hidden));
        }
        weights["head.score"] = std::move(head);
    }
    return Selector(config, std::move(weights));
}

ad::Var Selector::scores(ad::Tape& tape, const NamedVars& params, const TokenSequence& seq) const {
    if (seq.length() > m_config.context_limit) {
        throw CapacityError("sequence of " + std::to_string(seq.length()) +
                            " tokens exceeds the selector context limit of " + std::to_string(m_config.context_limit));
    }
    const DecoderPass pass = decoder_forward(tape, m_config.decoder_shape(), params, seq);
    const size_t m = seq.visual_count();
    const size_t q = seq.query_count();
    if (m_config.linear_head) {
        ad::Var visual = ad::slice(pass.hidden, 0, m, 0, m_config.hidden);
        return ad::matmul_nt(params.at("head.score"), visual);
    }
    const auto& last = pass.attention.back();
    ad::Var total = ad::mean_rows(ad::slice(last.front(), m, q, 0, m));
    for (size_t h = 1; h < last.size(); ++h) {
        total = ad::add(total, ad::mean_rows(ad::slice(last[h], m, q, 0, m)));
    }
    return ad::scale(total, 1.0 / static_cast<double>(last.size()));
}

std::vector<double> Selector::scores(const TokenSequence& seq) const {
    seq.validate();
    ad::Tape tape(false);
    const NamedVars params = bind_constants(tape, m_weights);
    const ad::Var out = scores(tape, params, seq);
    return out.value().values();
}

void save_selector(const Selector& selector, const std::filesystem::path& path) {
    nlohmann::json config = {{"kind", "selector"}, {"selector", selector.config()}};
    save_weight_file(path, config, selector.weights());
}

Selector load_selector(const std::filesystem::path& path) {
    WeightFile file = load_weight_file(path);
    if (file.config.value("kind", "") != "selector") {
        throw FormatError(path.string() + " does not hold selector weights");
    }
    return Selector(file.config.at("selector").get<SelectorConfig>(), std::move(file.tensors));
}

PlantedSpec TeacherSpec::planted_for(const Haystack& haystack) const {
    return PlantedSpec::tent(layers, heads, haystack.relevant, haystack.sequence.visual_count(), peak_layer, peak,
                             noise, seed);
}

TrainingSample make_training_sample(const Haystack& haystack, const TeacherSpec& teacher) {
    TrainingSample sample;
    sample.sequence = haystack.sequence;
    sample.relevant = haystack.relevant;
    const PlantedSpec spec = teacher.planted_for(haystack);
    sample.teacher = relevance_scores(planted_forward(spec, haystack.sequence), teacher.peak_layer);
    return sample;
}

HaystackSpec dataset_item_spec(const HaystackSpec& base, uint64_t seed, size_t index) {
    HaystackSpec spec = base;
    spec.seed = derive_seed(seed, index);
    spec.payload = Rng(derive_seed(seed ^ 0x5bd1e995ULL, index)).below(base.payload_count);
    return spec;
}

std::vector<TrainingSample> planted_dataset(size_t count, const HaystackSpec& base, uint64_t seed,
                                            const TeacherSpec& teacher) {
    std::vector<TrainingSample> samples(count);
    std::vector<std::exception_ptr> failures(count);
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < count; ++i) {
        try {
            samples[i] = make_training_sample(build_haystack(dataset_item_spec(base, seed, i)), teacher);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    }
    for (const auto& failure : failures) {
        if (failure) {
            std::rethrow_exception(failure);
        }
    }
    return samples;
}

SelectedTokens run_lite(const TokenSequence& seq, const PartitionSpec& partition, const SelectionConfig& selection,
                        const Selector& selector) {
    return run_training_free(seq, partition, selection, SelectorScorer(selector));
}

std::vector<double> SelectorScorer::score(const TokenSequence& tokens) const {
    return m_selector.scores(tokens);
}

size_t SelectorScorer::context_limit() const {
    return m_selector.config().context_limit;
}

}  // namespace flexsel
