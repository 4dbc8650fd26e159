// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "flexsel/errors.hpp"
#include "flexsel/grad_check.hpp"
#include "flexsel/kernels.hpp"
#include "flexsel/planted.hpp"
#include "flexsel/probe.hpp"
#include "flexsel/reference_model.hpp"

using namespace flexsel;

namespace {

ModelConfig tiny_config(size_t layers = 2, size_t heads = 2) {
    ModelConfig c;
    c.layers = layers;
    c.heads = heads;
    c.hidden = 8;
    c.ffn = 16;
    c.visual_dim = 8;
    c.vocab = 7;
    c.classes = 5;
    c.max_positions = 64;
    c.seed = 3;
    return c;
}

Haystack small_haystack(uint64_t seed, size_t frames = 8, size_t per_frame = 2, size_t dim = 8) {
    HaystackSpec spec;
    spec.frames = frames;
    spec.tokens_per_frame = per_frame;
    spec.visual_dim = dim;
    spec.payload = seed % 5;
    spec.seed = seed;
    return build_haystack(spec);
}

}  // namespace

TEST_CASE("reference model attention rows are normalized") {
    const ReferenceModel model = ReferenceModel::init(tiny_config(1, 1));
    const Haystack h = small_haystack(1);
    const ForwardResult out = model.forward_with_attention(h.sequence);
    CHECK(out.record.layers() == 1);
    CHECK(out.record.heads() == 1);
    CHECK(out.record.max_row_sum_error() <= 1e-6);
    CHECK(out.logits.shape() == Shape{1, 5});
}

TEST_CASE("reference model is deterministic and causal") {
    const ReferenceModel a = ReferenceModel::init(tiny_config(3, 2));
    const ReferenceModel b = ReferenceModel::init(tiny_config(3, 2));
    Haystack h = small_haystack(2);
    const ForwardResult ra = a.forward_with_attention(h.sequence);
    const ForwardResult rb = b.forward_with_attention(h.sequence);
    CHECK(ra.record == rb.record);
    CHECK(ra.hidden == rb.hidden);

    // perturbing the last visual token leaves every earlier hidden state unchanged
    TokenSequence changed = h.sequence;
    const size_t last = changed.visual_count() - 1;
    changed.visual(last, 0) += 5.0;
    const ForwardResult rc = a.forward_with_attention(changed);
    for (size_t r = 0; r < last; ++r) {
        for (size_t c = 0; c < ra.hidden.cols(); ++c) {
            CHECK(rc.hidden(r, c) == ra.hidden(r, c));
        }
    }
    CHECK(rc.hidden(last, 0) != ra.hidden(last, 0));
}

TEST_CASE("partial forward runs a prefix of the layers") {
    const ReferenceModel model = ReferenceModel::init(tiny_config(4, 2));
    const Haystack h = small_haystack(3);
    const ForwardResult full = model.forward_with_attention(h.sequence);
    const ForwardResult part = model.forward_with_attention(h.sequence, 2);
    CHECK(part.record.layers() == 2);
    CHECK(part.logits.empty());
    for (size_t l = 0; l < 2; ++l) {
        for (size_t head = 0; head < 2; ++head) {
            CHECK(part.record.rows(l, head) == full.record.rows(l, head));
        }
    }
}

TEST_CASE("block multiply-accumulates follow the dense cost formula") {
    ModelConfig c = tiny_config(3, 2);
    c.max_positions = 128;
    const ReferenceModel model = ReferenceModel::init(c);
    const Haystack h = small_haystack(4, 16, 4);
    const uint64_t n = h.sequence.length();
    const uint64_t d = c.hidden;
    const uint64_t m = c.ffn;
    kernels::reset_mac_count();
    const ForwardResult out = model.forward_with_attention(h.sequence);
    CHECK(out.block_macs == c.layers * (4 * n * d * d + 2 * n * n * d + 2 * n * d * m));
    CHECK(kernels::attention_mac_count() == c.layers * 2 * n * n * d);
    CHECK(kernels::mac_count() > out.block_macs);
    kernels::reset_mac_count();
    CHECK(kernels::attention_mac_count() == 0);
}

TEST_CASE("reference model rejects bad inputs") {
    ModelConfig c = tiny_config();
    c.max_positions = 10;
    const ReferenceModel model = ReferenceModel::init(c);
    CHECK_THROWS_AS(model.forward_with_attention(small_haystack(5).sequence), CapacityError);
    CHECK_THROWS_AS(ReferenceModel::init(tiny_config()).forward_with_attention(small_haystack(5, 8, 2, 6).sequence),
                    ConfigError);
    ModelConfig odd = tiny_config();
    odd.heads = 3;
    CHECK_THROWS_AS(ReferenceModel::init(odd), ConfigError);
    NamedTensors weights = ReferenceModel::init(tiny_config()).weights();
    weights.erase("block0.attn.wq");
    CHECK_THROWS_AS(ReferenceModel(tiny_config(), weights), ConfigError);
}

TEST_CASE("classification loss gradient matches finite differences") {
    const ReferenceModel model = ReferenceModel::init(tiny_config(2, 2));
    const Haystack h = small_haystack(6, 4, 2);
    NamedTensors grads;
    model.classification_loss(h.sequence, 2, &grads);
    for (const std::string name : {"block0.attn.wq", "block1.ffn.w1", "block0.ln1.gain", "embed.visual",
                                   "embed.position", "head.classifier", "final.ln.bias"}) {
        auto f = [&](const Tensor& x) {
            ReferenceModel copy = model;
            copy.weights()[name] = x;
            return copy.classification_loss(h.sequence, 2, nullptr);
        };
        CHECK_MESSAGE(finite_diff_check(f, model.weights().at(name), grads.at(name), 1e-5, 3) < 1e-6, name);
    }
}

TEST_CASE("planted oracle degenerate profiles") {
    const Haystack h = small_haystack(7, 10, 3);
    const size_t m = h.sequence.visual_count();
    PlantedSpec spec;
    spec.layers = 3;
    spec.heads = 2;
    spec.relevant = h.relevant;
    spec.peak_layer = 1;
    spec.noise = 0.0;
    const double uniform = static_cast<double>(h.relevant.size()) / static_cast<double>(m);
    spec.concentration = {uniform, 1.0, uniform};
    const AttentionRecord record = planted_forward(spec, h.sequence);
    CHECK(record.max_row_sum_error() < 1e-12);
    const auto peak = relevance_scores(record, 1);
    const auto flat = relevance_scores(record, 0);
    for (size_t i = 0; i < m; ++i) {
        const bool relevant = std::binary_search(h.relevant.begin(), h.relevant.end(), i);
        CHECK(peak[i] == doctest::Approx(relevant ? 1.0 / h.relevant.size() : 0.0));
        CHECK(flat[i] == doctest::Approx(1.0 / m));
    }
    // query positions get no mass
    for (size_t r = 0; r < record.query_count(); ++r) {
        for (size_t j = m; j < m + record.query_count(); ++j) {
            CHECK(record.rows(1, 0)(r, j) == 0.0);
        }
    }
}

TEST_CASE("planted relevance at the peak splits the concentration") {
    HaystackSpec hs;
    hs.frames = 12;
    hs.tokens_per_frame = 3;
    hs.visual_dim = 8;
    hs.seed = 9;
    const Haystack h = build_haystack(hs);
    REQUIRE(h.relevant.size() == 3);
    const PlantedSpec spec = PlantedSpec::tent(8, 4, h.relevant, 36, 5, 0.9, 0.0, 1);
    const auto r = relevance_scores(planted_forward(spec, h.sequence), 5);
    double others = 0.0;
    for (size_t i = 0; i < r.size(); ++i) {
        if (std::binary_search(h.relevant.begin(), h.relevant.end(), i)) {
            CHECK(r[i] == doctest::Approx(0.3));
        } else {
            others += r[i];
        }
    }
    CHECK(others == doctest::Approx(0.1));
}

TEST_CASE("tent profile peaks where requested") {
    for (double noise : {0.0, 0.05}) {
        const Haystack h = small_haystack(11, 32, 4, 16);
        const PlantedSpec spec = PlantedSpec::tent(8, 4, h.relevant, 128, 5, 0.9, noise, 2);
        spec.validate();
        const ProbeResult probe = profile_layers(planted_forward(spec, h.sequence), h.relevant, h.relevant.size());
        CHECK(probe.reference_layer == 5);
        CHECK(probe.recall[5] == 1.0);
    }
}

TEST_CASE("planted noise is keyed to token content") {
    Haystack h = small_haystack(12, 8, 2);
    PlantedSpec spec = PlantedSpec::tent(2, 2, h.relevant, 16, 1, 0.9, 0.5, 4);
    // duplicate the first token's features into the third slot
    TokenSequence seq = h.sequence;
    std::copy(seq.visual.row(0).begin(), seq.visual.row(0).end(), seq.visual.row(2).begin());
    const bool both_background = !std::binary_search(h.relevant.begin(), h.relevant.end(), size_t{0}) &&
                                 !std::binary_search(h.relevant.begin(), h.relevant.end(), size_t{2});
    if (both_background) {
        const auto r = relevance_scores(planted_forward(spec, seq), 0);
        CHECK(r[0] == r[2]);
    }
}

TEST_CASE("planted oracle error paths") {
    const Haystack h = small_haystack(13);
    PlantedSpec spec = PlantedSpec::tent(4, 1, {999}, 16, 2);
    CHECK_THROWS_AS(planted_forward(spec, h.sequence), IndexError);
    CHECK(restrict_to(spec, h.sequence).relevant.empty());
    PlantedSpec bad = PlantedSpec::tent(4, 1, h.relevant, 16, 2);
    bad.concentration[0] = 0.95;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = PlantedSpec::tent(4, 1, h.relevant, 16, 7);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = PlantedSpec::tent(4, 1, {}, 16, 2);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("relevance scores average heads and query rows") {
    AttentionRecord single(1, 1, 3, 1);
    single.rows(0, 0) = Tensor::from_rows({{0.2, 0.5, 0.1, 0.2}});
    CHECK(relevance_scores(single, 0) == std::vector<double>{0.2, 0.5, 0.1});

    AttentionRecord two(1, 2, 2, 1);
    two.rows(0, 0) = Tensor::from_rows({{0.2, 0.3, 0.5}});
    two.rows(0, 1) = Tensor::from_rows({{0.4, 0.1, 0.5}});
    const auto r = relevance_scores(two, 0);
    CHECK(r[0] == doctest::Approx(0.3));
    CHECK(r[1] == doctest::Approx(0.2));
    CHECK_THROWS_AS(relevance_scores(two, 1), IndexError);
}

TEST_CASE("adamw step and schedule") {
    NamedTensors params{{"w", Tensor::from_rows({{1.0, -2.0}})}, {"g", Tensor::vector({0.5})}};
    const NamedTensors grads{{"w", Tensor::from_rows({{0.1, -0.3}})}, {"g", Tensor::vector({2.0})}};
    AdamWMoments moments;
    AdamWOptions options;
    adamw_step(params, grads, moments, 0.01, options);
    // first step: bias-corrected update is lr * sign(g) plus decoupled decay on the matrix only
    CHECK(params.at("w")[0] == doctest::Approx(1.0 - 0.01 * 0.01 * 1.0 - 0.01 * 0.1 / (0.1 + 1e-8)));
    CHECK(params.at("w")[1] == doctest::Approx(-2.0 + 0.01 * 0.01 * 2.0 + 0.01 * 0.3 / (0.3 + 1e-8)));
    CHECK(params.at("g")[0] == doctest::Approx(0.5 - 0.01 * 2.0 / (2.0 + 1e-8)));
    CHECK(moments.steps == 1);

    NamedTensors frozen = params;
    AdamWMoments m2;
    adamw_step(frozen, grads, m2, 0.0, options);
    CHECK(frozen == params);

    CHECK(scheduled_lr(1.0, 0, 100, 10) == doctest::Approx(0.1));
    CHECK(scheduled_lr(1.0, 9, 100, 10) == doctest::Approx(1.0));
    CHECK(scheduled_lr(1.0, 10, 100, 10) == doctest::Approx(1.0));
    CHECK(scheduled_lr(1.0, 100, 100, 10) == doctest::Approx(0.1));
}

TEST_CASE("trained reference model concentrates attention on needles") {
    ModelConfig c;
    c.layers = 4;
    c.heads = 2;
    c.hidden = 32;
    c.ffn = 64;
    c.visual_dim = 16;
    c.vocab = 7;
    c.classes = 5;
    c.max_positions = 64;
    c.seed = 1;
    ReferenceModel model = ReferenceModel::init(c);

    auto make = [&](uint64_t seed) {
        HaystackSpec spec;
        spec.frames = 16;
        spec.tokens_per_frame = 2;
        spec.visual_dim = 16;
        spec.generic_query = true;
        spec.payload = seed % 5;
        spec.seed = seed;
        return build_haystack(spec);
    };
    std::vector<LabelledSequence> data;
    for (uint64_t s = 0; s < 400; ++s) {
        const Haystack h = make(s);
        data.push_back({h.sequence, h.payload});
    }
    ClassifierTrainOptions options;
    options.steps = 600;
    options.batch_size = 8;
    options.lr = 3e-3;
    const auto losses = train_classifier(model, data, options);
    MESSAGE("classifier loss " << losses.front() << " -> " << losses.back());

    std::vector<double> mass(c.layers, 0.0);
    const size_t held_out = 50;
    double uniform = 0.0;
    for (uint64_t s = 10000; s < 10000 + held_out; ++s) {
        const Haystack h = make(s);
        const ForwardResult out = model.forward_with_attention(h.sequence);
        const size_t last = h.sequence.query_count() - 1;
        for (size_t l = 0; l < c.layers; ++l) {
            for (size_t head = 0; head < c.heads; ++head) {
                for (size_t g : h.relevant) {
                    mass[l] += out.record.rows(l, head)(last, g) / c.heads;
                }
            }
        }
        uniform += static_cast<double>(h.relevant.size()) / h.sequence.visual_count();
    }
    uniform /= held_out;
    double best = 0.0;
    for (size_t l = 0; l < c.layers; ++l) {
        mass[l] /= held_out;
        MESSAGE("layer " << l << " needle mass " << mass[l]);
        best = std::max(best, mass[l]);
    }
    CHECK(best > 2.0 * uniform);
}
