// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/decoder.hpp"

#include <cmath>

#include "flexsel/errors.hpp"

namespace flexsel {

namespace {

std::string block_key(size_t layer, const char* name) {
    return "block" + std::to_string(layer) + "." + name;
}

Tensor random_matrix(size_t rows, size_t cols, Rng& rng) {
    Tensor t = Tensor::matrix(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : t.data()) {
        v = scale * rng.normal();
    }
    return t;
}

std::map<std::string, Shape> expected_shapes(const DecoderShape& s) {
    std::map<std::string, Shape> shapes;
    shapes["embed.visual"] = {s.visual_dim, s.hidden};
    shapes["embed.query"] = {s.vocab, s.hidden};
    if (s.max_positions > 0) {
        shapes["embed.position"] = {s.max_positions, s.hidden};
    }
    if (s.max_query > 0) {
        shapes["embed.query_position"] = {s.max_query, s.hidden};
    }
    for (size_t l = 0; l < s.layers; ++l) {
        shapes[block_key(l, "ln1.gain")] = {s.hidden};
        shapes[block_key(l, "ln1.bias")] = {s.hidden};
        shapes[block_key(l, "attn.wq")] = {s.hidden, s.hidden};
        shapes[block_key(l, "attn.wk")] = {s.hidden, s.hidden};
        shapes[block_key(l, "attn.wv")] = {s.hidden, s.hidden};
        shapes[block_key(l, "attn.wo")] = {s.hidden, s.hidden};
        shapes[block_key(l, "ln2.gain")] = {s.hidden};
        shapes[block_key(l, "ln2.bias")] = {s.hidden};
        shapes[block_key(l, "ffn.w1")] = {s.hidden, s.ffn};
        shapes[block_key(l, "ffn.w2")] = {s.ffn, s.hidden};
    }
    shapes["final.ln.gain"] = {s.hidden};
    shapes["final.ln.bias"] = {s.hidden};
    return shapes;
}

}  // namespace

NamedTensors init_decoder(const DecoderShape& shape, Rng& rng) {
    NamedTensors weights;
    for (const auto& [name, dims] : expected_shapes(shape)) {
        if (dims.size() == 1) {
            const bool gain = name.ends_with(".gain");
            weights[name] = Tensor(dims, gain ? 1.0 : 0.0);
        } else if (name.starts_with("embed.")) {
            Tensor t(dims);
            const double scale = name == "embed.visual" ? 1.0 / std::sqrt(static_cast<double>(dims[0])) : 0.5;
            for (double& v : t.data()) {
                v = scale * rng.normal();
            }
            weights[name] = std::move(t);
        } else {
            weights[name] = random_matrix(dims[0], dims[1], rng);
        }
    }
    return weights;
}

void check_decoder_weights(const DecoderShape& shape, const NamedTensors& weights) {
    if (shape.hidden % shape.heads != 0) {
        throw ConfigError("hidden size " + std::to_string(shape.hidden) + " not divisible by " +
                          std::to_string(shape.heads) + " heads");
    }
    for (const auto& [name, dims] : expected_shapes(shape)) {
        auto it = weights.find(name);
        if (it == weights.end()) {
            throw ConfigError("missing parameter " + name);
        }
        if (it->second.shape() != dims) {
            throw ConfigError("parameter " + name + " has shape " + shape_to_string(it->second.shape()) +
                              ", expected " + shape_to_string(dims));
        }
    }
}

NamedVars bind_leaves(ad::Tape& tape, const NamedTensors& weights) {
    NamedVars vars;
    for (const auto& [name, t] : weights) {
        vars.emplace(name, tape.leaf(t));
    }
    return vars;
}

NamedVars bind_constants(ad::Tape& tape, const NamedTensors& weights) {
    NamedVars vars;
    for (const auto& [name, t] : weights) {
        vars.emplace(name, tape.constant(t));
    }
    return vars;
}

DecoderPass decoder_forward(ad::Tape& tape, const DecoderShape& shape, const NamedVars& params,
                            const TokenSequence& seq, size_t layers_to_run) {
    using namespace ad;
    const size_t m = seq.visual_count();
    const size_t q = seq.query_count();
    const size_t n = m + q;
    const size_t d = shape.hidden;
    const size_t dh = d / shape.heads;
    if (seq.visual_dim() != shape.visual_dim) {
        throw ConfigError("visual feature size " + std::to_string(seq.visual_dim()) + " does not match configured " +
                          std::to_string(shape.visual_dim));
    }
    if (shape.max_positions > 0 && n > shape.max_positions) {
        throw CapacityError("sequence of " + std::to_string(n) + " tokens exceeds the context limit of " +
                            std::to_string(shape.max_positions));
    }
    if (shape.max_query > 0 && q > shape.max_query) {
        throw CapacityError("query of " + std::to_string(q) + " tokens exceeds the limit of " +
                            std::to_string(shape.max_query));
    }
    const size_t depth = layers_to_run == 0 ? shape.layers : std::min(layers_to_run, shape.layers);
    auto p = [&](const std::string& key) -> Var {
        auto it = params.find(key);
        if (it == params.end()) {
            throw ConfigError("missing parameter " + key);
        }
        return it->second;
    };

    Var visual = matmul(tape.constant(seq.visual), p("embed.visual"));
    Var text = gather_rows(p("embed.query"), seq.query);
    if (shape.max_query > 0) {
        std::vector<size_t> slots(q);
        for (size_t i = 0; i < q; ++i) {
            slots[i] = i;
        }
        text = add(text, gather_rows(p("embed.query_position"), slots));
    }
    Var x = concat_rows({visual, text});
    if (shape.max_positions > 0) {
        std::vector<size_t> slots(n);
        for (size_t i = 0; i < n; ++i) {
            slots[i] = i;
        }
        x = add(x, gather_rows(p("embed.position"), slots));
    }

    const kernels::AttentionMask mask{shape.mask, m};
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    DecoderPass pass;
    pass.attention.resize(depth);
    const uint64_t macs_before = kernels::mac_count();
    for (size_t l = 0; l < depth; ++l) {
        Var h = layer_norm(x, p(block_key(l, "ln1.gain")), p(block_key(l, "ln1.bias")));
        Var qs = matmul(h, p(block_key(l, "attn.wq")));
        Var ks = matmul(h, p(block_key(l, "attn.wk")));
        Var vs = matmul(h, p(block_key(l, "attn.wv")));
        std::vector<Var> heads;
        for (size_t hd = 0; hd < shape.heads; ++hd) {
            Var qh = slice(qs, 0, n, hd * dh, dh);
            Var kh = slice(ks, 0, n, hd * dh, dh);
            Var vh = slice(vs, 0, n, hd * dh, dh);
            const kernels::AttentionScope scope;
            Var probs = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), mask);
            pass.attention[l].push_back(probs);
            heads.push_back(matmul(probs, vh));
        }
        Var attn = heads.size() == 1 ? heads.front() : concat_cols(heads);
        x = add(x, matmul(attn, p(block_key(l, "attn.wo"))));
        Var h2 = layer_norm(x, p(block_key(l, "ln2.gain")), p(block_key(l, "ln2.bias")));
        Var ff = matmul(gelu(matmul(h2, p(block_key(l, "ffn.w1")))), p(block_key(l, "ffn.w2")));
        x = add(x, ff);
    }
    pass.block_macs = kernels::mac_count() - macs_before;
    pass.hidden = depth == shape.layers ? layer_norm(x, p("final.ln.gain"), p("final.ln.bias")) : x;
    return pass;
}

}  // namespace flexsel
