// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/flops.hpp"

#include <algorithm>
#include <limits>

#include "flexsel/errors.hpp"

namespace flexsel {

namespace {

// 4nd² + 2n²d/K + 2ndm for one block.
Flops block_cost(Flops n, Flops d, Flops m, Flops k) {
    return 4 * n * d * d + 2 * n * n * d / k + 2 * n * d * m;
}

double to_double(Flops v) {
    return static_cast<double>(v);
}

}  // namespace

void FlopsQuery::validate() const {
    if (layers == 0) {
        throw InvalidArgument("layer count must be at least 1");
    }
    if (reference_layer < 1 || reference_layer > layers) {
        throw InvalidArgument("reference layer " + std::to_string(reference_layer) + " outside [1, " +
                              std::to_string(layers) + "]");
    }
    if (selected > tokens) {
        throw InvalidArgument("selected tokens " + std::to_string(selected) + " exceed " + std::to_string(tokens) +
                              " input tokens");
    }
    if (sets == 0) {
        throw InvalidArgument("frame set count must be at least 1");
    }
    if (selector_layers == 0) {
        throw InvalidArgument("selector layer count must be at least 1");
    }
}

Flops flops_full(const FlopsQuery& q) {
    return Flops(q.layers) * block_cost(q.tokens, q.hidden, q.ffn, 1);
}

Flops flexselect_stage1(const FlopsQuery& q) {
    q.validate();
    return Flops(q.reference_layer) * block_cost(q.tokens, q.hidden, q.ffn, q.sets);
}

Flops decode_stage(const FlopsQuery& q) {
    q.validate();
    return Flops(q.layers) * block_cost(q.selected, q.hidden, q.ffn, 1);
}

Flops flops_flexselect(const FlopsQuery& q) {
    return flexselect_stage1(q) + decode_stage(q);
}

Flops lite_stage1(const FlopsQuery& q) {
    q.validate();
    const Flops n = q.tokens;
    return 2 * Flops(q.selector_layers) * n * n * Flops(q.selector_hidden) / Flops(q.sets);
}

Flops lite_stage1_full_terms(const FlopsQuery& q) {
    q.validate();
    return Flops(q.selector_layers) * block_cost(q.tokens, q.selector_hidden, q.selector_ffn, q.sets);
}

Flops flops_lite(const FlopsQuery& q) {
    return lite_stage1(q) + decode_stage(q);
}

FlopsReport flops_report(const FlopsQuery& q) {
    q.validate();
    FlopsReport r;
    r.full = flops_full(q);
    r.flexselect_stage1 = flexselect_stage1(q);
    r.decode_stage = decode_stage(q);
    r.flexselect = r.flexselect_stage1 + r.decode_stage;
    r.lite_stage1 = lite_stage1(q);
    r.lite_stage1_full_terms = lite_stage1_full_terms(q);
    r.lite = r.lite_stage1 + r.decode_stage;
    r.ratio_exact = r.full == 0 ? 0.0 : to_double(r.flexselect) / to_double(r.full);
    r.ratio_approx = static_cast<double>(q.reference_layer) / static_cast<double>(q.layers) /
                     static_cast<double>(q.sets);
    return r;
}

std::string to_decimal(Flops value) {
    if (value == 0) {
        return "0";
    }
    std::string out;
    while (value > 0) {
        out.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
        value /= 10;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

namespace {

nlohmann::json flops_value(Flops v) {
    if (v <= std::numeric_limits<uint64_t>::max()) {
        return static_cast<uint64_t>(v);
    }
    return to_decimal(v);
}

}  // namespace

nlohmann::json flops_json(const FlopsQuery& q, const FlopsReport& r) {
    return nlohmann::json{
        {"query",
         {{"layers", q.layers},
          {"reference_layer", q.reference_layer},
          {"heads", q.heads},
          {"hidden", q.hidden},
          {"ffn", q.ffn},
          {"tokens", q.tokens},
          {"selected", q.selected},
          {"sets", q.sets},
          {"selector_layers", q.selector_layers},
          {"selector_hidden", q.selector_hidden},
          {"selector_ffn", q.selector_ffn}}},
        {"flops_full", flops_value(r.full)},
        {"flops_flexselect", flops_value(r.flexselect)},
        {"flops_lite", flops_value(r.lite)},
        {"flexselect_stage1", flops_value(r.flexselect_stage1)},
        {"lite_stage1", flops_value(r.lite_stage1)},
        {"lite_stage1_full_terms", flops_value(r.lite_stage1_full_terms)},
        {"decode_stage", flops_value(r.decode_stage)},
        {"ratio_exact", r.ratio_exact},
        {"ratio_approx", r.ratio_approx},
    };
}

}  // namespace flexsel
