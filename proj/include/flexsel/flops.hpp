// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "json.hpp"

namespace flexsel {

using Flops = unsigned __int128;

/// Sizes entering the prefill cost model. Costs count multiply-accumulates
/// of the dominant matrix products, as in the usual 4nd² + 2n²d + 2ndm form.
struct FlopsQuery {
    uint64_t layers = 28;           // L
    uint64_t reference_layer = 19;  // M_ref, 1-based layer count run in stage 1
    uint64_t heads = 28;            // h; cancels in the formulas
    uint64_t hidden = 3584;         // d
    uint64_t ffn = 18944;           // m
    uint64_t tokens = 0;            // n
    uint64_t selected = 0;          // n'
    uint64_t sets = 8;              // K
    uint64_t selector_layers = 2;   // L'
    uint64_t selector_hidden = 32;  // d'
    uint64_t selector_ffn = 64;     // m'

    /// Throws InvalidArgument unless 1 <= M_ref <= L, n' <= n and K >= 1.
    void validate() const;
};

/// L (4nd² + 2n²d + 2ndm)
Flops flops_full(const FlopsQuery& q);

/// M_ref (4nd² + 2n²d/K + 2ndm), the partitioned scoring pass
Flops flexselect_stage1(const FlopsQuery& q);
/// L (4n'd² + 2n'²d + 2n'dm), the decoder over the selected tokens
Flops decode_stage(const FlopsQuery& q);
Flops flops_flexselect(const FlopsQuery& q);

/// 2 L' n² d' / K, the selector's dominant attention term
Flops lite_stage1(const FlopsQuery& q);
/// L' (4nd'² + 2n²d'/K + 2nd'm'), every selector block term
Flops lite_stage1_full_terms(const FlopsQuery& q);
Flops flops_lite(const FlopsQuery& q);

struct FlopsReport {
    Flops full = 0;
    Flops flexselect = 0;
    Flops lite = 0;
    Flops flexselect_stage1 = 0;
    Flops lite_stage1 = 0;
    Flops lite_stage1_full_terms = 0;
    Flops decode_stage = 0;
    double ratio_exact = 0.0;   // flexselect / full
    double ratio_approx = 0.0;  // (M_ref / L) (1 / K)
};

FlopsReport flops_report(const FlopsQuery& q);

/// Decimal rendering; integers beyond 64 bits are emitted as strings.
nlohmann::json flops_json(const FlopsQuery& q, const FlopsReport& report);
std::string to_decimal(Flops value);

}  // namespace flexsel
