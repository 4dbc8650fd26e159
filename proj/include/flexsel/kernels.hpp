// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

#include "flexsel/tensor.hpp"

namespace flexsel::kernels {

// Row mask for attention: entry (i, j) nonzero when position i may attend to j.
struct AttentionMask {
    enum class Kind {
        none,     // every position attends every position
        causal,   // j <= i
        prefix,   // j < prefix_len (bidirectional prefix) or j <= i
    };
    Kind kind = Kind::none;
    size_t prefix_len = 0;

    bool allows(size_t i, size_t j) const noexcept {
        switch (kind) {
        case Kind::none:
            return true;
        case Kind::causal:
            return j <= i;
        case Kind::prefix:
            return j < prefix_len || j <= i;
        }
        return true;
    }
};

// OpenMP-parallel kernels. Each output element is produced by the same sequence
// of floating point operations as the serial reference, so results agree bitwise.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
Tensor softmax_rows(const Tensor& x, const AttentionMask& mask = {});

namespace serial {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x, const AttentionMask& mask = {});
}  // namespace serial

/// Global multiply-accumulate counter fed by every matmul kernel. Used to
/// cross-check the analytical cost model against what the code executes.
uint64_t mac_count() noexcept;
void reset_mac_count() noexcept;

/// The part of mac_count() issued on this thread while an AttentionScope is
/// alive: the query-key score and probability-value products.
uint64_t attention_mac_count() noexcept;

class AttentionScope {
public:
    AttentionScope() noexcept;
    ~AttentionScope();
    AttentionScope(const AttentionScope&) = delete;
    AttentionScope& operator=(const AttentionScope&) = delete;

private:
    bool m_previous;
};

}  // namespace flexsel::kernels
