// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "flexsel/kernels.hpp"
#include "flexsel/tensor.hpp"

namespace flexsel::ad {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    size_t id = 0;

    const Tensor& value() const;
    const Tensor& grad() const;
};

// Receives the upstream gradient of a node and accumulates into its parents.
using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

/// Reverse-mode gradient tape. Confined to one thread; concurrent training
/// uses one tape per sample.
class Tape {
public:
    explicit Tape(bool record = true) : m_record(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);      // trainable input, receives a gradient
    Var constant(Tensor value);  // never receives a gradient

    bool recording() const noexcept { return m_record; }
    bool requires_grad(Var v) const { return m_nodes[v.id].requires_grad; }
    const Tensor& value(size_t id) const { return m_nodes[id].value; }
    const Tensor& grad(size_t id) const;
    void accumulate(Var target, const Tensor& delta);

    Var push(Tensor value, std::initializer_list<Var> parents, Backward backward);
    Var push(Tensor value, const std::vector<Var>& parents, Backward backward);

    /// Seeds d(out)/d(out) = 1 for a single-element output and runs the tape in reverse.
    void backward(Var out);
    void zero_grad();
    size_t size() const noexcept { return m_nodes.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward backward;
        bool requires_grad = false;
    };
    std::deque<Node> m_nodes;
    bool m_record;
};

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var x, Var row);  // broadcast a 1 x n (or rank-1 n) row over every row of x
Var softmax_rows(Var x, const kernels::AttentionMask& mask = {});
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var x);
Var slice(Var x, size_t row0, size_t nrows, size_t col0, size_t ncols);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(Var table, const std::vector<size_t>& ids);
Var mean_rows(Var x);  // 1 x cols
Var sum(Var x);
Var sum_squares(Var x);
Var cross_entropy(Var logits, size_t target);  // logits: 1 x C

// Wraps an externally differentiated function: `value` is f(x), `vjp` maps
// dL/df to dL/dx.
Var custom(Var x, Tensor value, std::function<Tensor(const Tensor& grad_out)> vjp);

}  // namespace flexsel::ad
