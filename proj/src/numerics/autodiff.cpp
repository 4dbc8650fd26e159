// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "flexsel/errors.hpp"

namespace flexsel::ad {

const Tensor& Var::value() const {
    return tape->value(id);
}

const Tensor& Var::grad() const {
    return tape->grad(id);
}

Var Tape::leaf(Tensor value) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = true;
    m_nodes.push_back(std::move(node));
    return {this, m_nodes.size() - 1};
}

Var Tape::constant(Tensor value) {
    Node node;
    node.value = std::move(value);
    m_nodes.push_back(std::move(node));
    return {this, m_nodes.size() - 1};
}

const Tensor& Tape::grad(size_t id) const {
    return m_nodes[id].grad;
}

void Tape::accumulate(Var target, const Tensor& delta) {
    Node& node = m_nodes[target.id];
    if (!node.requires_grad) {
        return;
    }
    if (delta.size() != node.value.size()) {
        throw DimensionError("gradient " + shape_to_string(delta.shape()) + " does not match value " +
                             shape_to_string(node.value.shape()));
    }
    if (node.grad.empty()) {
        node.grad = Tensor(node.value.shape(), std::vector<double>(delta.values()));
        return;
    }
    auto g = node.grad.data();
    auto d = delta.data();
    for (size_t i = 0; i < g.size(); ++i) {
        g[i] += d[i];
    }
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, Backward backward) {
    return push(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::push(Tensor value, const std::vector<Var>& parents, Backward backward) {
    Node node;
    node.value = std::move(value);
    for (const Var& p : parents) {
        node.requires_grad = node.requires_grad || m_nodes[p.id].requires_grad;
    }
    if (m_record && node.requires_grad) {
        node.backward = std::move(backward);
    } else {
        node.requires_grad = false;
    }
    m_nodes.push_back(std::move(node));
    return {this, m_nodes.size() - 1};
}

void Tape::backward(Var out) {
    Node& root = m_nodes[out.id];
    if (root.value.size() != 1) {
        throw DimensionError("backward needs a single-element output, got " + shape_to_string(root.value.shape()));
    }
    if (!root.requires_grad) {
        return;
    }
    accumulate(out, Tensor(root.value.shape(), 1.0));
    for (size_t id = out.id + 1; id-- > 0;) {
        Node& node = m_nodes[id];
        if (node.backward && !node.grad.empty()) {
            // copy: the closure may append to ancestors but never to this node
            const Tensor grad_out = node.grad;
            node.backward(*this, grad_out);
        }
    }
}

void Tape::zero_grad() {
    for (Node& node : m_nodes) {
        node.grad = Tensor();
    }
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
}

Tensor elementwise(const Tensor& a, const Tensor& b, double sa, double sb) {
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) {
        out[i] = sa * a[i] + sb * b[i];
    }
    return out;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = *a.tape;
    return t.push(kernels::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& tape, const Tensor& g) {
        if (tape.requires_grad(a)) {
            tape.accumulate(a, kernels::matmul_nt(g, b.value()));
        }
        if (tape.requires_grad(b)) {
            tape.accumulate(b, kernels::matmul_tn(a.value(), g));
        }
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = *a.tape;
    return t.push(kernels::matmul_nt(a.value(), b.value()), {a, b}, [a, b](Tape& tape, const Tensor& g) {
        if (tape.requires_grad(a)) {
            tape.accumulate(a, kernels::matmul(g, b.value()));
        }
        if (tape.requires_grad(b)) {
            tape.accumulate(b, kernels::matmul_tn(g, a.value()));
        }
    });
}

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    return a.tape->push(elementwise(a.value(), b.value(), 1.0, 1.0), {a, b}, [a, b](Tape& tape, const Tensor& g) {
        tape.accumulate(a, g);
        tape.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    return a.tape->push(elementwise(a.value(), b.value(), 1.0, -1.0), {a, b}, [a, b](Tape& tape, const Tensor& g) {
        tape.accumulate(a, g);
        Tensor neg(g.shape());
        for (size_t i = 0; i < g.size(); ++i) {
            neg[i] = -g[i];
        }
        tape.accumulate(b, neg);
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out(a.value().shape());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = a.value()[i] * b.value()[i];
    }
    return a.tape->push(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
        Tensor ga(g.shape()), gb(g.shape());
        for (size_t i = 0; i < g.size(); ++i) {
            ga[i] = g[i] * b.value()[i];
            gb[i] = g[i] * a.value()[i];
        }
        tape.accumulate(a, ga);
        tape.accumulate(b, gb);
    });
}

Var scale(Var a, double s) {
    Tensor out(a.value().shape());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = s * a.value()[i];
    }
    return a.tape->push(std::move(out), {a}, [a, s](Tape& tape, const Tensor& g) {
        Tensor ga(g.shape());
        for (size_t i = 0; i < g.size(); ++i) {
            ga[i] = s * g[i];
        }
        tape.accumulate(a, ga);
    });
}

Var add_row(Var x, Var row) {
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    if (rv.size() != xv.cols()) {
        throw DimensionError("add_row: row " + shape_to_string(rv.shape()) + " vs matrix " +
                             shape_to_string(xv.shape()));
    }
    Tensor out = xv;
    for (size_t i = 0; i < xv.rows(); ++i) {
        for (size_t j = 0; j < xv.cols(); ++j) {
            out(i, j) += rv[j];
        }
    }
    return x.tape->push(std::move(out), {x, row}, [x, row](Tape& tape, const Tensor& g) {
        tape.accumulate(x, g);
        if (tape.requires_grad(row)) {
            Tensor gr(row.value().shape());
            for (size_t i = 0; i < g.rows(); ++i) {
                for (size_t j = 0; j < g.cols(); ++j) {
                    gr[j] += g(i, j);
                }
            }
            tape.accumulate(row, gr);
        }
    });
}

Var softmax_rows(Var x, const kernels::AttentionMask& mask) {
    Tensor y = kernels::softmax_rows(x.value(), mask);
    Tensor saved = x.tape->recording() ? y : Tensor();
    return x.tape->push(std::move(y), {x}, [x, y = std::move(saved)](Tape& tape, const Tensor& g) {
        Tensor gx(y.shape());
        for (size_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (size_t j = 0; j < y.cols(); ++j) {
                dot += y(i, j) * g(i, j);
            }
            for (size_t j = 0; j < y.cols(); ++j) {
                gx(i, j) = y(i, j) * (g(i, j) - dot);
            }
        }
        tape.accumulate(x, gx);
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = x.value();
    const size_t n = xv.rows();
    const size_t d = xv.cols();
    if (gain.value().size() != d || bias.value().size() != d) {
        throw DimensionError("layer_norm: gain/bias size does not match last axis " + std::to_string(d));
    }
    Tensor xhat = Tensor::matrix(n, d);
    std::vector<double> inv_std(n);
    Tensor out = Tensor::matrix(n, d);
    for (size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (size_t j = 0; j < d; ++j) {
            mean += xv(i, j);
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) {
            const double c = xv(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (size_t j = 0; j < d; ++j) {
            xhat(i, j) = (xv(i, j) - mean) * inv_std[i];
            out(i, j) = gain.value()[j] * xhat(i, j) + bias.value()[j];
        }
    }
    return x.tape->push(std::move(out), {x, gain, bias},
                        [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tape,
                                                                                            const Tensor& g) {
                            const size_t n = xhat.rows();
                            const size_t d = xhat.cols();
                            Tensor gg(gain.value().shape()), gb(bias.value().shape()), gx = Tensor::matrix(n, d);
                            std::vector<double> dxhat(d);
                            for (size_t i = 0; i < n; ++i) {
                                double mean_dx = 0.0;
                                double mean_dx_xhat = 0.0;
                                for (size_t j = 0; j < d; ++j) {
                                    gg[j] += g(i, j) * xhat(i, j);
                                    gb[j] += g(i, j);
                                    dxhat[j] = g(i, j) * gain.value()[j];
                                    mean_dx += dxhat[j];
                                    mean_dx_xhat += dxhat[j] * xhat(i, j);
                                }
                                mean_dx /= static_cast<double>(d);
                                mean_dx_xhat /= static_cast<double>(d);
                                for (size_t j = 0; j < d; ++j) {
                                    gx(i, j) = inv_std[i] * (dxhat[j] - mean_dx - xhat(i, j) * mean_dx_xhat);
                                }
                            }
                            tape.accumulate(x, gx);
                            tape.accumulate(gain, gg);
                            tape.accumulate(bias, gb);
                        });
}

Var gelu(Var x) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    return x.tape->push(std::move(out), {x}, [x](Tape& tape, const Tensor& g) {
        const Tensor& xv = x.value();
        Tensor gx(xv.shape());
        for (size_t i = 0; i < xv.size(); ++i) {
            const double v = xv[i];
            const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
            const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            gx[i] = g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
        }
        tape.accumulate(x, gx);
    });
}

Var slice(Var x, size_t row0, size_t nrows, size_t col0, size_t ncols) {
    const Tensor& xv = x.value();
    if (row0 + nrows > xv.rows() || col0 + ncols > xv.cols()) {
        throw DimensionError("slice out of range for " + shape_to_string(xv.shape()));
    }
    Tensor out = Tensor::matrix(nrows, ncols);
    for (size_t i = 0; i < nrows; ++i) {
        for (size_t j = 0; j < ncols; ++j) {
            out(i, j) = xv(row0 + i, col0 + j);
        }
    }
    return x.tape->push(std::move(out), {x}, [x, row0, col0](Tape& tape, const Tensor& g) {
        Tensor gx(x.value().shape());
        const size_t cols = x.value().cols();
        for (size_t i = 0; i < g.rows(); ++i) {
            for (size_t j = 0; j < g.cols(); ++j) {
                gx[(row0 + i) * cols + col0 + j] = g(i, j);
            }
        }
        tape.accumulate(x, gx);
    });
}

namespace {

template <typename Extract>
Var concat_impl(const std::vector<Var>& parts, Tensor out, Extract extract) {
    return parts.front().tape->push(std::move(out), parts, [parts, extract](Tape& tape, const Tensor& g) {
        for (size_t k = 0; k < parts.size(); ++k) {
            tape.accumulate(parts[k], extract(g, k));
        }
    });
}

}  // namespace

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw InvalidArgument("concat_rows of zero parts");
    }
    const size_t cols = parts.front().value().cols();
    size_t rows = 0;
    std::vector<size_t> offsets;
    for (const Var& p : parts) {
        if (p.value().cols() != cols) {
            throw DimensionError("concat_rows: column mismatch " + shape_to_string(p.value().shape()));
        }
        offsets.push_back(rows);
        rows += p.value().rows();
    }
    Tensor out = Tensor::matrix(rows, cols);
    for (size_t k = 0; k < parts.size(); ++k) {
        const auto src = parts[k].value().data();
        std::copy(src.begin(), src.end(), out.data().begin() + offsets[k] * cols);
    }
    std::vector<Shape> shapes;
    for (const Var& p : parts) {
        shapes.push_back(p.value().shape());
    }
    return concat_impl(parts, std::move(out), [offsets, shapes, cols](const Tensor& g, size_t k) {
        Tensor part(shapes[k]);
        std::copy_n(g.data().begin() + offsets[k] * cols, part.size(), part.data().begin());
        return part;
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw InvalidArgument("concat_cols of zero parts");
    }
    const size_t rows = parts.front().value().rows();
    size_t cols = 0;
    std::vector<size_t> offsets;
    std::vector<size_t> widths;
    for (const Var& p : parts) {
        if (p.value().rows() != rows) {
            throw DimensionError("concat_cols: row mismatch " + shape_to_string(p.value().shape()));
        }
        offsets.push_back(cols);
        widths.push_back(p.value().cols());
        cols += p.value().cols();
    }
    Tensor out = Tensor::matrix(rows, cols);
    for (size_t k = 0; k < parts.size(); ++k) {
        const Tensor& pv = parts[k].value();
        for (size_t i = 0; i < rows; ++i) {
            for (size_t j = 0; j < widths[k]; ++j) {
                out(i, offsets[k] + j) = pv(i, j);
            }
        }
    }
    return concat_impl(parts, std::move(out), [offsets, widths, rows](const Tensor& g, size_t k) {
        Tensor part = Tensor::matrix(rows, widths[k]);
        for (size_t i = 0; i < rows; ++i) {
            for (size_t j = 0; j < widths[k]; ++j) {
                part(i, j) = g(i, offsets[k] + j);
            }
        }
        return part;
    });
}

Var gather_rows(Var table, const std::vector<size_t>& ids) {
    const Tensor& tv = table.value();
    const size_t cols = tv.cols();
    Tensor out = Tensor::matrix(ids.size(), cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= tv.rows()) {
            throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                             std::to_string(tv.rows()) + " rows");
        }
        for (size_t j = 0; j < cols; ++j) {
            out(i, j) = tv(ids[i], j);
        }
    }
    return table.tape->push(std::move(out), {table}, [table, ids](Tape& tape, const Tensor& g) {
        Tensor gt(table.value().shape());
        const size_t cols = g.cols();
        for (size_t i = 0; i < ids.size(); ++i) {
            for (size_t j = 0; j < cols; ++j) {
                gt[ids[i] * cols + j] += g(i, j);
            }
        }
        tape.accumulate(table, gt);
    });
}

Var mean_rows(Var x) {
    const Tensor& xv = x.value();
    Tensor out = Tensor::matrix(1, xv.cols());
    for (size_t i = 0; i < xv.rows(); ++i) {
        for (size_t j = 0; j < xv.cols(); ++j) {
            out(0, j) += xv(i, j);
        }
    }
    const double inv = 1.0 / static_cast<double>(xv.rows());
    for (size_t j = 0; j < xv.cols(); ++j) {
        out(0, j) *= inv;
    }
    return x.tape->push(std::move(out), {x}, [x, inv](Tape& tape, const Tensor& g) {
        Tensor gx(x.value().shape());
        const size_t cols = x.value().cols();
        for (size_t i = 0; i < x.value().rows(); ++i) {
            for (size_t j = 0; j < cols; ++j) {
                gx[i * cols + j] = g[j] * inv;
            }
        }
        tape.accumulate(x, gx);
    });
}

Var sum(Var x) {
    double total = 0.0;
    for (double v : x.value().data()) {
        total += v;
    }
    return x.tape->push(Tensor({1}, total), {x}, [x](Tape& tape, const Tensor& g) {
        tape.accumulate(x, Tensor(x.value().shape(), g[0]));
    });
}

Var sum_squares(Var x) {
    double total = 0.0;
    for (double v : x.value().data()) {
        total += v * v;
    }
    return x.tape->push(Tensor({1}, total), {x}, [x](Tape& tape, const Tensor& g) {
        Tensor gx(x.value().shape());
        for (size_t i = 0; i < gx.size(); ++i) {
            gx[i] = 2.0 * g[0] * x.value()[i];
        }
        tape.accumulate(x, gx);
    });
}

Var cross_entropy(Var logits, size_t target) {
    const Tensor& z = logits.value();
    if (target >= z.size()) {
        throw IndexError("cross_entropy target " + std::to_string(target) + " outside " + std::to_string(z.size()) +
                         " classes");
    }
    Tensor p = kernels::softmax_rows(Tensor({1, z.size()}, std::vector<double>(z.values())));
    const double loss = -std::log(std::max(p[target], 1e-300));
    return logits.tape->push(Tensor({1}, loss), {logits},
                             [logits, target, p = std::move(p)](Tape& tape, const Tensor& g) {
                                 Tensor gz(logits.value().shape());
                                 for (size_t i = 0; i < gz.size(); ++i) {
                                     gz[i] = g[0] * (p[i] - (i == target ? 1.0 : 0.0));
                                 }
                                 tape.accumulate(logits, gz);
                             });
}

Var custom(Var x, Tensor value, std::function<Tensor(const Tensor&)> vjp) {
    return x.tape->push(std::move(value), {x}, [x, vjp = std::move(vjp)](Tape& tape, const Tensor& g) {
        tape.accumulate(x, vjp(g));
    });
}

}  // namespace flexsel::ad
