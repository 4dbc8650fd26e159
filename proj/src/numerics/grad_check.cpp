// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "flexsel/errors.hpp"

namespace flexsel {

namespace {

double evaluate_graph(const ScalarGraph& f, const Tensor& x) {
    ad::Tape tape(false);
    ad::Var out = f(tape, tape.constant(x));
    if (out.value().size() != 1) {
        throw DimensionError("finite_diff_check: function must return a scalar");
    }
    return out.value()[0];
}

}  // namespace

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         const Tensor& analytic_grad, double h, size_t stride) {
    if (!(h > 0.0)) {
        throw InvalidArgument("finite_diff_check: step must be positive");
    }
    if (analytic_grad.size() != x.size()) {
        throw DimensionError("finite_diff_check: gradient " + shape_to_string(analytic_grad.shape()) +
                             " vs input " + shape_to_string(x.shape()));
    }
    if (!std::isfinite(f(x))) {
        throw EvaluationError("finite_diff_check: f(x) is not finite");
    }
    Tensor probe = x;
    double worst = 0.0;
    for (size_t i = 0; i < x.size(); i += std::max<size_t>(stride, 1)) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double up = f(probe);
        probe[i] = saved - h;
        const double down = f(probe);
        probe[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw EvaluationError("finite_diff_check: non-finite value near coordinate " + std::to_string(i));
        }
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic_grad[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

double finite_diff_check(const ScalarGraph& f, const Tensor& x, double h) {
    ad::Tape tape;
    ad::Var input = tape.leaf(x);
    ad::Var out = f(tape, input);
    if (out.value().size() != 1) {
        throw DimensionError("finite_diff_check: function must return a scalar");
    }
    if (!std::isfinite(out.value()[0])) {
        throw EvaluationError("finite_diff_check: f(x) is not finite");
    }
    tape.backward(out);
    Tensor grad = input.grad().empty() ? Tensor(x.shape()) : input.grad();
    return finite_diff_check([&](const Tensor& p) { return evaluate_graph(f, p); }, x, grad, h);
}

}  // namespace flexsel
