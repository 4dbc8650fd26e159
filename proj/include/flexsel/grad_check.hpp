// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "flexsel/autodiff.hpp"

namespace flexsel {

using ScalarGraph = std::function<ad::Var(ad::Tape&, ad::Var)>;

/// Max over coordinates of |g_analytic - g_fd| / max(1, |g_fd|) with central
/// differences of step h. Throws EvaluationError when f(x) is not finite.
double finite_diff_check(const ScalarGraph& f, const Tensor& x, double h);

/// Same measure for a black-box scalar function with a precomputed analytic
/// gradient. `stride` > 1 samples every stride-th coordinate.
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         const Tensor& analytic_grad, double h, size_t stride = 1);

}  // namespace flexsel
