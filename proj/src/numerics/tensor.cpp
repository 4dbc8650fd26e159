// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flexsel/errors.hpp"

namespace flexsel {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << "]";
    return out.str();
}

size_t shape_numel(const Shape& shape) {
    size_t n = 1;
    for (size_t d : shape) {
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape, double fill) : m_shape(std::move(shape)), m_data(shape_numel(m_shape), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : m_shape(std::move(shape)), m_data(std::move(data)) {
    if (shape_numel(m_shape) != m_data.size()) {
        throw DimensionError("tensor shape " + shape_to_string(m_shape) + " does not match data length " +
                             std::to_string(m_data.size()));
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const size_t r = rows.size();
    const size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged rows in Tensor::from_rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> values) {
    const size_t n = values.size();
    return Tensor({n}, std::move(values));
}

size_t Tensor::rows() const {
    if (m_shape.size() == 1) {
        return 1;
    }
    if (m_shape.size() != 2) {
        throw DimensionError("expected rank-2 tensor, got " + shape_to_string(m_shape));
    }
    return m_shape[0];
}

size_t Tensor::cols() const {
    if (m_shape.size() == 1) {
        return m_shape[0];
    }
    if (m_shape.size() != 2) {
        throw DimensionError("expected rank-2 tensor, got " + shape_to_string(m_shape));
    }
    return m_shape[1];
}

bool Tensor::all_finite() const {
    return std::all_of(m_data.begin(), m_data.end(), [](double v) { return std::isfinite(v); });
}

Tensor transpose(const Tensor& x) {
    const size_t r = x.rows();
    const size_t c = x.cols();
    Tensor out = Tensor::matrix(c, r);
    for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < c; ++j) {
            out(j, i) = x(i, j);
        }
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw DimensionError("max_abs_diff shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

}  // namespace flexsel
