// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace flexsel {

using Shape = std::vector<size_t>;

std::string shape_to_string(const Shape& shape);
size_t shape_numel(const Shape& shape);

/// Dense row-major tensor of doubles. Most of the library works on rank-2
/// tensors; rank-1 tensors are used for per-feature parameters (gains, biases).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor matrix(size_t rows, size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::vector<double> values);

    const Shape& shape() const noexcept { return m_shape; }
    size_t rank() const noexcept { return m_shape.size(); }
    size_t size() const noexcept { return m_data.size(); }
    bool empty() const noexcept { return m_data.empty(); }

    // rank-2 view; a rank-1 tensor is treated as a single row
    size_t rows() const;
    size_t cols() const;

    double& operator()(size_t r, size_t c) { return m_data[r * cols() + c]; }
    double operator()(size_t r, size_t c) const { return m_data[r * cols() + c]; }
    double& operator[](size_t i) { return m_data[i]; }
    double operator[](size_t i) const { return m_data[i]; }

    std::span<double> data() noexcept { return m_data; }
    std::span<const double> data() const noexcept { return m_data; }
    std::span<double> row(size_t r) { return {m_data.data() + r * cols(), cols()}; }
    std::span<const double> row(size_t r) const { return {m_data.data() + r * cols(), cols()}; }
    const std::vector<double>& values() const noexcept { return m_data; }

    bool all_finite() const;
    bool operator==(const Tensor& other) const = default;

private:
    Shape m_shape;
    std::vector<double> m_data;
};

Tensor transpose(const Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace flexsel
