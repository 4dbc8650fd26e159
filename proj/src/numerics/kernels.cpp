// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "flexsel/errors.hpp"

namespace flexsel::kernels {

namespace {

std::atomic<uint64_t> g_macs{0};
std::atomic<uint64_t> g_attention_macs{0};
thread_local bool t_in_attention = false;

void count_macs(uint64_t macs) {
    g_macs.fetch_add(macs, std::memory_order_relaxed);
    if (t_in_attention) {
        g_attention_macs.fetch_add(macs, std::memory_order_relaxed);
    }
}

// below this many MACs the fork/join overhead dominates
constexpr size_t kParallelThreshold = 1 << 15;

void check_inner(const Tensor& a, const Tensor& b, size_t ka, size_t kb, const char* op) {
    if (ka != kb) {
        throw DimensionError(std::string(op) + ": inner dimensions disagree, " + shape_to_string(a.shape()) +
                             " vs " + shape_to_string(b.shape()));
    }
}

// out[i, :] = sum_p a[i, p] * b[p, :]
inline void matmul_row(const Tensor& a, const Tensor& b, Tensor& out, size_t i) {
    const size_t k = a.cols();
    const size_t n = b.cols();
    double* dst = out.data().data() + i * n;
    for (size_t p = 0; p < k; ++p) {
        const double av = a(i, p);
        const double* src = b.data().data() + p * n;
        for (size_t j = 0; j < n; ++j) {
            dst[j] += av * src[j];
        }
    }
}

// out[i, j] = dot(a[i, :], b[j, :])
inline void matmul_nt_row(const Tensor& a, const Tensor& b, Tensor& out, size_t i) {
    const size_t k = a.cols();
    const size_t n = b.rows();
    const double* ar = a.data().data() + i * k;
    for (size_t j = 0; j < n; ++j) {
        const double* br = b.data().data() + j * k;
        double acc = 0.0;
        for (size_t p = 0; p < k; ++p) {
            acc += ar[p] * br[p];
        }
        out(i, j) = acc;
    }
}

// out[i, :] = sum_p a[p, i] * b[p, :]
inline void matmul_tn_row(const Tensor& a, const Tensor& b, Tensor& out, size_t i) {
    const size_t k = a.rows();
    const size_t n = b.cols();
    double* dst = out.data().data() + i * n;
    for (size_t p = 0; p < k; ++p) {
        const double av = a(p, i);
        const double* src = b.data().data() + p * n;
        for (size_t j = 0; j < n; ++j) {
            dst[j] += av * src[j];
        }
    }
}

inline void softmax_row(const Tensor& x, Tensor& out, size_t i, const AttentionMask& mask) {
    const size_t n = x.cols();
    double top = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < n; ++j) {
        if (mask.allows(i, j)) {
            top = std::max(top, x(i, j));
        }
    }
    double total = 0.0;
    for (size_t j = 0; j < n; ++j) {
        const double e = mask.allows(i, j) ? std::exp(x(i, j) - top) : 0.0;
        out(i, j) = e;
        total += e;
    }
    if (total > 0.0) {
        for (size_t j = 0; j < n; ++j) {
            out(i, j) /= total;
        }
    }
}

}  // namespace

uint64_t mac_count() noexcept {
    return g_macs.load(std::memory_order_relaxed);
}

uint64_t attention_mac_count() noexcept {
    return g_attention_macs.load(std::memory_order_relaxed);
}

void reset_mac_count() noexcept {
    g_macs.store(0, std::memory_order_relaxed);
    g_attention_macs.store(0, std::memory_order_relaxed);
}

AttentionScope::AttentionScope() noexcept : m_previous(t_in_attention) {
    t_in_attention = true;
}

AttentionScope::~AttentionScope() {
    t_in_attention = m_previous;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.cols(), b.rows(), "matmul");
    const size_t m = a.rows();
    Tensor out = Tensor::matrix(m, b.cols());
    const bool big = m * a.cols() * b.cols() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (size_t i = 0; i < m; ++i) {
        matmul_row(a, b, out, i);
    }
    count_macs(m * a.cols() * b.cols());
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.cols(), b.cols(), "matmul_nt");
    const size_t m = a.rows();
    Tensor out = Tensor::matrix(m, b.rows());
    const bool big = m * a.cols() * b.rows() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (size_t i = 0; i < m; ++i) {
        matmul_nt_row(a, b, out, i);
    }
    count_macs(m * a.cols() * b.rows());
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.rows(), b.rows(), "matmul_tn");
    const size_t m = a.cols();
    Tensor out = Tensor::matrix(m, b.cols());
    const bool big = m * a.rows() * b.cols() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (size_t i = 0; i < m; ++i) {
        matmul_tn_row(a, b, out, i);
    }
    count_macs(m * a.rows() * b.cols());
    return out;
}

Tensor softmax_rows(const Tensor& x, const AttentionMask& mask) {
    Tensor out = Tensor::matrix(x.rows(), x.cols());
    const size_t m = x.rows();
    const bool big = x.size() >= kParallelThreshold / 8;
#pragma omp parallel for schedule(static) if (big)
    for (size_t i = 0; i < m; ++i) {
        softmax_row(x, out, i, mask);
    }
    return out;
}

namespace serial {

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.cols(), b.rows(), "matmul");
    Tensor out = Tensor::matrix(a.rows(), b.cols());
    for (size_t i = 0; i < a.rows(); ++i) {
        matmul_row(a, b, out, i);
    }
    count_macs(a.rows() * a.cols() * b.cols());
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.cols(), b.cols(), "matmul_nt");
    Tensor out = Tensor::matrix(a.rows(), b.rows());
    for (size_t i = 0; i < a.rows(); ++i) {
        matmul_nt_row(a, b, out, i);
    }
    count_macs(a.rows() * a.cols() * b.rows());
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    check_inner(a, b, a.rows(), b.rows(), "matmul_tn");
    Tensor out = Tensor::matrix(a.cols(), b.cols());
    for (size_t i = 0; i < a.cols(); ++i) {
        matmul_tn_row(a, b, out, i);
    }
    count_macs(a.cols() * a.rows() * b.cols());
    return out;
}

Tensor softmax_rows(const Tensor& x, const AttentionMask& mask) {
    Tensor out = Tensor::matrix(x.rows(), x.cols());
    for (size_t i = 0; i < x.rows(); ++i) {
        softmax_row(x, out, i, mask);
    }
    return out;
}

}  // namespace serial

}  // namespace flexsel::kernels
