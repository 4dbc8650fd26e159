// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/softrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flexsel/errors.hpp"

namespace flexsel {

std::vector<double> hard_rank(std::span<const double> values) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) {
            ++j;
        }
        // positions i..j-1 (0-based) hold ranks i+1..j
        const double shared = 0.5 * static_cast<double>(i + 1 + j);
        for (size_t k = i; k < j; ++k) {
            ranks[order[k]] = shared;
        }
        i = j;
    }
    return ranks;
}

IsotonicFit isotonic_fit(std::span<const double> y) {
    struct Block {
        double sum;
        size_t count;
        double mean() const { return sum / static_cast<double>(count); }
    };
    std::vector<Block> stack;
    stack.reserve(y.size());
    for (double v : y) {
        stack.push_back({v, 1});
        while (stack.size() > 1 && stack[stack.size() - 2].mean() > stack.back().mean()) {
            const Block top = stack.back();
            stack.pop_back();
            stack.back().sum += top.sum;
            stack.back().count += top.count;
        }
    }
    IsotonicFit fit;
    fit.values.reserve(y.size());
    fit.block.reserve(y.size());
    for (size_t b = 0; b < stack.size(); ++b) {
        const double mean = stack[b].mean();
        for (size_t k = 0; k < stack[b].count; ++k) {
            fit.values.push_back(mean);
            fit.block.push_back(b);
        }
    }
    return fit;
}

std::vector<double> isotonic_regression(std::span<const double> y) {
    return isotonic_fit(y).values;
}

void SoftRankConfig::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw InvalidArgument("soft rank regularization must be finite and positive");
    }
}

SoftRank::SoftRank(std::span<const double> values, const SoftRankConfig& config) : m_epsilon(config.epsilon) {
    config.validate();
    const size_t n = values.size();
    m_order.resize(n);
    std::iota(m_order.begin(), m_order.end(), size_t{0});
    std::stable_sort(m_order.begin(), m_order.end(), [&](size_t a, size_t b) { return values[a] > values[b]; });

    // Sorted descending s against weights w = (n, ..., 1). The projection is
    // s - v where v is the nonincreasing isotonic fit of s - w, computed as
    // the negated nondecreasing fit of w - s.
    std::vector<double> flipped(n);
    for (size_t i = 0; i < n; ++i) {
        const double s = values[m_order[i]] / m_epsilon;
        flipped[i] = static_cast<double>(n - i) - s;
    }
    const IsotonicFit fit = isotonic_fit(flipped);
    m_block = fit.block;
    m_block_size.assign(n ? m_block.back() + 1 : 0, 0);
    for (size_t b : m_block) {
        ++m_block_size[b];
    }
    m_ranks.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const double s = values[m_order[i]] / m_epsilon;
        m_ranks[m_order[i]] = s + fit.values[i];
    }
}

std::vector<double> SoftRank::backward(std::span<const double> grad_ranks) const {
    const size_t n = m_order.size();
    if (grad_ranks.size() != n) {
        throw DimensionError("soft rank backward: gradient length " + std::to_string(grad_ranks.size()) +
                             " vs " + std::to_string(n));
    }
    std::vector<double> block_mean(m_block_size.size(), 0.0);
    for (size_t i = 0; i < n; ++i) {
        block_mean[m_block[i]] += grad_ranks[m_order[i]];
    }
    for (size_t b = 0; b < block_mean.size(); ++b) {
        block_mean[b] /= static_cast<double>(m_block_size[b]);
    }
    std::vector<double> grad(n);
    for (size_t i = 0; i < n; ++i) {
        grad[m_order[i]] = (grad_ranks[m_order[i]] - block_mean[m_block[i]]) / m_epsilon;
    }
    return grad;
}

std::vector<double> soft_rank(std::span<const double> values, const SoftRankConfig& config) {
    return SoftRank(values, config).ranks();
}

namespace {

struct Centered {
    std::vector<double> values;
    double norm = 0.0;
};

Centered center(std::span<const double> x) {
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    Centered c;
    c.values.resize(x.size());
    double ss = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        c.values[i] = x[i] - mean;
        ss += c.values[i] * c.values[i];
    }
    c.norm = std::sqrt(ss);
    return c;
}

void check_pair(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("spearman: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                             " differ");
    }
    if (a.size() < 2) {
        throw InvalidArgument("spearman needs at least two entries");
    }
}

// Pearson correlation with its gradient with respect to `b`.
double pearson(const Centered& a, const Centered& b, std::vector<double>* grad_b) {
    constexpr double kTiny = 1e-12;
    if (a.norm < kTiny || b.norm < kTiny) {
        throw DegenerateInputError("spearman: rank vector has zero variance");
    }
    double dot = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
    }
    const double rho = dot / (a.norm * b.norm);
    if (grad_b) {
        grad_b->resize(b.values.size());
        for (size_t i = 0; i < b.values.size(); ++i) {
            (*grad_b)[i] = a.values[i] / (a.norm * b.norm) - rho * b.values[i] / (b.norm * b.norm);
        }
    }
    return std::clamp(rho, -1.0, 1.0);
}

struct Standardized {
    std::vector<double> z;
    double scale = 1.0;  // 1 / std
};

Standardized standardize(std::span<const double> x) {
    const Centered c = center(x);
    const double std = c.norm / std::sqrt(static_cast<double>(x.size()));
    if (!(std > 1e-300)) {
        throw DegenerateInputError("spearman: predicted scores are constant");
    }
    Standardized s;
    s.scale = 1.0 / std;
    s.z.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        s.z[i] = c.values[i] * s.scale;
    }
    return s;
}

std::vector<double> standardize_backward(const Standardized& s, std::span<const double> grad_z) {
    const size_t n = s.z.size();
    double mean_g = 0.0;
    double mean_gz = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mean_g += grad_z[i];
        mean_gz += grad_z[i] * s.z[i];
    }
    mean_g /= static_cast<double>(n);
    mean_gz /= static_cast<double>(n);
    std::vector<double> grad(n);
    for (size_t i = 0; i < n; ++i) {
        grad[i] = s.scale * (grad_z[i] - mean_g - s.z[i] * mean_gz);
    }
    return grad;
}

}  // namespace

double spearman(std::span<const double> reference, std::span<const double> predicted, RankMode mode,
                const SoftRankConfig& config) {
    check_pair(reference, predicted);
    const Centered a = center(hard_rank(reference));
    if (mode == RankMode::hard) {
        return pearson(a, center(hard_rank(predicted)), nullptr);
    }
    const Standardized s = standardize(predicted);
    return pearson(a, center(soft_rank(s.z, config)), nullptr);
}

RankLoss rank_loss(std::span<const double> reference, std::span<const double> predicted,
                   const SoftRankConfig& config) {
    check_pair(reference, predicted);
    const Centered a = center(hard_rank(reference));
    const Standardized s = standardize(predicted);
    const SoftRank ranks(s.z, config);
    std::vector<double> grad_ranks;
    RankLoss out;
    out.rho = pearson(a, center(ranks.ranks()), &grad_ranks);
    out.loss = 1.0 - out.rho;
    for (double& g : grad_ranks) {
        g = -g;
    }
    out.gradient = standardize_backward(s, ranks.backward(grad_ranks));
    return out;
}

}  // namespace flexsel
