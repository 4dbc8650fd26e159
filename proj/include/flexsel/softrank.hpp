// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

namespace flexsel {

/// Ascending ranks in [1, M]; tied values share the average of their positions.
std::vector<double> hard_rank(std::span<const double> values);

/// Pool-adjacent-violators fit: nondecreasing vector minimizing ½‖out − y‖².
/// `block` maps each position to the index of its pooled block.
struct IsotonicFit {
    std::vector<double> values;
    std::vector<size_t> block;
};

IsotonicFit isotonic_fit(std::span<const double> y);
std::vector<double> isotonic_regression(std::span<const double> y);

struct SoftRankConfig {
    double epsilon = 0.1;
    void validate() const;
};

/// Euclidean projection of values / epsilon onto the permutahedron of
/// (1, ..., M). Larger values receive larger ranks.
class SoftRank {
public:
    SoftRank(std::span<const double> values, const SoftRankConfig& config);

    const std::vector<double>& ranks() const noexcept { return m_ranks; }

    /// Vector-Jacobian product: maps dL/d(ranks) to dL/d(values).
    std::vector<double> backward(std::span<const double> grad_ranks) const;

private:
    double m_epsilon;
    std::vector<size_t> m_order;       // positions sorted by descending value
    std::vector<size_t> m_block;       // pooled block of each sorted slot
    std::vector<size_t> m_block_size;  // indexed by block
    std::vector<double> m_ranks;
};

std::vector<double> soft_rank(std::span<const double> values, const SoftRankConfig& config);

enum class RankMode { hard, soft };

/// Pearson correlation of rank vectors. In soft mode the reference side uses
/// hard ranks and the predicted side soft ranks of its standardized values.
/// Throws DegenerateInputError when either rank vector has zero variance.
double spearman(std::span<const double> reference, std::span<const double> predicted, RankMode mode = RankMode::hard,
                const SoftRankConfig& config = {});

struct RankLoss {
    double loss = 0.0;              // 1 - rho, in [0, 2]
    double rho = 0.0;
    std::vector<double> gradient;  // d loss / d predicted
};

RankLoss rank_loss(std::span<const double> reference, std::span<const double> predicted,
                   const SoftRankConfig& config = {});

}  // namespace flexsel
