// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "flexsel/tensor.hpp"

namespace flexsel {

/// Visual tokens followed by query tokens. Visual token p carries its frame,
/// its slot within the frame and its global index in the full video.
struct TokenSequence {
    Tensor visual;  // M x d_vis
    std::vector<size_t> frame_index;
    std::vector<size_t> within_frame;
    std::vector<size_t> global_index;
    std::vector<size_t> query;

    size_t visual_count() const noexcept { return global_index.size(); }
    size_t query_count() const noexcept { return query.size(); }
    size_t length() const noexcept { return visual_count() + query_count(); }
    size_t visual_dim() const { return visual.cols(); }

    /// Throws InvalidArgument when the invariants (M >= 1, query >= 1,
    /// strictly increasing global indices, consistent lengths) do not hold.
    void validate() const;

    /// Keeps the visual tokens at `positions` (in the given order) and the full query.
    TokenSequence subset(const std::vector<size_t>& positions) const;
};

}  // namespace flexsel
