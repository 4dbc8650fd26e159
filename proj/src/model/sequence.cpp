// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/sequence.hpp"

#include <algorithm>

#include "flexsel/errors.hpp"

namespace flexsel {

void TokenSequence::validate() const {
    const size_t m = visual_count();
    if (m == 0) {
        throw InvalidArgument("token sequence has no visual tokens");
    }
    if (query.empty()) {
        throw InvalidArgument("token sequence has no query tokens");
    }
    if (visual.rows() != m || frame_index.size() != m || within_frame.size() != m) {
        throw InvalidArgument("token sequence metadata lengths disagree with " + std::to_string(m) +
                              " visual tokens");
    }
    for (size_t i = 1; i < m; ++i) {
        if (global_index[i] <= global_index[i - 1]) {
            throw InvalidArgument("global indices must be strictly increasing (position " + std::to_string(i) + ")");
        }
    }
}

TokenSequence TokenSequence::subset(const std::vector<size_t>& positions) const {
    TokenSequence out;
    const size_t d = visual.cols();
    out.visual = Tensor::matrix(positions.size(), d);
    for (size_t r = 0; r < positions.size(); ++r) {
        const size_t p = positions[r];
        if (p >= visual_count()) {
            throw IndexError("subset position " + std::to_string(p) + " outside " + std::to_string(visual_count()) +
                             " visual tokens");
        }
        std::copy_n(visual.row(p).begin(), d, out.visual.row(r).begin());
        out.frame_index.push_back(frame_index[p]);
        out.within_frame.push_back(within_frame[p]);
        out.global_index.push_back(global_index[p]);
    }
    out.query = query;
    return out;
}

}  // namespace flexsel
