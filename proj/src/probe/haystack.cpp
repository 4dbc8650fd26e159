// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <set>

#include "flexsel/errors.hpp"
#include "flexsel/probe.hpp"
#include "flexsel/rng.hpp"

namespace flexsel {

void HaystackSpec::validate() const {
    if (frames < 1 || tokens_per_frame < 1) {
        throw InvalidArgument("haystack needs at least one frame and one token per frame");
    }
    if (needle_frames < 1 || needle_frames > frames) {
        throw InvalidArgument("needle count " + std::to_string(needle_frames) + " not in [1, " +
                              std::to_string(frames) + "]");
    }
    if (payload >= payload_count) {
        throw InvalidArgument("payload id " + std::to_string(payload) + " outside " + std::to_string(payload_count) +
                              " payloads");
    }
    if (payload_count > visual_dim) {
        throw InvalidArgument("payload directions need visual_dim >= payload_count");
    }
    if (!needle_positions.empty()) {
        if (needle_positions.size() != needle_frames) {
            throw InvalidArgument("needle position list does not match needle count");
        }
        std::set<size_t> unique(needle_positions.begin(), needle_positions.end());
        if (unique.size() != needle_positions.size()) {
            throw InvalidArgument("needle positions must be distinct");
        }
        if (*unique.rbegin() >= frames) {
            throw InvalidArgument("needle position " + std::to_string(*unique.rbegin()) + " outside " +
                                  std::to_string(frames) + " frames");
        }
    }
}

Haystack build_haystack(const HaystackSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Haystack out;
    out.payload = spec.payload;
    if (spec.needle_positions.empty()) {
        std::vector<size_t> frames(spec.frames);
        for (size_t i = 0; i < frames.size(); ++i) {
            frames[i] = i;
        }
        rng.shuffle(frames);
        out.needle_frames.assign(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(spec.needle_frames));
    } else {
        out.needle_frames = spec.needle_positions;
    }
    std::sort(out.needle_frames.begin(), out.needle_frames.end());

    const size_t total = spec.total_tokens();
    TokenSequence& seq = out.sequence;
    seq.visual = Tensor::matrix(total, spec.visual_dim);
    for (double& v : seq.visual.data()) {
        v = rng.normal();
    }
    for (size_t f = 0; f < spec.frames; ++f) {
        const bool needle = std::binary_search(out.needle_frames.begin(), out.needle_frames.end(), f);
        for (size_t t = 0; t < spec.tokens_per_frame; ++t) {
            const size_t g = f * spec.tokens_per_frame + t;
            seq.frame_index.push_back(f);
            seq.within_frame.push_back(t);
            seq.global_index.push_back(g);
            if (needle) {
                seq.visual(g, spec.payload) += spec.payload_offset;
                out.relevant.push_back(g);
            }
        }
    }
    seq.query = {0, spec.generic_query ? spec.payload_count + 1 : spec.payload + 1};
    return out;
}

}  // namespace flexsel
