// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>
#include <sstream>

#include "flexsel/errors.hpp"
#include "flexsel/probe.hpp"

namespace flexsel {

std::vector<size_t> top_k_ranked(std::span<const double> scores, size_t k) {
    if (k < 1 || k > scores.size()) {
        throw InvalidArgument("top-k size " + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) +
                              "]");
    }
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    auto better = [&](size_t a, size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
    order.resize(k);
    return order;
}

double recall_at_k(std::span<const double> scores, const std::vector<size_t>& relevant, size_t k) {
    if (relevant.empty()) {
        throw InvalidArgument("recall_at_k needs a nonempty relevant set");
    }
    if (k > scores.size()) {
        throw InvalidArgument("K = " + std::to_string(k) + " exceeds the " + std::to_string(scores.size()) +
                              " scored tokens");
    }
    for (size_t r : relevant) {
        if (r >= scores.size()) {
            throw IndexError("relevant position " + std::to_string(r) + " outside " + std::to_string(scores.size()) +
                             " scored tokens");
        }
    }
    std::vector<size_t> top = top_k_ranked(scores, k);
    std::sort(top.begin(), top.end());
    std::vector<size_t> wanted = relevant;
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    size_t hits = 0;
    for (size_t r : wanted) {
        hits += std::binary_search(top.begin(), top.end(), r) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(wanted.size());
}

ProbeResult profile_layers(const AttentionRecord& record, const std::vector<size_t>& relevant, size_t k) {
    if (record.layers() < 1) {
        throw InvalidArgument("attention record has no layers");
    }
    ProbeResult result;
    result.k = k;
    result.relevant = relevant;
    for (size_t l = 0; l < record.layers(); ++l) {
        const RelevanceScores scores = relevance_scores(record, l);
        result.recall.push_back(recall_at_k(scores, relevant, k));
        if (result.recall[l] > result.recall[result.reference_layer]) {
            result.reference_layer = l;
        }
    }
    return result;
}

std::string probe_csv(const ProbeResult& result) {
    std::ostringstream out;
    out.precision(17);
    out << "layer,recall,K,is_reference\n";
    for (size_t l = 0; l < result.recall.size(); ++l) {
        out << l << ',' << result.recall[l] << ',' << result.k << ',' << (l == result.reference_layer ? 1 : 0)
            << '\n';
    }
    return out.str();
}

}  // namespace flexsel
