// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace flexsel {

// Portable random source: std::mt19937_64 is fully specified by the standard,
// the distributions on top of it are not, so they are written out here.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : m_engine(seed) {}

    uint64_t next_u64() { return m_engine(); }
    double uniform();  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    size_t below(size_t n);  // uniform integer in [0, n)

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[below(i)]);
        }
    }

    std::string serialize() const;
    void deserialize(const std::string& state);

private:
    std::mt19937_64 m_engine;
    bool m_has_spare = false;
    double m_spare = 0.0;
};

/// Derives an independent stream seed from a base seed and a stream tag.
uint64_t derive_seed(uint64_t base, uint64_t stream);

}  // namespace flexsel
