// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace flexsel {

double Rng::uniform() {
    // 53 random mantissa bits
    return static_cast<double>(m_engine() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (m_has_spare) {
        m_has_spare = false;
        return m_spare;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    m_spare = radius * std::sin(angle);
    m_has_spare = true;
    return radius * std::cos(angle);
}

size_t Rng::below(size_t n) {
    // rejection sampling keeps the draw unbiased
    const uint64_t bound = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x = m_engine();
    while (x >= limit) {
        x = m_engine();
    }
    return static_cast<size_t>(x % bound);
}

std::string Rng::serialize() const {
    std::ostringstream out;
    out << m_engine << ' ' << m_has_spare << ' ';
    out.precision(17);
    out << std::hexfloat << m_spare;
    return out.str();
}

void Rng::deserialize(const std::string& state) {
    std::istringstream in(state);
    in >> m_engine >> m_has_spare;
    std::string spare;
    in >> spare;
    m_spare = std::strtod(spare.c_str(), nullptr);
}

uint64_t derive_seed(uint64_t base, uint64_t stream) {
    // splitmix64 finalizer over the combined words
    uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace flexsel
