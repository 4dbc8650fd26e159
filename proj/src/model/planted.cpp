// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/planted.hpp"

#include <algorithm>
#include <cmath>

#include "flexsel/errors.hpp"
#include "flexsel/rng.hpp"

namespace flexsel {

void PlantedSpec::validate() const {
    if (layers < 1 || heads < 1) {
        throw ConfigError("planted spec needs at least one layer and one head");
    }
    if (relevant.empty()) {
        throw ConfigError("planted spec has an empty relevant set");
    }
    if (peak_layer >= layers) {
        throw ConfigError("peak layer " + std::to_string(peak_layer) + " outside " + std::to_string(layers) +
                          " layers");
    }
    if (concentration.size() != layers) {
        throw ConfigError("concentration profile has " + std::to_string(concentration.size()) +
                          " entries for " + std::to_string(layers) + " layers");
    }
    for (size_t l = 0; l < layers; ++l) {
        const double c = concentration[l];
        if (!(c >= 0.0 && c <= 1.0)) {
            throw ConfigError("concentration at layer " + std::to_string(l) + " outside [0, 1]");
        }
        if (l != peak_layer && !(c < concentration[peak_layer])) {
            throw ConfigError("concentration at layer " + std::to_string(l) + " is not below the peak");
        }
    }
    if (!(noise >= 0.0) || !std::isfinite(noise)) {
        throw ConfigError("noise scale must be finite and nonnegative");
    }
}

PlantedSpec PlantedSpec::tent(size_t layers, size_t heads, std::vector<size_t> relevant, size_t total_visual,
                              size_t peak_layer, double peak, double noise, uint64_t seed) {
    PlantedSpec spec;
    spec.layers = layers;
    spec.heads = heads;
    spec.relevant = std::move(relevant);
    spec.peak_layer = peak_layer;
    spec.noise = noise;
    spec.seed = seed;
    const double uniform = total_visual ? static_cast<double>(spec.relevant.size()) / static_cast<double>(total_visual)
                                        : 0.0;
    spec.concentration.resize(layers);
    for (size_t l = 0; l < layers; ++l) {
        if (l == peak_layer) {
            spec.concentration[l] = peak;
            continue;
        }
        const double distance = std::abs(static_cast<double>(l) - static_cast<double>(peak_layer));
        spec.concentration[l] = 0.5 * uniform * (1.0 - distance / static_cast<double>(layers));
    }
    return spec;
}

namespace {

// Unit-variance content key of every visual token for one (layer, head).
std::vector<double> content_keys(const PlantedSpec& spec, const TokenSequence& seq, size_t layer, size_t head) {
    const size_t dim = seq.visual_dim();
    Rng rng(derive_seed(spec.seed, layer * spec.heads + head));
    std::vector<double> direction(dim);
    double norm = 0.0;
    for (double& v : direction) {
        v = rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    std::vector<double> keys(seq.visual_count());
    for (size_t i = 0; i < keys.size(); ++i) {
        double dot = 0.0;
        const auto row = seq.visual.row(i);
        for (size_t k = 0; k < dim; ++k) {
            dot += direction[k] * row[k];
        }
        keys[i] = dot / norm;
    }
    return keys;
}

std::vector<char> relevant_mask(const PlantedSpec& spec, const TokenSequence& seq) {
    std::vector<char> mask(seq.visual_count(), 0);
    for (size_t g : spec.relevant) {
        auto it = std::lower_bound(seq.global_index.begin(), seq.global_index.end(), g);
        if (it == seq.global_index.end() || *it != g) {
            throw IndexError("relevant index " + std::to_string(g) + " is not a token of the sequence");
        }
        mask[static_cast<size_t>(it - seq.global_index.begin())] = 1;
    }
    return mask;
}

}  // namespace

AttentionRecord planted_forward(const PlantedSpec& spec, const TokenSequence& seq) {
    seq.validate();
    if (spec.concentration.size() != spec.layers) {
        throw ConfigError("concentration profile length does not match layer count");
    }
    const std::vector<char> is_relevant = relevant_mask(spec, seq);
    const size_t m = seq.visual_count();
    const size_t q = seq.query_count();
    const size_t n_relevant = static_cast<size_t>(std::count(is_relevant.begin(), is_relevant.end(), 1));
    const size_t n_other = m - n_relevant;

    AttentionRecord record(spec.layers, spec.heads, m, q);
    std::vector<double> base(m);
    for (size_t l = 0; l < spec.layers; ++l) {
        double c = spec.concentration[l];
        if (n_relevant == 0) {
            c = 0.0;
        } else if (n_other == 0) {
            c = 1.0;
        }
        for (size_t i = 0; i < m; ++i) {
            base[i] = is_relevant[i] ? c / static_cast<double>(n_relevant)
                                     : (1.0 - c) / static_cast<double>(n_other);
        }
        for (size_t h = 0; h < spec.heads; ++h) {
            const std::vector<double> keys = content_keys(spec, seq, l, h);
            std::vector<double> row(m);
            double total = 0.0;
            for (size_t i = 0; i < m; ++i) {
                row[i] = base[i] * std::exp(spec.noise * keys[i]);
                total += row[i];
            }
            Tensor& rows = record.rows(l, h);
            for (size_t r = 0; r < q; ++r) {
                for (size_t i = 0; i < m; ++i) {
                    rows(r, i) = row[i] / total;
                }
            }
        }
    }
    return record;
}

PlantedSpec restrict_to(const PlantedSpec& spec, const TokenSequence& seq) {
    PlantedSpec out = spec;
    out.relevant.clear();
    for (size_t g : spec.relevant) {
        if (std::binary_search(seq.global_index.begin(), seq.global_index.end(), g)) {
            out.relevant.push_back(g);
        }
    }
    return out;
}

}  // namespace flexsel
