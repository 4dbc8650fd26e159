// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "doctest.h"
#include "flexsel/errors.hpp"
#include "flexsel/flops.hpp"
#include "flexsel/rng.hpp"

using namespace flexsel;

namespace {

FlopsQuery small_query() {
    FlopsQuery q;
    q.layers = 4;
    q.reference_layer = 4;
    q.hidden = 64;
    q.ffn = 256;
    q.tokens = 1000;
    q.selected = 0;
    q.sets = 1;
    return q;
}

// Independent long-double evaluation of the dense block cost.
long double dense(long double layers, long double n, long double d, long double m, long double k) {
    return layers * (4 * n * d * d + 2 * n * n * d / k + 2 * n * d * m);
}

}  // namespace

TEST_CASE("full prefill cost") {
    FlopsQuery q = small_query();
    CHECK(to_decimal(flops_full(q)) == "708608000");
    q.layers = 0;
    CHECK(flops_full(q) == 0);
    q = small_query();
    const Flops base = flops_full(q);
    q.tokens *= 2;
    CHECK(static_cast<double>(flops_full(q)) / static_cast<double>(base) > 2.0);
    double previous = 0.0;
    for (uint64_t n : {1000ull, 100000ull, 10000000ull, 1000000000ull}) {
        q.tokens = n;
        const Flops one = flops_full(q);
        q.tokens = 2 * n;
        const double ratio = static_cast<double>(flops_full(q)) / static_cast<double>(one);
        CHECK(ratio > previous);
        CHECK(ratio < 4.0);
        previous = ratio;
    }
    CHECK(previous > 3.99);
}

TEST_CASE("flexselect cost") {
    FlopsQuery q = small_query();
    CHECK(flops_flexselect(q) == flops_full(q));

    FlopsQuery large;
    large.tokens = 100000;
    large.selected = 6250;
    const FlopsReport r = flops_report(large);
    CHECK(r.ratio_approx == doctest::Approx(19.0 / 224.0));
    CHECK(r.ratio_approx == doctest::Approx(0.0848).epsilon(1e-3));
    const long double expected = dense(19, 100000, 3584, 18944, 8) + dense(28, 6250, 3584, 18944, 1);
    CHECK(static_cast<long double>(r.flexselect) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-15));
    CHECK(r.flexselect == r.flexselect_stage1 + r.decode_stage);
}

TEST_CASE("stage-one ratio approaches the partitioned fraction") {
    FlopsQuery q;
    q.selected = 0;
    double previous_gap = std::numeric_limits<double>::infinity();
    for (uint64_t n : {10000ull, 100000ull, 1000000ull, 100000000ull}) {
        q.tokens = n;
        const FlopsReport r = flops_report(q);
        const double gap = std::abs(r.ratio_exact - r.ratio_approx) / r.ratio_approx;
        CHECK(gap < previous_gap);
        previous_gap = gap;
    }
    CHECK(previous_gap < 0.01);
}

TEST_CASE("lite cost") {
    FlopsQuery q;
    q.tokens = 50000;
    q.selected = 3125;
    q.selector_layers = q.reference_layer;
    q.selector_hidden = q.hidden;
    const Flops dominant = 2 * Flops(q.reference_layer) * Flops(q.tokens) * Flops(q.tokens) * Flops(q.hidden) / q.sets;
    CHECK(lite_stage1(q) == dominant);

    q.selector_layers = 2;
    q.selector_hidden = 32;
    const double ratio = static_cast<double>(lite_stage1(q)) / static_cast<double>(dominant);
    CHECK(ratio == doctest::Approx(64.0 / (19.0 * 3584.0)));
    CHECK(ratio == doctest::Approx(9.4e-4).epsilon(0.01));
    CHECK(lite_stage1(q) < flexselect_stage1(q));
    CHECK(flops_lite(q) == lite_stage1(q) + decode_stage(q));
    CHECK(lite_stage1_full_terms(q) > lite_stage1(q));

    q.tokens = 0;
    q.selected = 0;
    CHECK(flops_lite(q) == 0);
    CHECK(flops_report(q).ratio_exact == 0.0);
}

TEST_CASE("report fields are nondecreasing in every size parameter") {
    Rng rng(6);
    auto fields = [](const FlopsReport& r) {
        return std::vector<Flops>{r.full, r.flexselect, r.lite, r.flexselect_stage1, r.lite_stage1,
                                  r.lite_stage1_full_terms, r.decode_stage};
    };
    for (int trial = 0; trial < 200; ++trial) {
        FlopsQuery q;
        q.layers = 1 + rng.below(40);
        q.reference_layer = 1 + rng.below(q.layers);
        q.hidden = 1 + rng.below(5000);
        q.ffn = 1 + rng.below(20000);
        q.tokens = rng.below(100000);
        q.selected = q.tokens ? rng.below(q.tokens + 1) : 0;
        q.sets = 1 + rng.below(16);
        q.selector_layers = 1 + rng.below(4);
        q.selector_hidden = 1 + rng.below(64);
        q.selector_ffn = 1 + rng.below(128);
        const auto base = fields(flops_report(q));
        std::vector<FlopsQuery> bumped(9, q);
        bumped[0].layers += 1;
        bumped[1].reference_layer = std::min(q.reference_layer + 1, q.layers);
        bumped[2].hidden += 1;
        bumped[3].ffn += 1;
        bumped[4].tokens += 1;
        bumped[5].selected = std::min(q.selected + 1, q.tokens);
        bumped[6].selector_layers += 1;
        bumped[7].selector_hidden += 1;
        bumped[8].selector_ffn += 1;
        for (const FlopsQuery& b : bumped) {
            const auto grown = fields(flops_report(b));
            for (size_t i = 0; i < base.size(); ++i) {
                CHECK(grown[i] >= base[i]);
            }
        }
    }
}

TEST_CASE("wide values and json") {
    FlopsQuery q;
    q.tokens = 100000000;
    q.selected = 6250000;
    const FlopsReport r = flops_report(q);
    CHECK(r.full > Flops(std::numeric_limits<uint64_t>::max()));
    const nlohmann::json j = flops_json(q, r);
    CHECK(j.at("flops_full").is_string());
    CHECK(j.at("flops_full").get<std::string>() == to_decimal(r.full));
    CHECK(to_decimal(Flops(1) << 64) == "18446744073709551616");

    const nlohmann::json small = flops_json(small_query(), flops_report(small_query()));
    CHECK(small.at("flops_full").get<uint64_t>() == 708608000);
}

TEST_CASE("query validation") {
    FlopsQuery q;
    q.reference_layer = 29;
    CHECK_THROWS_AS(flops_report(q), InvalidArgument);
    q = {};
    q.reference_layer = 0;
    CHECK_THROWS_AS(flops_report(q), InvalidArgument);
    q = {};
    q.tokens = 5;
    q.selected = 6;
    CHECK_THROWS_AS(flops_flexselect(q), InvalidArgument);
    q = {};
    q.sets = 0;
    CHECK_THROWS_AS(flops_lite(q), InvalidArgument);
}
