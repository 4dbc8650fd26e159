// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria may be named on the command line to run a subset.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "flexsel/cli.hpp"
#include "flexsel/errors.hpp"
#include "flexsel/flops.hpp"
#include "flexsel/grad_check.hpp"
#include "flexsel/kernels.hpp"
#include "flexsel/pipeline.hpp"
#include "flexsel/probe.hpp"
#include "flexsel/reference_model.hpp"
#include "flexsel/rng.hpp"
#include "flexsel/selector.hpp"
#include "flexsel/softrank.hpp"

using namespace flexsel;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buffer[1024];
    std::snprintf(buffer, sizeof buffer, format, args...);
    return buffer;
}

const fs::path& work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "flexsel_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "flexsel");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int status = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (status != 0) {
        std::cerr << err.str();
    }
    return status;
}

std::string slurp(const fs::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("missing artifact " + path.string());
    }
    return {std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>()};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Reference-layer recovery through the profile command.
Verdict a1() {
    const auto start = std::chrono::steady_clock::now();
    const size_t layers = 8;
    size_t clean_hits = 0;
    size_t noisy_hits = 0;
    Rng rng(2024);
    for (size_t trial = 0; trial < 100; ++trial) {
        const size_t peak = 1 + rng.below(layers - 2);  // 0-based; 1-based L* in [2, L-1]
        const uint64_t seed = rng.next_u64();
        for (double noise : {0.0, 0.05}) {
            const fs::path out = work_dir() / "a1";
            const int status =
                cli({"--seed", std::to_string(seed), "--out", out.string(), "--set",
                     "teacher.layers=" + std::to_string(layers), "--set", "teacher.peak_layer=" + std::to_string(peak),
                     "--set", "teacher.seed=" + std::to_string(seed ^ 0x9e37ULL), "--set",
                     "teacher.noise=" + fmt("%.17g", noise), "profile"});
            if (status != 0) {
                return {false, "profile exited with status " + std::to_string(status)};
            }
            const bool hit = json::parse(slurp(out / "reference_layer.json")).at("reference_layer") == peak;
            (noise == 0.0 ? clean_hits : noisy_hits) += hit ? 1 : 0;
        }
    }
    const double elapsed = seconds_since(start);
    return {clean_hits == 100 && noisy_hits >= 95 && elapsed < 60.0,
            fmt("sigma=0: %zu/100, sigma=0.05: %zu/100, %.1f s", clean_hits, noisy_hits, elapsed)};
}

// Recall against a brute-force set intersection.
Verdict a2() {
    Rng rng(5150);
    size_t mismatches = 0;
    for (size_t trial = 0; trial < 1000; ++trial) {
        const size_t m = 1 + rng.below(64);
        std::vector<double> scores(m);
        const bool coarse = trial % 2 == 0;
        for (double& s : scores) {
            s = coarse ? static_cast<double>(rng.below(6)) : rng.normal();
        }
        std::set<size_t> relevant;
        const size_t r = 1 + rng.below(m);
        while (relevant.size() < r) {
            relevant.insert(rng.below(m));
        }
        const size_t k = 1 + rng.below(m);
        size_t hits = 0;
        for (size_t i : relevant) {
            size_t better = 0;
            for (size_t j = 0; j < m; ++j) {
                better += (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ? 1 : 0;
            }
            hits += better < k ? 1 : 0;
        }
        const std::vector<size_t> rel(relevant.begin(), relevant.end());
        mismatches += recall_at_k(scores, rel, k) == static_cast<double>(hits) / static_cast<double>(r) ? 0 : 1;
    }
    return {mismatches == 0, fmt("%zu/1000 instances differ from the oracle", mismatches)};
}

// Soft rank against the projection oracle, rank-loss gradients, small-epsilon limit.
Verdict a3() {
    Rng rng(314);
    double worst_projection = 0.0;
    for (size_t trial = 0; trial < 1000; ++trial) {
        const size_t m = 1 + trial % 4;
        const double eps = std::exp(rng.uniform(-3.0, 2.0));
        std::vector<double> v(m);
        std::vector<double> z(m);
        for (size_t i = 0; i < m; ++i) {
            v[i] = trial % 3 == 0 ? static_cast<double>(rng.below(3)) : rng.normal();
            z[i] = v[i] / eps;
        }
        const double err = oracle::max_abs(soft_rank(v, {eps}), oracle::permutahedron_oracle(z));
        worst_projection = std::max(worst_projection, err);
    }

    double worst_gradient = 0.0;
    for (size_t trial = 0; trial < 100; ++trial) {
        std::vector<double> ref(16);
        Tensor pred = Tensor::matrix(1, 16);
        for (size_t i = 0; i < 16; ++i) {
            ref[i] = rng.normal();
            pred[i] = rng.normal();
        }
        const SoftRankConfig config{0.1};
        const RankLoss loss = rank_loss(ref, pred.data(), config);
        auto f = [&](const Tensor& x) { return rank_loss(ref, x.data(), config).loss; };
        worst_gradient = std::max(worst_gradient, finite_diff_check(f, pred, Tensor({1, 16}, loss.gradient), 1e-6));
    }

    double worst_limit = 0.0;
    for (size_t trial = 0; trial < 100; ++trial) {
        const size_t m = 2 + rng.below(63);
        std::vector<double> v(m);
        std::iota(v.begin(), v.end(), rng.uniform(-10.0, 10.0));
        rng.shuffle(v);
        worst_limit = std::max(worst_limit, oracle::max_abs(soft_rank(v, {1e-3}), hard_rank(v)));
    }
    return {worst_projection <= 1e-4 && worst_gradient <= 1e-4 && worst_limit <= 0.01,
            fmt("(a) max |err| %.2e, (b) max rel err %.2e, (c) max |soft - hard| %.2e", worst_projection,
                worst_gradient, worst_limit)};
}

// Rank distillation through the train command.
Verdict a4() {
    const auto start = std::chrono::steady_clock::now();
    const fs::path out = work_dir() / "a4";
    const int status = cli({"--seed", "0", "--out", out.string(), "--set", "train.train_size=1000", "--set",
                            "train.holdout_size=200", "--set", "train.selector.epochs=5", "--set",
                            "haystack.frames=32", "--set", "haystack.tokens_per_frame=4", "train"});
    if (status != 0) {
        return {false, "train exited with status " + std::to_string(status)};
    }
    const double elapsed = seconds_since(start);
    const json summary = json::parse(slurp(out / "train_summary.json"));
    const double baseline = summary.at("baseline_holdout_spearman");
    double best = -1.0;
    size_t reached = 0;
    std::istringstream curve(slurp(out / "curve.csv"));
    std::string line;
    while (std::getline(curve, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) {
            continue;
        }
        size_t epoch = 0;
        unsigned long long step = 0;
        double loss = 0.0;
        double rho = 0.0;
        if (std::sscanf(line.c_str(), "%zu,%llu,%lf,%lf", &epoch, &step, &loss, &rho) != 4) {
            return {false, "unreadable curve line: " + line};
        }
        if (rho > best) {
            best = rho;
        }
        if (reached == 0 && rho >= 0.8) {
            reached = epoch + 1;
        }
    }
    return {std::abs(baseline) <= 0.2 && reached >= 1 && reached <= 5 && elapsed < 600.0,
            fmt("baseline rho %.3f, best held-out rho %.3f, >= 0.8 in epoch %zu, %.1f s", baseline, best, reached,
                elapsed)};
}

// Lite against training-free needle recall at the default keep ratio. The
// selector is distilled from the same noiseless teacher the training-free
// run scores with; the needle offset is one where per-token detection can
// reach the criterion at all.
Verdict a5() {
    const double offset = 4.0;
    const fs::path out = work_dir() / "a5";
    const int status = cli({"--seed", "0", "--out", out.string(), "--set", "train.train_size=1000", "--set",
                            "train.holdout_size=200", "--set", "train.selector.lr=0.003", "--set",
                            "teacher.noise=0", "--set", "haystack.payload_offset=" + fmt("%.17g", offset), "train"});
    if (status != 0) {
        return {false, "train exited with status " + std::to_string(status)};
    }
    const Selector selector = load_selector(out / "selector.flxs");
    HaystackSpec base;
    base.frames = 128;
    base.tokens_per_frame = 4;
    base.payload_offset = offset;
    TeacherSpec clean;
    clean.noise = 0.0;
    const PartitionSpec partition{base.frames, 32};
    SelectionConfig selection;
    selection.ratio = 0.0625;
    double lite_sum = 0.0;
    double free_sum = 0.0;
    for (size_t trial = 0; trial < 100; ++trial) {
        const Haystack h = build_haystack(dataset_item_spec(base, 77, trial));
        const auto recall = [&](const SelectedTokens& s) {
            size_t hits = 0;
            for (const SelectedToken& t : s.tokens) {
                hits += std::binary_search(h.relevant.begin(), h.relevant.end(), t.global_index) ? 1 : 0;
            }
            return static_cast<double>(hits) / static_cast<double>(h.relevant.size());
        };
        const PlantedScorer planted(clean.planted_for(h), clean.peak_layer);
        free_sum += recall(run_training_free(h.sequence, partition, selection, planted));
        lite_sum += recall(run_lite(h.sequence, partition, selection, selector));
    }
    const double free = free_sum / 100.0;
    const double lite = lite_sum / 100.0;
    return {free >= 0.95 && std::abs(lite - free) <= 0.10,
            fmt("training-free recall %.3f, lite recall %.3f, gap %.1f points (needle offset %.1f)", free, lite,
                100.0 * (free - lite), offset)};
}

// Partition cover, budget accounting, order and monotone-transform invariance.
Verdict a6() {
    Rng rng(6006);
    size_t failures = 0;
    for (size_t trial = 0; trial < 1000; ++trial) {
        const size_t frames = 1 + rng.below(2048);
        const size_t s = 1 + rng.below(64);
        const PartitionSpec partition{frames, s};
        const size_t k = partition.set_count();
        bool ok = true;

        const auto sets = partition_frames(frames, s);
        std::vector<size_t> seen(frames, 0);
        for (const auto& set : sets) {
            ok = ok && (set.size() == frames / k || set.size() == (frames + k - 1) / k);
            for (size_t f : set) {
                ok = ok && f < frames;
                if (f < frames) {
                    ++seen[f];
                }
            }
        }
        ok = ok && sets.size() == k && std::all_of(seen.begin(), seen.end(), [](size_t c) { return c == 1; });

        HaystackSpec spec;
        spec.frames = frames;
        spec.tokens_per_frame = 1 + rng.below(2);
        spec.visual_dim = 8;
        spec.seed = rng.next_u64();
        const Haystack h = build_haystack(spec);
        const size_t total = h.sequence.visual_count();
        std::map<size_t, double> table;
        std::map<size_t, double> transformed;
        for (size_t g = 0; g < total; ++g) {
            table[g] = trial % 2 ? static_cast<double>(rng.below(16)) : rng.normal();
            transformed[g] = std::atan(table[g]) * 5.0 + table[g] * table[g] * table[g];
        }
        SelectionConfig selection;
        selection.budget = k + rng.below(total + 2);
        const TableScorer scorer(table);
        const SelectedTokens out = run_training_free(h.sequence, partition, selection, scorer);
        ok = ok && out.tokens.size() == std::min(*selection.budget, total);

        std::vector<size_t> order(k);
        std::iota(order.begin(), order.end(), size_t{0});
        rng.shuffle(order);
        const SelectedTokens reordered = run_training_free_in_order(h.sequence, partition, selection, scorer, order);
        const SelectedTokens monotone = run_training_free(h.sequence, partition, selection, TableScorer(transformed));
        ok = ok && reordered.tokens.size() == out.tokens.size() && monotone.tokens.size() == out.tokens.size();
        for (size_t i = 0; ok && i < out.tokens.size(); ++i) {
            ok = reordered.tokens[i].global_index == out.tokens[i].global_index &&
                 reordered.tokens[i].score == out.tokens[i].score && reordered.tokens[i].set == out.tokens[i].set &&
                 monotone.tokens[i].global_index == out.tokens[i].global_index;
        }
        failures += ok ? 0 : 1;
    }
    return {failures == 0, fmt("%zu/1000 instances violate an invariant", failures)};
}

// Cost model against counted multiply-accumulates, and ratio convergence.
Verdict a7() {
    ModelConfig mc;
    mc.layers = 4;
    mc.heads = 2;
    mc.hidden = 32;
    mc.ffn = 64;
    mc.visual_dim = 16;
    mc.max_positions = 2048 + 16;
    const ReferenceModel model = ReferenceModel::init(mc);
    SelectorConfig sc;
    sc.layers = 2;
    sc.heads = 1;
    sc.hidden = 8;
    sc.ffn = 16;
    sc.visual_dim = 16;
    const Selector selector = Selector::init(sc);
    const size_t m_ref = 2;

    double worst = 0.0;
    std::string detail;
    for (size_t n : {512u, 1024u, 2048u}) {
        HaystackSpec spec;
        spec.frames = n / 4;
        spec.tokens_per_frame = 4;
        spec.visual_dim = 16;
        spec.seed = n;
        const Haystack h = build_haystack(spec);
        SelectionConfig selection;
        selection.ratio = 0.0625;

        FlopsQuery q;
        q.layers = mc.layers;
        q.reference_layer = m_ref;
        q.heads = mc.heads;
        q.hidden = mc.hidden;
        q.ffn = mc.ffn;
        q.tokens = h.sequence.length();
        q.selector_layers = sc.layers;
        q.selector_hidden = sc.hidden;
        q.selector_ffn = sc.ffn;

        const auto counted = [](auto&& fn) {
            kernels::reset_mac_count();
            fn();
            return static_cast<double>(kernels::mac_count());
        };
        const auto decode_of = [&](const SelectedTokens& s) {
            std::vector<size_t> kept;
            for (const SelectedToken& t : s.tokens) {
                kept.push_back(t.global_index);
            }
            const TokenSequence reduced = h.sequence.subset(kept);
            q.selected = reduced.length();
            return counted([&] { model.forward_with_attention(reduced); });
        };
        const auto rel = [](double measured, Flops predicted) {
            return std::abs(measured - static_cast<double>(predicted)) / static_cast<double>(predicted);
        };

        const double full = counted([&] { model.forward_with_attention(h.sequence); });
        const double full_err = rel(full, flops_full(q));

        const PartitionSpec four{spec.frames, spec.frames / 4};
        q.sets = four.set_count();
        const ReferenceScorer scorer(model, m_ref - 1);
        SelectedTokens picked;
        const double stage1 = counted([&] { picked = run_training_free(h.sequence, four, selection, scorer); });
        const double flex_counted = stage1 + decode_of(picked);
        const double flex_err = rel(flex_counted, flops_flexselect(q));

        // The lite formula keeps only the selector's attention products; every
        // selector matmul is held against the all-terms variant.
        const PartitionSpec two{spec.frames, spec.frames / 2};
        q.sets = two.set_count();
        const double lite_all = counted([&] { picked = run_lite(h.sequence, two, selection, selector); });
        const double lite_attention = static_cast<double>(kernels::attention_mac_count());
        const double lite_decode = decode_of(picked);
        const double lite_err = rel(lite_attention + lite_decode, flops_lite(q));
        const double lite_all_err = rel(lite_all, lite_stage1_full_terms(q));

        worst = std::max({worst, full_err, flex_err, lite_err, lite_all_err});
        detail += fmt("n=%zu full %.1f%% flexselect %.1f%% lite %.1f%% lite-all-terms %.1f%%; ", n, 100 * full_err,
                      100 * flex_err, 100 * lite_err, 100 * lite_all_err);
    }

    bool shrinking = true;
    double previous = std::numeric_limits<double>::infinity();
    for (uint64_t n : {10000ull, 100000ull, 1000000ull}) {
        FlopsQuery q;
        q.tokens = n;
        q.selected = n / 16;
        const FlopsReport r = flops_report(q);
        const double gap = std::abs(r.ratio_exact - r.ratio_approx) / r.ratio_approx;
        shrinking = shrinking && gap < previous;
        previous = gap;
        detail += fmt("gap(n=%llu) %.4f; ", static_cast<unsigned long long>(n), gap);
    }
    return {worst <= 0.10 && shrinking, detail + fmt("worst count error %.1f%%", 100 * worst)};
}

// Every command twice with the same config and seed, the second run on more threads.
Verdict a8() {
    const std::vector<std::string> config = {
        "--seed",  "123",
        "--set",   "train.train_size=24",
        "--set",   "train.holdout_size=8",
        "--set",   "train.selector.epochs=2",
        "--set",   "train.classifier.steps=4",
        "--set",   "model.layers=2",
        "--set",   "model.hidden=16",
        "--set",   "model.ffn=32",
        "--set",   "model.heads=2",
        "--set",   "eval.count=4",
        "--set",   "dataset.count=4",
        "--set",   "max_per_set=8",
    };
    size_t compared = 0;
    std::vector<std::string> differing;
    for (const std::string command : {"gen", "profile", "select", "train", "eval", "flops"}) {
        std::vector<fs::path> dirs;
        for (const char* threads : {"1", "3"}) {
            ::setenv("FLEXSEL_THREADS", threads, 1);
            const fs::path out = work_dir() / "a8" / (command + "_" + threads);
            std::vector<std::string> args = config;
            args.insert(args.end(), {"--out", out.string(), command});
            const int status = cli(args);
            ::unsetenv("FLEXSEL_THREADS");
            omp_set_num_threads(1);
            if (status != 0) {
                return {false, command + " exited with status " + std::to_string(status)};
            }
            dirs.push_back(out);
        }
        for (const auto& entry : fs::directory_iterator(dirs[0])) {
            const fs::path other = dirs[1] / entry.path().filename();
            ++compared;
            if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
                differing.push_back(command + "/" + entry.path().filename().string());
            }
        }
    }
    std::string detail = fmt("%zu artifacts compared, %zu differ", compared, differing.size());
    for (const auto& d : differing) {
        detail += " " + d;
    }
    return {differing.empty() && compared >= 12, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5}, {"A6", a6}, {"A7", a7}, {"A8", a8},
    };
    const std::set<std::string> wanted(argv + 1, argv + argc);
    bool all_pass = true;
    for (const auto& [name, run] : criteria) {
        if (!wanted.empty() && !wanted.count(name)) {
            continue;
        }
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        all_pass = all_pass && v.pass;
        std::cout << name << ' ' << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
    }
    return all_pass ? 0 : 1;
}
