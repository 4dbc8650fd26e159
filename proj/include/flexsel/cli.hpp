// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "flexsel/serialize.hpp"

namespace flexsel::cli {

struct DatasetOptions {
    size_t count = 8;
};

struct ProfileOptions {
    std::string source = "planted";  // planted | reference
    size_t k = 0;                    // 0 means |R|
    std::string weights;             // reference model weights for source = reference
    size_t pca_components = 2;
};

struct ScorerOptions {
    std::string kind = "planted";  // planted | reference | selector
    std::optional<size_t> layer;   // scoring layer; the teacher peak layer when unset
    std::string weights;
};

struct TrainOptions {
    std::string target = "selector";  // selector | reference
    size_t train_size = 1000;
    size_t holdout_size = 200;
    SelectorTrainOptions selector;
    ClassifierTrainOptions classifier;
};

struct EvalOptions {
    size_t count = 20;
    std::string weights;  // selector weights; a freshly initialized selector when empty
};

struct TimingOptions {
    size_t repetitions = 5;
    size_t warmup = 1;
};

/// Every knob of every command. Unused sections are ignored by a command
/// but still echoed, so a run directory fully describes its inputs.
struct RunConfig {
    uint64_t seed = 0;
    HaystackSpec haystack;
    TeacherSpec teacher;
    DatasetOptions dataset;
    ProfileOptions profile;
    size_t max_per_set = 64;
    SelectionConfig selection;
    ScorerOptions scorer;
    SelectorConfig selector;
    ModelConfig model;
    TrainOptions train;
    EvalOptions eval;
    FlopsQuery flops;
    TimingOptions timing;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Applies `key.path=value` to a config document. The value is parsed as
/// JSON, falling back to a plain string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// 64-bit FNV-1a of the canonical JSON dump.
uint64_t config_hash(const nlohmann::json& config);

/// Runs the command line; returns the process exit status. Errors go to
/// `err`, as JSON objects when --json-errors is given.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flexsel::cli
