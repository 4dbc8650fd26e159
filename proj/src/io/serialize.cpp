// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/serialize.hpp"

namespace flexsel {

void to_json(nlohmann::json& j, const SelectionConfig& c) {
    j = nlohmann::json{{"ratio", c.ratio}};
    if (c.budget) {
        j["budget"] = *c.budget;
    } else {
        j["budget"] = nullptr;
    }
}

void from_json(const nlohmann::json& j, SelectionConfig& c) {
    c = SelectionConfig{};
    if (j.contains("ratio")) {
        c.ratio = j.at("ratio").get<double>();
    }
    if (j.contains("budget") && !j.at("budget").is_null()) {
        c.budget = j.at("budget").get<size_t>();
    }
}

}  // namespace flexsel
