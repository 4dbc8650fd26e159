// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/errors.hpp"
#include "flexsel/reference_model.hpp"
#include "flexsel/serialize.hpp"
#include "flexsel/weight_file.hpp"

namespace flexsel {

void save_reference_model(const ReferenceModel& model, const std::filesystem::path& path) {
    save_weight_file(path, {{"kind", "reference"}, {"model", model.config()}}, model.weights());
}

ReferenceModel load_reference_model(const std::filesystem::path& path) {
    WeightFile file = load_weight_file(path);
    if (file.config.value("kind", "") != "reference") {
        throw FormatError(path.string() + " does not hold reference model weights");
    }
    return ReferenceModel(file.config.at("model").get<ModelConfig>(), std::move(file.tensors));
}

}  // namespace flexsel
