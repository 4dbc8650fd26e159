// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "flexsel/decoder.hpp"
#include "json.hpp"

namespace flexsel {

// Layout, all integers little-endian:
//   "FLXS" | u32 version | u32 header length | header (UTF-8 JSON) | payload
// The header holds {"config", "tensors": [{"name", "shape", "offset"}], "payload_bytes", "crc32"};
// offsets are byte offsets into the payload, which stores f64 values
// row-major in manifest (name) order.
inline constexpr char kWeightMagic[4] = {'F', 'L', 'X', 'S'};
inline constexpr uint32_t kWeightVersion = 1;

struct WeightFile {
    nlohmann::json config;
    NamedTensors tensors;
};

std::string encode_weight_file(const nlohmann::json& config, const NamedTensors& tensors);

/// Throws FormatError on bad magic, unknown version, truncation, manifest
/// inconsistencies or a checksum mismatch.
WeightFile decode_weight_file(std::string_view bytes);

void save_weight_file(const std::filesystem::path& path, const nlohmann::json& config, const NamedTensors& tensors);
WeightFile load_weight_file(const std::filesystem::path& path);

uint32_t crc32_of(std::string_view bytes);

}  // namespace flexsel
