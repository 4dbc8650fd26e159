// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/weight_file.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flexsel/errors.hpp"

namespace flexsel {

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

uint32_t get_u32(std::string_view in, size_t at) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    }
    return v;
}

uint64_t get_u64(std::string_view in, size_t at) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    }
    return v;
}

}  // namespace

uint32_t crc32_of(std::string_view bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<uint32_t>(crc);
}

std::string encode_weight_file(const nlohmann::json& config, const NamedTensors& tensors) {
    std::string payload;
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, tensor] : tensors) {
        manifest.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", payload.size()}});
        for (double v : tensor.data()) {
            put_u64(payload, std::bit_cast<uint64_t>(v));
        }
    }
    nlohmann::json header = {
        {"config", config},
        {"tensors", manifest},
        {"payload_bytes", payload.size()},
        {"crc32", crc32_of(payload)},
    };
    const std::string header_text = header.dump();
    std::string out(kWeightMagic, 4);
    put_u32(out, kWeightVersion);
    put_u32(out, static_cast<uint32_t>(header_text.size()));
    out += header_text;
    out += payload;
    return out;
}

WeightFile decode_weight_file(std::string_view bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kWeightMagic, 4) != 0) {
        throw FormatError("not a weight file (bad magic)");
    }
    const uint32_t version = get_u32(bytes, 4);
    if (version != kWeightVersion) {
        throw FormatError("unsupported weight file version " + std::to_string(version));
    }
    const uint32_t header_len = get_u32(bytes, 8);
    if (bytes.size() < 12 + static_cast<size_t>(header_len)) {
        throw FormatError("weight file truncated inside the header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(12, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("weight file header is not valid JSON: ") + e.what());
    }
    const std::string_view payload = bytes.substr(12 + header_len);
    try {
        const size_t payload_bytes = header.at("payload_bytes").get<size_t>();
        if (payload.size() != payload_bytes) {
            throw FormatError("weight file payload has " + std::to_string(payload.size()) + " bytes, header says " +
                              std::to_string(payload_bytes));
        }
        if (crc32_of(payload) != header.at("crc32").get<uint32_t>()) {
            throw FormatError("weight file checksum mismatch");
        }
        WeightFile file;
        file.config = header.at("config");
        size_t expected_offset = 0;
        for (const auto& entry : header.at("tensors")) {
            const std::string name = entry.at("name").get<std::string>();
            const Shape shape = entry.at("shape").get<Shape>();
            const size_t offset = entry.at("offset").get<size_t>();
            const size_t count = shape_numel(shape);
            if (offset != expected_offset || offset + 8 * count > payload.size()) {
                throw FormatError("tensor " + name + " has a non-contiguous or out-of-range offset");
            }
            std::vector<double> values(count);
            for (size_t i = 0; i < count; ++i) {
                values[i] = std::bit_cast<double>(get_u64(payload, offset + 8 * i));
            }
            if (!file.tensors.emplace(name, Tensor(shape, std::move(values))).second) {
                throw FormatError("duplicate tensor " + name);
            }
            expected_offset = offset + 8 * count;
        }
        if (expected_offset != payload.size()) {
            throw FormatError("weight file manifest does not cover the payload");
        }
        return file;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("weight file header is malformed: ") + e.what());
    }
}

void save_weight_file(const std::filesystem::path& path, const nlohmann::json& config, const NamedTensors& tensors) {
    const std::string bytes = encode_weight_file(config, tensors);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

WeightFile load_weight_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open weight file " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return decode_weight_file(buffer.str());
}

}  // namespace flexsel
