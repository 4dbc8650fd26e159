// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/errors.hpp"

namespace flexsel {

const char* error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::dimension:
        return "dimension_error";
    case ErrorCode::index:
        return "index_error";
    case ErrorCode::invalid_argument:
        return "invalid_argument";
    case ErrorCode::configuration:
        return "configuration_error";
    case ErrorCode::capacity:
        return "capacity_error";
    case ErrorCode::format:
        return "format_error";
    case ErrorCode::degenerate_input:
        return "degenerate_input";
    case ErrorCode::evaluation:
        return "evaluation_error";
    case ErrorCode::divergence:
        return "training_divergence";
    case ErrorCode::io:
        return "io_error";
    case ErrorCode::usage:
        return "usage_error";
    }
    return "error";
}

}  // namespace flexsel
