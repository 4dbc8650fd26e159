// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace flexsel {

enum class ErrorCode {
    dimension,
    index,
    invalid_argument,
    configuration,
    capacity,
    format,
    degenerate_input,
    evaluation,
    divergence,
    io,
    usage,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message) : std::runtime_error(message), m_code(code) {}

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

#define FLEXSEL_DEFINE_ERROR(Name, Code)                                          \
    class Name : public Error {                                                  \
    public:                                                                      \
        explicit Name(const std::string& message) : Error(ErrorCode::Code, message) {} \
    }

FLEXSEL_DEFINE_ERROR(DimensionError, dimension);
FLEXSEL_DEFINE_ERROR(IndexError, index);
FLEXSEL_DEFINE_ERROR(InvalidArgument, invalid_argument);
FLEXSEL_DEFINE_ERROR(ConfigError, configuration);
FLEXSEL_DEFINE_ERROR(CapacityError, capacity);
FLEXSEL_DEFINE_ERROR(FormatError, format);
FLEXSEL_DEFINE_ERROR(DegenerateInputError, degenerate_input);
FLEXSEL_DEFINE_ERROR(EvaluationError, evaluation);
FLEXSEL_DEFINE_ERROR(DivergenceError, divergence);
FLEXSEL_DEFINE_ERROR(IoError, io);
FLEXSEL_DEFINE_ERROR(UsageError, usage);

#undef FLEXSEL_DEFINE_ERROR

}  // namespace flexsel
