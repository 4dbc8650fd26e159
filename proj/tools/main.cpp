// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "flexsel/cli.hpp"

int main(int argc, char** argv) {
    return flexsel::cli::run_cli(argc, argv, std::cout, std::cerr);
}
