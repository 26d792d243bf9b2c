// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "trajsim/cli.h"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return trajsim::cli_dispatch(args, std::cout, std::cerr);
}
