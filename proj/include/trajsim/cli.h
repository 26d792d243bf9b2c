// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace trajsim {

/// Exit codes: 0 success, 1 usage error, 2 data or validation error.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trajsim
