// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Error type shared by every module. The kind decides CLI exit codes and
// HTTP status mapping; the message is meant for humans.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trajsim {

enum class ErrorKind {
    Parse,          // malformed document / line
    Validation,     // well-formed but violates a data invariant
    EmptyProblem,   // no usable regression rows
    Numeric,        // non-finite inputs or outputs
    NoData,         // an estimator has nothing to work with
    Underdetermined,
    Unsupported,    // input outside the setting a method is defined for
    DimensionMismatch,
    Conditioning,   // e.g. Cholesky failure on a non-SPD Hessian
    UndefinedSigma,
    UndefinedRho,
    Edit,           // invalid curriculum edit
    Config,
    NotFound,
    Io,
    Usage,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace trajsim
