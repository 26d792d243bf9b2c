// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/error.h"

namespace trajsim {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::Validation: return "validation error";
        case ErrorKind::EmptyProblem: return "empty problem";
        case ErrorKind::Numeric: return "numeric error";
        case ErrorKind::NoData: return "no data";
        case ErrorKind::Underdetermined: return "underdetermined";
        case ErrorKind::Unsupported: return "unsupported setting";
        case ErrorKind::DimensionMismatch: return "dimension mismatch";
        case ErrorKind::Conditioning: return "conditioning error";
        case ErrorKind::UndefinedSigma: return "undefined sigma";
        case ErrorKind::UndefinedRho: return "undefined rho";
        case ErrorKind::Edit: return "edit error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::NotFound: return "not found";
        case ErrorKind::Io: return "io error";
        case ErrorKind::Usage: return "usage error";
    }
    return "error";
}

}  // namespace trajsim
