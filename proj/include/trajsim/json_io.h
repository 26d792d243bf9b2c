// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by every document format: canonical compact JSON output
// with 17-significant-digit floats, duplicate-key-rejecting parsing, and
// typed field access that reports the offending field.

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace trajsim {

using Json = nlohmann::ordered_json;

/// Floats as %.17g, integers as integers, keys in insertion order, no spaces.
std::string dump_canonical(const Json& value);

/// Formats a double the same way dump_canonical does.
std::string format_double(double value);

/// Parses one JSON text. Throws Error(Parse) on syntax errors and
/// Error(Validation) on duplicate keys inside any object (the message gives
/// the dotted key path); `context` prefixes the message.
Json parse_json(std::string_view text, std::string_view context);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

namespace field {

const Json& require(const Json& object, std::string_view key, std::string_view where);
double number(const Json& object, std::string_view key, std::string_view where);
long long integer(const Json& object, std::string_view key, std::string_view where);
std::string string(const Json& object, std::string_view key, std::string_view where);
double as_number(const Json& value, std::string_view where);
long long as_integer(const Json& value, std::string_view where);

}  // namespace field

}  // namespace trajsim
