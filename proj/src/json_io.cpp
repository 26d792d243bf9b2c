// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/json_io.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "trajsim/error.h"

namespace trajsim {
namespace {

void dump_into(const Json& value, std::string& out) {
    switch (value.type()) {
        case Json::value_t::object: {
            out.push_back('{');
            bool first = true;
            for (const auto& [key, child] : value.items()) {
                if (!first) out.push_back(',');
                first = false;
                out += Json(key).dump();
                out.push_back(':');
                dump_into(child, out);
            }
            out.push_back('}');
            break;
        }
        case Json::value_t::array: {
            out.push_back('[');
            bool first = true;
            for (const auto& child : value) {
                if (!first) out.push_back(',');
                first = false;
                dump_into(child, out);
            }
            out.push_back(']');
            break;
        }
        case Json::value_t::number_float:
            out += format_double(value.get<double>());
            break;
        default:
            out += value.dump();
            break;
    }
}

}  // namespace

std::string format_double(double value) {
    if (!std::isfinite(value)) {
        return "null";
    }
    return fmt::format("{:.17g}", value);
}

std::string dump_canonical(const Json& value) {
    std::string out;
    dump_into(value, out);
    return out;
}

Json parse_json(std::string_view text, std::string_view context) {
    // One frame per open object: keys seen so far and the most recent key,
    // which names the path when a duplicate shows up.
    struct Frame {
        std::set<std::string> keys;
        std::string last_key;
    };
    std::vector<Frame> frames;
    std::string duplicate;
    auto callback = [&](int /*depth*/, Json::parse_event_t event, Json& parsed) {
        switch (event) {
            case Json::parse_event_t::object_start:
                frames.emplace_back();
                break;
            case Json::parse_event_t::object_end:
                if (!frames.empty()) frames.pop_back();
                break;
            case Json::parse_event_t::key: {
                if (frames.empty()) break;
                auto key = parsed.get<std::string>();
                if (!frames.back().keys.insert(key).second && duplicate.empty()) {
                    std::string path;
                    for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
                        path += frames[i].last_key + ".";
                    }
                    duplicate = path + key;
                }
                frames.back().last_key = std::move(key);
                break;
            }
            default:
                break;
        }
        return true;
    };
    Json result;
    try {
        result = Json::parse(text.begin(), text.end(), callback);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Parse, fmt::format("{}: malformed JSON ({})", context, e.what()));
    }
    if (!duplicate.empty()) {
        throw Error(ErrorKind::Validation,
                    fmt::format("{}: duplicate key '{}'", context, duplicate));
    }
    return result;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::Io, fmt::format("cannot open '{}': file not found or unreadable", path));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path));
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw Error(ErrorKind::Io, fmt::format("write to '{}' failed", path));
    }
}

namespace field {

const Json& require(const Json& object, std::string_view key, std::string_view where) {
    if (!object.is_object()) {
        throw Error(ErrorKind::Parse, fmt::format("{}: expected an object", where));
    }
    const auto it = object.find(std::string(key));
    if (it == object.end()) {
        throw Error(ErrorKind::Parse, fmt::format("{}: missing field '{}'", where, key));
    }
    return *it;
}

double as_number(const Json& value, std::string_view where) {
    if (!value.is_number()) {
        throw Error(ErrorKind::Parse, fmt::format("{}: expected a number", where));
    }
    return value.get<double>();
}

long long as_integer(const Json& value, std::string_view where) {
    if (value.is_number_integer()) {
        return value.get<long long>();
    }
    if (value.is_number_float()) {
        const double d = value.get<double>();
        if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15) {
            return static_cast<long long>(d);
        }
    }
    throw Error(ErrorKind::Parse, fmt::format("{}: expected an integer", where));
}

double number(const Json& object, std::string_view key, std::string_view where) {
    return as_number(require(object, key, where), fmt::format("{}.{}", where, key));
}

long long integer(const Json& object, std::string_view key, std::string_view where) {
    return as_integer(require(object, key, where), fmt::format("{}.{}", where, key));
}

std::string string(const Json& object, std::string_view key, std::string_view where) {
    const Json& value = require(object, key, where);
    if (!value.is_string()) {
        throw Error(ErrorKind::Parse, fmt::format("{}.{}: expected a string", where, key));
    }
    return value.get<std::string>();
}

}  // namespace field

}  // namespace trajsim
