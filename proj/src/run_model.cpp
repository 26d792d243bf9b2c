// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/run_model.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "trajsim/error.h"
#include "trajsim/json_io.h"

namespace trajsim {
namespace {

constexpr std::string_view kFormat = "trajsim-runlog";
constexpr int kVersion = 1;

[[noreturn]] void invalid(const std::string& message) {
    throw Error(ErrorKind::Validation, message);
}

int parse_index_key(const std::string& key, std::string_view where) {
    int value = 0;
    const auto* begin = key.data();
    const auto* end = key.data() + key.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (key.empty() || ec != std::errc() || ptr != end) {
        throw Error(ErrorKind::Parse, fmt::format("{}: key '{}' is not an integer", where, key));
    }
    return value;
}

std::vector<std::string> parse_names(const Json& header, std::string_view key) {
    std::vector<std::string> names;
    const auto it = header.find(std::string(key));
    if (it == header.end()) {
        return names;
    }
    if (!it->is_array()) {
        throw Error(ErrorKind::Parse, fmt::format("header.{}: expected an array", key));
    }
    for (const auto& name : *it) {
        if (!name.is_string()) {
            throw Error(ErrorKind::Parse, fmt::format("header.{}: names must be strings", key));
        }
        names.push_back(name.get<std::string>());
    }
    return names;
}

Run parse_run(const Json& object, int n, std::string_view where) {
    Run run;
    run.run_id = field::string(object, "run_id", where);
    const std::string run_where = fmt::format("{} (run '{}')", where, run.run_id);
    run.role = role_from_string(field::string(object, "role", run_where));

    const Json& steps = field::require(object, "steps", run_where);
    if (!steps.is_array()) {
        throw Error(ErrorKind::Parse, fmt::format("{}: steps must be an array", run_where));
    }
    run.curriculum.n = n;
    run.curriculum.steps.reserve(steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t) {
        const std::string step_where = fmt::format("{}: steps[{}]", run_where, t);
        if (!steps[t].is_array()) {
            throw Error(ErrorKind::Parse, fmt::format("{} must be an array", step_where));
        }
        Batch batch;
        batch.reserve(steps[t].size());
        for (const auto& id : steps[t]) {
            batch.push_back(static_cast<int>(field::as_integer(id, step_where)));
        }
        run.curriculum.steps.push_back(std::move(batch));
    }

    const Json& trajectories = field::require(object, "trajectories", run_where);
    if (!trajectories.is_object()) {
        throw Error(ErrorKind::Parse, fmt::format("{}: trajectories must be an object", run_where));
    }
    for (const auto& [key, body] : trajectories.items()) {
        const std::string traj_where = fmt::format("{}: trajectory {}", run_where, key);
        LossTrajectory trajectory;
        trajectory.test_example_id = parse_index_key(key, traj_where);
        if (!body.is_object()) {
            throw Error(ErrorKind::Parse, fmt::format("{} must be an object", traj_where));
        }
        const auto l0 = body.find("L0");
        if (l0 == body.end()) {
            invalid(fmt::format("run '{}': trajectory {} is missing L0", run.run_id, key));
        }
        trajectory.initial_loss = field::as_number(*l0, traj_where + ".L0");
        const auto losses = body.find("losses");
        if (losses != body.end()) {
            if (!losses->is_object()) {
                throw Error(ErrorKind::Parse, fmt::format("{}.losses must be an object", traj_where));
            }
            for (const auto& [step_key, value] : losses->items()) {
                const int t = parse_index_key(step_key, traj_where + ".losses");
                trajectory.losses[t] =
                    field::as_number(value, fmt::format("{}.losses.{}", traj_where, step_key));
            }
        }
        run.trajectories.push_back(std::move(trajectory));
    }
    std::sort(run.trajectories.begin(), run.trajectories.end(),
              [](const LossTrajectory& a, const LossTrajectory& b) {
                  return a.test_example_id < b.test_example_id;
              });
    return run;
}

Json run_to_json(const Run& run) {
    Json object = Json::object();
    object["run_id"] = run.run_id;
    object["role"] = std::string(to_string(run.role));
    Json steps = Json::array();
    for (const auto& batch : run.curriculum.steps) {
        steps.push_back(batch);
    }
    object["steps"] = std::move(steps);
    std::vector<const LossTrajectory*> ordered;
    for (const auto& trajectory : run.trajectories) {
        ordered.push_back(&trajectory);
    }
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return a->test_example_id < b->test_example_id;
    });
    Json trajectories = Json::object();
    for (const auto* trajectory : ordered) {
        Json body = Json::object();
        body["L0"] = trajectory->initial_loss;
        Json losses = Json::object();
        for (const auto& [t, value] : trajectory->losses) {
            losses[std::to_string(t)] = value;
        }
        body["losses"] = std::move(losses);
        trajectories[std::to_string(trajectory->test_example_id)] = std::move(body);
    }
    object["trajectories"] = std::move(trajectories);
    return object;
}

}  // namespace

void validate(const Curriculum& curriculum, std::string_view where) {
    if (curriculum.n < 1) {
        invalid(fmt::format("{}: n must be >= 1", where));
    }
    if (curriculum.steps.empty()) {
        invalid(fmt::format("{}: curriculum must have at least one step", where));
    }
    for (std::size_t t = 0; t < curriculum.steps.size(); ++t) {
        for (const int id : curriculum.steps[t]) {
            if (id < 1 || id > curriculum.n) {
                invalid(fmt::format("{}: step {} id {} out of range [1, {}] (id out of range)",
                                    where, t + 1, id, curriculum.n));
            }
        }
    }
}

std::optional<double> LossTrajectory::at(int t) const {
    if (t == 0) {
        return initial_loss;
    }
    const auto it = losses.find(t);
    if (it == losses.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string_view to_string(Role role) {
    return role == Role::Past ? "past" : "future";
}

Role role_from_string(std::string_view text) {
    if (text == "past") return Role::Past;
    if (text == "future") return Role::Future;
    throw Error(ErrorKind::Validation, fmt::format("unknown role '{}' (expected past|future)", text));
}

const LossTrajectory* Run::find(int test_example_id) const {
    for (const auto& trajectory : trajectories) {
        if (trajectory.test_example_id == test_example_id) {
            return &trajectory;
        }
    }
    return nullptr;
}

std::vector<Run> RunSet::with_role(Role role) const {
    std::vector<Run> selected;
    for (const auto& run : runs) {
        if (run.role == role) {
            selected.push_back(run);
        }
    }
    return selected;
}

const Run* RunSet::find(std::string_view run_id) const {
    for (const auto& run : runs) {
        if (run.run_id == run_id) {
            return &run;
        }
    }
    return nullptr;
}

void validate(const Run& run, int m, std::string_view where) {
    const std::string name =
        where.empty() ? fmt::format("run '{}'", run.run_id) : std::string(where);
    if (run.run_id.empty()) {
        invalid(fmt::format("{}: run_id must not be empty", name));
    }
    validate(run.curriculum, name);
    const int T = run.curriculum.length();
    std::set<int> seen;
    for (const auto& trajectory : run.trajectories) {
        const int id = trajectory.test_example_id;
        if (id < 1 || (m > 0 && id > m)) {
            invalid(fmt::format("{}: test id {} out of range [1, {}] (id out of range)", name, id, m));
        }
        if (!seen.insert(id).second) {
            invalid(fmt::format("{}: test id {} appears more than once", name, id));
        }
        if (!std::isfinite(trajectory.initial_loss)) {
            invalid(fmt::format("{}: trajectory {} field L0 is not finite", name, id));
        }
        for (const auto& [t, value] : trajectory.losses) {
            if (t < 1 || t > T) {
                invalid(fmt::format("{}: trajectory {} records step {} outside [1, {}]", name, id, t, T));
            }
            if (!std::isfinite(value)) {
                invalid(fmt::format("{}: trajectory {} loss at step {} is not finite", name, id, t));
            }
        }
    }
}

void validate(const RunSet& run_set) {
    if (run_set.n < 1) {
        invalid("run set: n must be >= 1");
    }
    if (!run_set.train_names.empty() && static_cast<int>(run_set.train_names.size()) != run_set.n) {
        invalid(fmt::format("run set: {} training names for n = {}", run_set.train_names.size(),
                            run_set.n));
    }
    std::set<std::string> ids;
    for (const auto& run : run_set.runs) {
        if (run.curriculum.n != run_set.n) {
            invalid(fmt::format("run '{}': curriculum n = {} differs from run set n = {}",
                                run.run_id, run.curriculum.n, run_set.n));
        }
        if (!ids.insert(run.run_id).second) {
            invalid(fmt::format("run '{}': duplicate run_id", run.run_id));
        }
        validate(run, run_set.m());
    }
}

RunSet parse_run_log(std::string_view document) {
    RunSet run_set;
    bool have_header = false;
    std::size_t line_number = 0;
    std::size_t pos = 0;
    while (pos < document.size()) {
        std::size_t end = document.find('\n', pos);
        if (end == std::string_view::npos) end = document.size();
        std::string_view line = document.substr(pos, end - pos);
        pos = end + 1;
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

        const std::string where = fmt::format("line {}", line_number);
        Json object;
        try {
            object = parse_json(line, where);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Validation || !have_header) throw;
            // Duplicate key: name the run if the line is otherwise readable.
            const Json plain = Json::parse(line, nullptr, false);
            if (plain.is_object() && plain.contains("run_id") && plain["run_id"].is_string()) {
                invalid(fmt::format("run '{}': {} (duplicate step index or test id)",
                                    plain["run_id"].get<std::string>(), e.what()));
            }
            throw;
        }
        if (!object.is_object()) {
            throw Error(ErrorKind::Parse, fmt::format("{}: expected a JSON object", where));
        }
        if (!have_header) {
            if (field::string(object, "format", where) != kFormat) {
                throw Error(ErrorKind::Parse, fmt::format("{}: not a {} document", where, kFormat));
            }
            const auto version = field::integer(object, "version", where);
            if (version != kVersion) {
                throw Error(ErrorKind::Parse,
                            fmt::format("{}: unsupported version {}", where, version));
            }
            run_set.n = static_cast<int>(field::integer(object, "n", where));
            run_set.train_names = parse_names(object, "train_examples");
            run_set.test_names = parse_names(object, "test_examples");
            have_header = true;
            continue;
        }
        run_set.runs.push_back(parse_run(object, run_set.n, where));
        try {
            validate(run_set.runs.back(), run_set.m());
        } catch (const Error& e) {
            throw Error(e.kind(), fmt::format("{}: {}", where, e.what()));
        }
    }
    if (!have_header) {
        throw Error(ErrorKind::Parse, "line 1: missing header");
    }
    validate(run_set);
    return run_set;
}

std::string serialize_run(const Run& run) {
    return dump_canonical(run_to_json(run));
}

std::string serialize_run_set(const RunSet& run_set) {
    Json header = Json::object();
    header["format"] = std::string(kFormat);
    header["version"] = kVersion;
    header["n"] = run_set.n;
    header["train_examples"] = run_set.train_names;
    header["test_examples"] = run_set.test_names;
    std::string out = dump_canonical(header);
    out.push_back('\n');
    for (const auto& run : run_set.runs) {
        out += serialize_run(run);
        out.push_back('\n');
    }
    return out;
}

RunSet load_run_log(const std::string& path) {
    return parse_run_log(read_file(path));
}

std::map<int, int> occurrence_steps(const Run& run, int example_id) {
    if (example_id < 1 || example_id > run.curriculum.n) {
        invalid(fmt::format("run '{}': example id {} out of range [1, {}] (id out of range)",
                            run.run_id, example_id, run.curriculum.n));
    }
    std::map<int, int> steps;
    for (int t = 1; t <= run.curriculum.length(); ++t) {
        const auto& batch = run.curriculum.batch(t);
        const auto count = std::count(batch.begin(), batch.end(), example_id);
        if (count > 0) {
            steps[t] = static_cast<int>(count);
        }
    }
    return steps;
}

}  // namespace trajsim
