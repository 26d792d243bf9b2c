// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Data model for training runs: curricula (ordered batches of training
// example ids), recorded per-test-example loss trajectories, and run
// collections, plus the line-delimited run-log format.
//
// Training example ids are 1-based in [1, n]; test example ids are 1-based
// in [1, m]. Batches are multisets: a repeated id counts once per copy.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace trajsim {

using Batch = std::vector<int>;

struct Curriculum {
    int n = 0;                 // size of the training-example universe
    std::vector<Batch> steps;  // steps[t-1] is the batch consumed at step t

    int length() const { return static_cast<int>(steps.size()); }
    const Batch& batch(int t) const { return steps.at(static_cast<std::size_t>(t - 1)); }

    bool operator==(const Curriculum&) const = default;
};

/// Throws Error(Validation) unless T >= 1 and every id is in [1, n].
void validate(const Curriculum& curriculum, std::string_view where = "curriculum");

struct LossTrajectory {
    int test_example_id = 0;
    double initial_loss = 0.0;         // L_0, always present
    std::map<int, double> losses;      // step t -> L_t, possibly sparse

    /// L_t if recorded; t = 0 yields L_0.
    std::optional<double> at(int t) const;

    bool operator==(const LossTrajectory&) const = default;
};

enum class Role { Past, Future };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct Run {
    std::string run_id;
    Role role = Role::Past;
    Curriculum curriculum;
    std::vector<LossTrajectory> trajectories;  // sorted by test id after parsing

    const LossTrajectory* find(int test_example_id) const;
    int length() const { return curriculum.length(); }

    bool operator==(const Run&) const = default;
};

struct RunSet {
    int n = 0;
    std::vector<std::string> train_names;  // index i-1 names training id i
    std::vector<std::string> test_names;   // index j-1 names test id j
    std::vector<Run> runs;

    int m() const { return static_cast<int>(test_names.size()); }
    std::vector<Run> with_role(Role role) const;
    const Run* find(std::string_view run_id) const;

    bool operator==(const RunSet&) const = default;
};

/// Full structural validation; throws Error(Validation) naming run and field.
void validate(const Run& run, int m, std::string_view where = {});
void validate(const RunSet& run_set);

/// Parses the run-log format: a header line followed by one run per line.
/// Errors carry the 1-based line number.
RunSet parse_run_log(std::string_view document);

/// Canonical form: stable key order, ascending test ids and step indices,
/// floats with 17 significant digits. parse_run_log inverts it exactly.
std::string serialize_run_set(const RunSet& run_set);

/// One run as a single-line JSON object (the body of a run-log line).
std::string serialize_run(const Run& run);

RunSet load_run_log(const std::string& path);

/// Steps at which `example_id` was consumed, mapped to its multiplicity there.
std::map<int, int> occurrence_steps(const Run& run, int example_id);

}  // namespace trajsim
