// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Rolling fitted simulators forward over arbitrary curricula, and the
// counterfactual curriculum edits used for what-if analysis.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "trajsim/fitting.h"
#include "trajsim/json_io.h"
#include "trajsim/run_model.h"

namespace trajsim {

struct SimulatedTrajectory {
    int test_example_id = 0;
    double initial_loss = 0.0;
    std::vector<double> losses;               // losses[t-1] is the prediction for step t
    std::optional<int> first_nonfinite_step;  // set when the rollout overflowed

    int length() const { return static_cast<int>(losses.size()); }
    double final_loss() const { return losses.empty() ? initial_loss : losses.back(); }

    bool operator==(const SimulatedTrajectory&) const = default;
};

/// L_t = alpha(c_t) L_{t-1} + beta(c_t) from L_0; no clamping.
SimulatedTrajectory simulate(const SimulatorParams& params, const Curriculum& curriculum,
                             double initial_loss);

struct BatchOutcome {
    int test_example_id = 0;
    std::optional<SimulatedTrajectory> trajectory;
    std::string error;  // non-empty iff trajectory is empty
};

/// Simulates each params' test example over `run`'s curriculum from the
/// run's recorded L_0. Output order follows `params`.
std::vector<BatchOutcome> simulate_batch(std::span<const SimulatorParams> params, const Run& run);

namespace edit {

struct RemoveExample {
    int id = 0;
};
/// Inclusive 1-based step range.
struct RemoveSteps {
    int first = 0;
    int last = 0;
};
/// Every copy of `id` in a batch becomes `count` copies.
struct DuplicateExample {
    int id = 0;
    int count = 1;
};
/// New step j is old step permutation[j-1] (1-based).
struct Reorder {
    std::vector<int> permutation;
};
struct ReplaceBatch {
    int step = 0;
    Batch batch;
};

}  // namespace edit

using CurriculumEdit = std::variant<edit::RemoveExample, edit::RemoveSteps,
                                    edit::DuplicateExample, edit::Reorder, edit::ReplaceBatch>;

/// Applies edits left to right. Removing an example drops steps whose batch
/// becomes empty. Throws Error(Edit) naming the offending edit.
Curriculum apply_edits(const Curriculum& base, std::span<const CurriculumEdit> edits);

SimulatedTrajectory what_if(const SimulatorParams& params, const Run& base_run,
                            std::span<const CurriculumEdit> edits);

Json edit_to_json(const CurriculumEdit& edit);
CurriculumEdit edit_from_json(const Json& value, std::size_t index);
std::vector<CurriculumEdit> edits_from_json(const Json& value);

Json curriculum_to_json(const Curriculum& curriculum);
Curriculum curriculum_from_json(const Json& value, std::string_view where);

Json trajectories_to_json(std::span<const SimulatedTrajectory> trajectories);
std::string serialize_trajectories(std::span<const SimulatedTrajectory> trajectories);
std::vector<SimulatedTrajectory> parse_trajectories(std::string_view document);

}  // namespace trajsim
