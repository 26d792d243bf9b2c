// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end pipelines shared by the CLI, the service and the acceptance
// suite: per-test-example fitting with lambda selection, and the
// held-out-run comparison of simulators against TracIn-style baselines.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajsim/analysis.h"
#include "trajsim/fitting.h"
#include "trajsim/toy_lab.h"

namespace trajsim {

struct FitRequest {
    std::vector<int> test_ids;       // empty: every tracked test example
    Variant variant = Variant::Linear;
    std::optional<double> lambda;    // nullopt: select on validation runs
    std::vector<double> grid = default_lambda_grid();
};

/// Fits one simulator per test id. With automatic lambda, a single lambda is
/// selected over all requested ids on `validation_runs` and then applied.
std::vector<SimulatorParams> fit_simulators(std::span<const Run> fit_runs,
                                            std::span<const Run> validation_runs, int m,
                                            const FitRequest& request);

/// Splits past runs into fit and validation sets: the last `validation_count`
/// past runs validate.
void split_past_runs(const RunSet& runs, int validation_count, std::vector<Run>& fit,
                     std::vector<Run>& validation);

/// A method that simulates each test id with the matching fitted params.
Method simulator_method(std::string name, std::vector<SimulatorParams> params);

/// TracIn-CP scores over `trace` for every test id in [1, m], rolled out as an
/// additive simulator with B_i = -step_scale * score_i / |CP| and then
/// optimally rescaled per test example per run.
Method tracin_cp_method(std::string name, const CheckpointTrace& trace, int n, int m,
                        double step_scale);

struct BenchmarkOptions {
    bool include_ablations = true;
    bool include_tracin_cp = true;
    bool include_tracin_all_steps = false;
    int tracin_checkpoints = 10;
    std::vector<double> grid = default_lambda_grid();
};

/// Fits every method on the collection's fit (+ validation) runs and
/// evaluates on its test runs. TracIn-CP trajectories are optimally
/// rescaled per test example per run.
EvalReport run_benchmark(const RunCollection& collection, const BenchmarkOptions& options,
                         bool keep_trajectories = false);

}  // namespace trajsim
