// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Trajectory-accuracy metrics, head-to-head method comparison over held-out
// runs, and the loss-versus-gradient cost model.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajsim/json_io.h"
#include "trajsim/run_model.h"
#include "trajsim/simulate.h"

namespace trajsim {

/// Mean over test examples of the mean squared error over that example's
/// compared steps (steps 1..T with a recorded actual loss).
double all_steps_mse(std::span<const SimulatedTrajectory> predicted,
                     std::span<const LossTrajectory> actual);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> values);

/// Pearson correlation of fractional ranks over the common test ids.
double final_step_spearman(const std::map<int, double>& predicted_finals,
                           const std::map<int, double>& actual_finals);

/// Predicts every tracked test example of a run, in the run's trajectory order.
using MethodSimulator = std::function<std::vector<SimulatedTrajectory>(const Run&)>;

struct Method {
    std::string name;
    MethodSimulator simulate;
};

struct RunMetrics {
    std::string run_id;
    std::optional<double> mse;
    std::optional<double> rho;  // nullopt: undefined (constant finals) or failure
    std::string error;
    std::vector<SimulatedTrajectory> trajectories;  // kept on request
};

struct MethodReport {
    std::string name;
    double mse_mean = 0.0;
    double mse_std = 0.0;
    double rho_mean = 0.0;
    double rho_std = 0.0;
    int runs = 0;           // runs with a defined MSE
    int rho_undefined = 0;  // runs where rho was undefined
    int failures = 0;
    std::vector<RunMetrics> per_run;
};

struct EvalReport {
    std::vector<MethodReport> methods;
    int run_count = 0;
    int test_example_count = 0;

    const MethodReport& method(std::string_view name) const;
    Json to_json(bool include_trajectories = false) const;
    std::string to_table() const;
};

/// Means and standard deviations are taken over runs (population std, so a
/// single run reports 0).
EvalReport compare_methods(std::span<const Method> methods, std::span<const Run> future_runs,
                           bool keep_trajectories = false);

struct CostReport {
    double n = 0.0;
    double m = 0.0;
    double checkpoints = 0.0;
    double loss_cost = 0.0;      // V_L
    double gradient_cost = 0.0;  // V_G
    double additive_cost = 0.0;        // 2 n m V_L
    double multiplicative_cost = 0.0;  // same as additive
    double linear_cost = 0.0;          // twice additive
    double tracin_cp_cost = 0.0;       // (n + m) K V_G
    double crossover_checkpoints = 0.0;  // n m / (n + m)

    Json to_json() const;
    std::string to_table() const;
};

CostReport cost_model(double n, double m, double checkpoints, double loss_cost,
                      double gradient_cost);

}  // namespace trajsim
