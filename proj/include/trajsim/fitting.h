// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Learning the linear Markov loss simulator
//
//     L_t = alpha(c_t) * L_{t-1} + beta(c_t),
//     alpha(c) = sum_{i in c} A_i,   beta(c) = sum_{i in c} B_i,
//
// from recorded runs by L2-regularized least squares. Every usable transition
// (both L_{t-1} and L_t recorded) contributes one regression row:
//
//     X = [X_alpha  X_beta],  X_alpha[s, i] = mult_i(c_{t_s}) * L_{t_s - 1},
//                             X_beta[s, i]  = mult_i(c_{t_s}),
//     y[s] = L_{t_s}.
//
// The additive ablation pins alpha = 1 and regresses the loss delta on
// X_beta; the multiplicative ablation pins beta = 0 and regresses L_t on
// X_alpha. One simulator is fit per test example.

#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "trajsim/run_model.h"

namespace trajsim {

enum class Variant { Linear, Additive, Multiplicative };

std::string_view to_string(Variant variant);
Variant variant_from_string(std::string_view text);

struct FitDiagnostics {
    int rows = 0;
    int cols = 0;
    int rank = 0;
    double rss = 0.0;            // residual sum of squares at the solution
    bool rank_deficient = false;

    bool operator==(const FitDiagnostics&) const = default;
};

struct SimulatorParams {
    int test_example_id = 0;
    Variant variant = Variant::Linear;
    Eigen::VectorXd A;  // multiplicative influence; unused by Additive
    Eigen::VectorXd B;  // additive influence; unused by Multiplicative
    double lambda = 0.0;
    FitDiagnostics diagnostics;

    int n() const { return static_cast<int>(std::max(A.size(), B.size())); }
    double alpha(const Batch& batch) const;
    double beta(const Batch& batch) const;

    bool operator==(const SimulatorParams& other) const;
};

/// One observed (or hypothetical) step of a test example's loss.
struct Transition {
    Batch batch;
    double prev_loss = 0.0;
    double next_loss = 0.0;
    std::string run_id;
    int step = 0;
};

/// Usable transitions of one test example across `runs`, in run-then-step order.
std::vector<Transition> collect_transitions(std::span<const Run> runs, int test_example_id);

struct RowOrigin {
    std::string run_id;
    int step = 0;
};

struct DesignProblem {
    Variant variant = Variant::Linear;
    int n = 0;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<RowOrigin> rows;

    int row_count() const { return static_cast<int>(X.rows()); }
    int col_count() const { return static_cast<int>(X.cols()); }
};

DesignProblem build_design(std::span<const Transition> transitions, int n, Variant variant);
DesignProblem build_design(std::span<const Run> runs, int test_example_id, Variant variant);

struct RidgeSolution {
    Eigen::VectorXd w;
    int rank = 0;                // rank of X as seen by the solver
    bool rank_deficient = false; // only meaningful for lambda == 0
};

/// argmin ||y - Xw||^2 + lambda ||w||^2. lambda > 0 solves the normal
/// equations with Cholesky; lambda == 0 returns the minimum-norm least
/// squares solution from a complete orthogonal decomposition.
RidgeSolution solve_ridge(const DesignProblem& problem, double lambda);

/// Solves the regression for a prepared problem and unpacks w into (A, B).
SimulatorParams fit_design(const DesignProblem& problem, int test_example_id, double lambda);

SimulatorParams fit_simulator(std::span<const Run> runs, int test_example_id, Variant variant,
                              double lambda);

struct UnivariateFit {
    double A = 0.0;
    double B = 0.0;
    int occurrences = 0;
};

/// Closed-form per-example fit for batch-size-1 data:
/// min sum_{t in T_i} (L_t - A L_{t-1} - B)^2 + lambda (A^2 + B^2).
UnivariateFit fit_univariate_bs1(std::span<const Run> runs, int test_example_id,
                                 int train_example_id, double lambda);

/// B_i = -(mean loss reduction over the steps consuming example i), pooled
/// over runs. Batch size 1 only. Examples never consumed are nullopt.
std::vector<std::optional<double>> closed_form_additive(std::span<const Run> runs,
                                                        int test_example_id);

/// {0} together with 10^e for e = -6..1.
std::vector<double> default_lambda_grid();

struct LambdaScore {
    double lambda = 0.0;
    std::optional<double> validation_mse;  // nullopt when a fit failed
};

struct LambdaSelection {
    double lambda = 0.0;
    std::vector<LambdaScore> scores;
};

/// Picks the grid value with the smallest mean all-steps validation MSE of
/// full-trajectory simulation; ties go to the larger lambda.
LambdaSelection select_lambda(std::span<const Run> fit_runs, std::span<const Run> validation_runs,
                              std::span<const int> test_ids, Variant variant,
                              std::span<const double> grid);

struct IdentifiabilityReport {
    int rows = 0;
    int cols = 0;
    int rank = 0;
    double tolerance = 0.0;
    std::vector<double> singular_values;
    bool too_few_rows = false;         // S < number of parameters
    std::vector<int> under_observed;   // ids seen fewer times than needed
    std::vector<int> constant_loss;    // ids whose alpha and beta columns are parallel

    bool full_rank() const { return rank == cols; }
    bool passes() const {
        return full_rank() && !too_few_rows && under_observed.empty() && constant_loss.empty();
    }
};

IdentifiabilityReport check_identifiability(const DesignProblem& problem);

/// Numerical rank with tolerance max(S, p) * eps * sigma_max.
int numerical_rank(const Eigen::MatrixXd& matrix, double* tolerance = nullptr,
                   std::vector<double>* singular_values = nullptr);

/// Versioned document holding one or more fitted simulators.
std::string serialize_params(std::span<const SimulatorParams> params);
std::vector<SimulatorParams> parse_params(std::string_view document);

}  // namespace trajsim
