// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Gradient- and loss-based influence baselines, each usable both as a score
// and as an additive simulator:
//
//   TracIn-Ideal       sum of actual loss reductions at the steps consuming z_i
//   TracIn-CP          sum over checkpoints of eta_t <grad L_t(z_i), grad L_t(z)>
//   influence function <grad L(z_i), H^{-1} grad L(z)> at the final checkpoint
//
// The additive parameters implied by a score are B_i = -score_i / normalizer_i.

#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "trajsim/fitting.h"
#include "trajsim/run_model.h"
#include "trajsim/simulate.h"

namespace trajsim {

enum class InfluenceMethod { TracInIdeal, ExpectedTracInIdeal, TracInCP, InfluenceFunction };

std::string_view to_string(InfluenceMethod method);
InfluenceMethod influence_method_from_string(std::string_view text);

struct InfluenceScores {
    int test_example_id = 0;
    InfluenceMethod method = InfluenceMethod::TracInIdeal;
    Eigen::VectorXd scores;           // index i-1 scores training id i
    std::vector<double> normalizers;  // occurrence (or checkpoint) counts; 0 marks an absent entry

    int n() const { return static_cast<int>(scores.size()); }
    bool present(int id) const { return normalizers.at(static_cast<std::size_t>(id - 1)) > 0.0; }
};

class GradientSource;

struct Checkpoint {
    std::string run_id;
    int step = 0;        // parameters after `step` updates
    double eta = 0.0;    // learning rate of the update that follows
    Eigen::VectorXd theta;
    std::shared_ptr<const GradientSource> source;
};

/// Model-specific access to losses, gradients and the training-loss Hessian
/// at a checkpoint.
class GradientSource {
public:
    virtual ~GradientSource() = default;

    virtual int train_count() const = 0;
    virtual int test_count() const = 0;
    virtual Eigen::VectorXd train_gradient(const Checkpoint& checkpoint, int train_id) const = 0;
    virtual Eigen::VectorXd test_gradient(const Checkpoint& checkpoint, int test_id) const = 0;
    virtual double test_loss(const Checkpoint& checkpoint, int test_id) const = 0;
    virtual Eigen::MatrixXd training_hessian(const Checkpoint& checkpoint) const = 0;
};

struct CheckpointTrace {
    std::vector<Checkpoint> checkpoints;

    int size() const { return static_cast<int>(checkpoints.size()); }
    /// Training-universe size reported by the checkpoints' source.
    int train_count() const;
    /// `count` checkpoints at evenly spaced positions (first and last included).
    CheckpointTrace evenly_spaced(int count) const;
    /// Concatenates traces, e.g. from several runs.
    static CheckpointTrace concat(std::span<const CheckpointTrace> traces);
};

/// Throws Error(Validation) on non-increasing steps within a run or on
/// checkpoints without a gradient source.
void validate(const CheckpointTrace& trace);

/// eta * <train_grad, test_grad>.
double hypothetical_loss_reduction(const Eigen::VectorXd& train_grad,
                                   const Eigen::VectorXd& test_grad, double eta);

InfluenceScores tracin_ideal(const Run& run, int test_example_id);

/// Mean over the runs that contain each example of the per-run scores.
InfluenceScores expected_tracin_ideal(std::span<const Run> runs, int test_example_id);

InfluenceScores tracin_cp(const CheckpointTrace& trace, std::span<const int> train_ids,
                          int test_example_id);

/// B_i = -(1/|CP|) sum_cp eta <grad L(z_i), grad L(z)>. Ids outside
/// `train_ids` stay 0.
Eigen::VectorXd hypothetical_additive_fit(const CheckpointTrace& trace,
                                          std::span<const int> train_ids, int test_example_id);

/// One transition per (checkpoint, train id): a one-example batch taking the
/// checkpoint's test loss to its first-order hypothetical successor.
std::vector<Transition> hypothetical_transitions(const CheckpointTrace& trace,
                                                 std::span<const int> train_ids,
                                                 int test_example_id);

SimulatorParams hypothetical_linear_fit(const CheckpointTrace& trace,
                                        std::span<const int> train_ids, int test_example_id,
                                        double lambda);

/// <train_grad, H^{-1} test_grad> via a Cholesky solve; H must be SPD.
double influence_function_score(const Eigen::VectorXd& train_grad,
                                const Eigen::VectorXd& test_grad,
                                const Eigen::MatrixXd& hessian);

/// Influence-function scores at the trace's final checkpoint.
InfluenceScores influence_function_scores(const CheckpointTrace& trace,
                                          std::span<const int> train_ids, int test_example_id);

/// Additive fit with one second-order (Newton) hypothetical step at the
/// final checkpoint: B_i = -<grad L(z_i), H^{-1} grad L(z)>.
Eigen::VectorXd second_order_additive_fit(const CheckpointTrace& trace,
                                          std::span<const int> train_ids, int test_example_id);

/// Additive rollout with B_i = -step_scale * score_i / normalizer_i; absent
/// entries contribute 0. step_scale accounts for batch-mean updates.
SimulatedTrajectory simulate_from_scores(const InfluenceScores& scores,
                                         const Curriculum& curriculum, double initial_loss,
                                         double step_scale = 1.0);

struct Rescaled {
    double sigma = 1.0;
    std::vector<double> trajectory;
};

/// sigma = argmin sum_t (sigma * predicted_t - actual_t)^2.
Rescaled optimal_rescale(std::span<const double> predicted, std::span<const double> actual);

std::string serialize_scores(const InfluenceScores& scores);
InfluenceScores parse_scores(std::string_view document);

}  // namespace trajsim
