// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth producers for tests and benchmarks:
//  - a softmax-regression toy trainer (vanilla SGD, analytic gradients and
//    Hessians) that records real loss trajectories and checkpoints;
//  - a synthetic run generator that rolls losses forward with known
//    simulator parameters;
//  - the block-diagonal batching matrix whose curriculum, repeated twice,
//    makes the linear design identifiable in exactly 2n steps.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "trajsim/baselines.h"
#include "trajsim/fitting.h"
#include "trajsim/rng.h"
#include "trajsim/run_model.h"

namespace trajsim {

// ---------------------------------------------------------------------------
// Dataset and model

struct ToyDatasetConfig {
    int train_count = 100;
    int test_count = 24;
    int dim = 8;
    int classes = 3;
    double separation = 1.0;  // scale of the class means
    double noise = 1.0;       // within-class standard deviation
    std::uint64_t seed = 0;
};

/// Gaussian-mixture classification data. Rows are feature vectors.
struct ToyDataset {
    int dim = 0;
    int classes = 0;
    Eigen::MatrixXd train_x;
    Eigen::VectorXi train_y;
    Eigen::MatrixXd test_x;
    Eigen::VectorXi test_y;
    std::uint64_t seed = 0;

    int train_count() const { return static_cast<int>(train_x.rows()); }
    int test_count() const { return static_cast<int>(test_x.rows()); }
};

ToyDataset make_toy_dataset(const ToyDatasetConfig& config);

/// Multinomial logistic regression with a bias, parameters laid out class by
/// class: theta[c * (dim + 1) + j]. Per-example training loss is
/// cross-entropy + (l2 / 2) ||theta||^2; test loss is plain cross-entropy.
class SoftmaxModel {
public:
    SoftmaxModel(int dim, int classes, double l2) : dim_(dim), classes_(classes), l2_(l2) {}

    int dim() const { return dim_; }
    int classes() const { return classes_; }
    double l2() const { return l2_; }
    int parameter_count() const { return classes_ * (dim_ + 1); }

    double cross_entropy(const Eigen::VectorXd& theta, const Eigen::VectorXd& x, int label) const;
    Eigen::VectorXd cross_entropy_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                                           int label) const;
    Eigen::MatrixXd cross_entropy_hessian(const Eigen::VectorXd& theta,
                                          const Eigen::VectorXd& x) const;

    /// Mean training objective over `ids` (1-based rows of dataset.train_x).
    double training_loss(const Eigen::VectorXd& theta, const ToyDataset& data,
                         std::span<const int> ids) const;
    Eigen::VectorXd training_gradient(const Eigen::VectorXd& theta, const ToyDataset& data,
                                      std::span<const int> ids) const;
    Eigen::MatrixXd training_hessian(const Eigen::VectorXd& theta, const ToyDataset& data,
                                     std::span<const int> ids) const;

    double test_loss(const Eigen::VectorXd& theta, const ToyDataset& data, int test_id) const;

private:
    Eigen::VectorXd probabilities(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) const;

    int dim_;
    int classes_;
    double l2_;
};

/// theta - eta * gradient.
Eigen::VectorXd sgd_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& gradient,
                         double eta);

/// Gradient access for checkpoints of one toy run; the training-loss Hessian
/// averages over `hessian_ids` (the run's distinct training examples).
class ToyGradientSource final : public GradientSource {
public:
    ToyGradientSource(std::shared_ptr<const ToyDataset> data, SoftmaxModel model,
                      std::vector<int> hessian_ids);

    int train_count() const override { return data_->train_count(); }
    int test_count() const override { return data_->test_count(); }
    Eigen::VectorXd train_gradient(const Checkpoint& checkpoint, int train_id) const override;
    Eigen::VectorXd test_gradient(const Checkpoint& checkpoint, int test_id) const override;
    double test_loss(const Checkpoint& checkpoint, int test_id) const override;
    Eigen::MatrixXd training_hessian(const Checkpoint& checkpoint) const override;

    const SoftmaxModel& model() const { return model_; }
    const ToyDataset& data() const { return *data_; }

private:
    std::shared_ptr<const ToyDataset> data_;
    SoftmaxModel model_;
    std::vector<int> hessian_ids_;
};

// ---------------------------------------------------------------------------
// Training

/// Constant learning rate with optional linear decay to
/// initial * final_fraction at the last step.
struct EtaSchedule {
    double initial = 0.1;
    double final_fraction = 1.0;

    /// Rate of update number `step` (1-based) in a run of `total_steps`.
    double at(int step, int total_steps) const;
};

struct ToyTrainConfig {
    double l2 = 1e-3;
    EtaSchedule eta;
    int checkpoint_every = 1;
    double init_scale = 0.0;  // 0 gives theta_0 = 0
    std::uint64_t seed = 0;
    std::string run_id = "run";
    Role role = Role::Past;
};

struct ToyTrainingResult {
    Run run;
    CheckpointTrace trace;
    Eigen::VectorXd final_theta;
};

/// Vanilla SGD on batch-mean gradients, recording every test loss before
/// training and after every step. Checkpoints at step 0, every
/// `checkpoint_every` steps, and the final step.
ToyTrainingResult train_toy(std::shared_ptr<const ToyDataset> data, const Curriculum& curriculum,
                            const ToyTrainConfig& config);

/// Minimizer of the mean training objective over `ids` (Newton's method).
Eigen::VectorXd fit_to_optimum(const ToyDataset& data, std::span<const int> ids,
                               const SoftmaxModel& model, int max_iterations = 100,
                               double gradient_tolerance = 1e-12);

// ---------------------------------------------------------------------------
// Batching matrix and synthetic runs

struct BatchingMatrix {
    Eigen::MatrixXi Q;  // Q(i, j) = 1 iff step i's batch contains example j+1
    int batch_size = 0;
    int blocks = 0;

    int n() const { return static_cast<int>(Q.rows()); }
};

/// Block-diagonal Q with (k+1) x (k+1) blocks U = 11^T - I.
BatchingMatrix build_batching_matrix(int n, int k);

/// Step t (1-based) consumes row (t-1) mod n of Q; length repeats * n.
Curriculum curriculum_from_Q(const BatchingMatrix& batching, int repeats);

enum class CurriculumSource { BatchingMatrix, ShuffledEpochs };

struct SyntheticConfig {
    int run_count = 1;
    CurriculumSource source = CurriculumSource::ShuffledEpochs;
    int batch_size = 1;
    int repeats = 2;  // BatchingMatrix only
    int epochs = 2;   // ShuffledEpochs only
    double l0_min = 1.0;
    double l0_max = 3.0;
    double noise_sigma = 0.0;
    int future_runs = 0;  // the last `future_runs` runs are tagged Future
    std::uint64_t seed = 0;
};

/// Runs whose losses follow the simulator recursion of `true_params` (one
/// tracked test example per params entry, same n) plus Gaussian noise on
/// each recorded loss.
RunSet generate_synthetic_runs(std::span<const SimulatorParams> true_params,
                               const SyntheticConfig& config);

/// Random well-behaved LINEAR parameters: A_i in [a_min, a_max], |B_i| in
/// [b_min, b_max] with random sign.
SimulatorParams draw_linear_params(int n, int test_example_id, Rng& rng, double a_min = 0.42,
                                   double a_max = 0.5, double b_min = 0.02, double b_max = 0.1);

// ---------------------------------------------------------------------------
// Run collections

struct RunCollectionConfig {
    ToyDatasetConfig dataset;
    int runs = 32;
    int per_run = 64;     // examples drawn from the pool for each run
    int epochs = 4;
    int batch_size = 4;
    int fit_runs = 20;
    int validation_runs = 2;
    int test_runs = 10;
    double l2 = 1e-3;
    EtaSchedule eta;
    int checkpoint_every = 1;
    std::uint64_t seed = 0;
};

/// Runs are ordered fit, validation, test; the first two groups are Past.
struct RunCollection {
    std::shared_ptr<const ToyDataset> dataset;
    RunCollectionConfig config;
    RunSet runs;
    std::vector<CheckpointTrace> traces;  // parallel to runs.runs

    std::vector<Run> fit_runs() const;
    std::vector<Run> validation_runs() const;
    std::vector<Run> test_runs() const;
    std::span<const CheckpointTrace> fit_traces() const;
};

RunCollection make_run_collection(const RunCollectionConfig& config);

// ---------------------------------------------------------------------------
// Config documents

/// Flat `key = value` document; '#' starts a comment. Duplicate keys are errors.
using FlatConfig = std::map<std::string, std::string, std::less<>>;
FlatConfig parse_flat_config(std::string_view document);

/// Unknown keys are errors (except `mode`, which selects the generator).
RunCollectionConfig parse_collection_config(const FlatConfig& config);
RunCollectionConfig parse_collection_config(std::string_view document);
std::string serialize_collection_config(const RunCollectionConfig& config);

/// Synthetic generation with randomly drawn LINEAR ground truth.
struct SyntheticSetup {
    int n = 30;
    int test_count = 3;
    SyntheticConfig runs;
};
SyntheticSetup parse_synthetic_config(const FlatConfig& config);
/// One draw_linear_params per test example, seeded from the setup.
std::vector<SimulatorParams> synthetic_truth(const SyntheticSetup& setup);

/// Sidecar document: one line per run with flattened parameters per checkpoint.
std::string serialize_traces(std::span<const CheckpointTrace> traces);
/// Re-attaches gradient access through `source_for_run(run_id)`.
std::vector<CheckpointTrace> parse_traces(
    std::string_view document,
    const std::function<std::shared_ptr<const GradientSource>(const std::string&)>& source_for_run);

}  // namespace trajsim
