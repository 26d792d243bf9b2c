// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/baselines.h"

#include <cmath>

#include <fmt/format.h>

#include "trajsim/error.h"
#include "trajsim/json_io.h"

namespace trajsim {
namespace {

constexpr std::string_view kScoresFormat = "trajsim-scores";
constexpr int kScoresVersion = 1;

InfluenceScores empty_scores(int test_example_id, InfluenceMethod method, int n) {
    InfluenceScores s;
    s.test_example_id = test_example_id;
    s.method = method;
    s.scores = Eigen::VectorXd::Zero(n);
    s.normalizers.assign(static_cast<std::size_t>(n), 0.0);
    return s;
}

void require_nonempty(const CheckpointTrace& trace) {
    if (trace.checkpoints.empty()) {
        throw Error(ErrorKind::NoData, "checkpoint trace is empty");
    }
    for (const auto& cp : trace.checkpoints) {
        if (!cp.source) {
            throw Error(ErrorKind::NoData,
                        fmt::format("checkpoint (run '{}', step {}) has no gradient source",
                                    cp.run_id, cp.step));
        }
    }
}

void check_train_ids(std::span<const int> train_ids, int n) {
    for (const int id : train_ids) {
        if (id < 1 || id > n) {
            throw Error(ErrorKind::Validation,
                        fmt::format("training id {} out of range [1, {}]", id, n));
        }
    }
}

Eigen::LLT<Eigen::MatrixXd> factor_hessian(const Eigen::MatrixXd& hessian) {
    if (hessian.rows() != hessian.cols()) {
        throw Error(ErrorKind::DimensionMismatch, "Hessian is not square");
    }
    const double scale = std::max(1.0, hessian.cwiseAbs().maxCoeff());
    if (!hessian.allFinite() || !hessian.isApprox(hessian.transpose(), 1e-12 * scale)) {
        throw Error(ErrorKind::Conditioning, "Hessian is not symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::Conditioning, "Hessian is not positive definite (Cholesky failed)");
    }
    return llt;
}

}  // namespace

std::string_view to_string(InfluenceMethod method) {
    switch (method) {
        case InfluenceMethod::TracInIdeal: return "tracin-ideal";
        case InfluenceMethod::ExpectedTracInIdeal: return "expected-tracin-ideal";
        case InfluenceMethod::TracInCP: return "tracin-cp";
        case InfluenceMethod::InfluenceFunction: return "influence-function";
    }
    return "tracin-ideal";
}

InfluenceMethod influence_method_from_string(std::string_view text) {
    for (const auto method : {InfluenceMethod::TracInIdeal, InfluenceMethod::ExpectedTracInIdeal,
                              InfluenceMethod::TracInCP, InfluenceMethod::InfluenceFunction}) {
        if (text == to_string(method)) return method;
    }
    throw Error(ErrorKind::Validation, fmt::format("unknown influence method '{}'", text));
}

int CheckpointTrace::train_count() const {
    if (checkpoints.empty() || !checkpoints.front().source) return 0;
    return checkpoints.front().source->train_count();
}

CheckpointTrace CheckpointTrace::evenly_spaced(int count) const {
    if (count < 1) {
        throw Error(ErrorKind::Config, "checkpoint count must be >= 1");
    }
    const int total = size();
    if (count >= total) return *this;
    CheckpointTrace picked;
    if (count == 1) {
        picked.checkpoints.push_back(checkpoints.back());
        return picked;
    }
    for (int k = 0; k < count; ++k) {
        const auto index = static_cast<std::size_t>(
            std::llround(static_cast<double>(k) * (total - 1) / (count - 1)));
        picked.checkpoints.push_back(checkpoints[index]);
    }
    return picked;
}

CheckpointTrace CheckpointTrace::concat(std::span<const CheckpointTrace> traces) {
    CheckpointTrace joined;
    for (const auto& trace : traces) {
        joined.checkpoints.insert(joined.checkpoints.end(), trace.checkpoints.begin(),
                                  trace.checkpoints.end());
    }
    return joined;
}

void validate(const CheckpointTrace& trace) {
    Eigen::Index dim = -1;
    for (std::size_t k = 0; k < trace.checkpoints.size(); ++k) {
        const Checkpoint& cp = trace.checkpoints[k];
        if (!cp.source) {
            throw Error(ErrorKind::Validation, fmt::format("checkpoint {}: no gradient source", k));
        }
        if (dim >= 0 && cp.theta.size() != dim) {
            throw Error(ErrorKind::Validation,
                        fmt::format("checkpoint {}: parameter dimension {} differs from {}", k,
                                    cp.theta.size(), dim));
        }
        dim = cp.theta.size();
        if (!(cp.eta >= 0.0)) {
            throw Error(ErrorKind::Validation, fmt::format("checkpoint {}: eta must be >= 0", k));
        }
        if (k > 0 && trace.checkpoints[k - 1].run_id == cp.run_id &&
            trace.checkpoints[k - 1].step >= cp.step) {
            throw Error(ErrorKind::Validation,
                        fmt::format("checkpoint {}: steps not strictly increasing in run '{}'", k,
                                    cp.run_id));
        }
    }
}

double hypothetical_loss_reduction(const Eigen::VectorXd& train_grad,
                                   const Eigen::VectorXd& test_grad, double eta) {
    if (train_grad.size() != test_grad.size()) {
        throw Error(ErrorKind::DimensionMismatch,
                    fmt::format("gradient dimensions differ: {} vs {}", train_grad.size(),
                                test_grad.size()));
    }
    if (!(eta >= 0.0)) {
        throw Error(ErrorKind::Validation, "eta must be >= 0");
    }
    return eta * train_grad.dot(test_grad);
}

InfluenceScores tracin_ideal(const Run& run, int test_example_id) {
    const LossTrajectory* trajectory = run.find(test_example_id);
    if (trajectory == nullptr) {
        throw Error(ErrorKind::NoData, fmt::format("run '{}' does not track test example {}",
                                                   run.run_id, test_example_id));
    }
    InfluenceScores s = empty_scores(test_example_id, InfluenceMethod::TracInIdeal, run.curriculum.n);
    for (int t = 1; t <= run.length(); ++t) {
        const Batch& batch = run.curriculum.batch(t);
        if (batch.size() != 1) {
            throw Error(ErrorKind::Unsupported,
                        fmt::format("run '{}' step {}: TracIn-Ideal needs batch size 1, got {}",
                                    run.run_id, t, batch.size()));
        }
        const auto prev = trajectory->at(t - 1);
        const auto next = trajectory->at(t);
        if (!prev || !next) continue;
        const auto i = static_cast<std::size_t>(batch.front() - 1);
        s.scores[static_cast<Eigen::Index>(i)] += *prev - *next;
        s.normalizers[i] += 1.0;
    }
    return s;
}

InfluenceScores expected_tracin_ideal(std::span<const Run> runs, int test_example_id) {
    if (runs.empty()) {
        throw Error(ErrorKind::NoData, "no runs to average over");
    }
    const int n = runs.front().curriculum.n;
    InfluenceScores s = empty_scores(test_example_id, InfluenceMethod::ExpectedTracInIdeal, n);
    std::vector<int> containing(static_cast<std::size_t>(n), 0);
    for (const auto& run : runs) {
        if (run.find(test_example_id) == nullptr) continue;
        const InfluenceScores single = tracin_ideal(run, test_example_id);
        for (int i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            if (single.normalizers[k] == 0.0) continue;
            s.scores[i] += single.scores[i];
            s.normalizers[k] += single.normalizers[k];
            containing[k] += 1;
        }
    }
    // Mean score and mean occurrence count over the runs containing each example,
    // so that -score / normalizer is the pooled per-occurrence mean drop.
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (containing[k] == 0) continue;
        s.scores[i] /= containing[k];
        s.normalizers[k] /= containing[k];
    }
    return s;
}

InfluenceScores tracin_cp(const CheckpointTrace& trace, std::span<const int> train_ids,
                          int test_example_id) {
    require_nonempty(trace);
    const int n = trace.train_count();
    check_train_ids(train_ids, n);
    InfluenceScores s = empty_scores(test_example_id, InfluenceMethod::TracInCP, n);
    for (const auto& cp : trace.checkpoints) {
        const Eigen::VectorXd test_grad = cp.source->test_gradient(cp, test_example_id);
        for (const int id : train_ids) {
            s.scores[id - 1] +=
                hypothetical_loss_reduction(cp.source->train_gradient(cp, id), test_grad, cp.eta);
        }
    }
    for (const int id : train_ids) {
        s.normalizers[static_cast<std::size_t>(id - 1)] = trace.size();
    }
    return s;
}

Eigen::VectorXd hypothetical_additive_fit(const CheckpointTrace& trace,
                                          std::span<const int> train_ids, int test_example_id) {
    const InfluenceScores s = tracin_cp(trace, train_ids, test_example_id);
    Eigen::VectorXd B = Eigen::VectorXd::Zero(s.n());
    const double count = trace.size();
    for (const int id : train_ids) {
        B[id - 1] = -s.scores[id - 1] / count;
    }
    return B;
}

std::vector<Transition> hypothetical_transitions(const CheckpointTrace& trace,
                                                 std::span<const int> train_ids,
                                                 int test_example_id) {
    require_nonempty(trace);
    check_train_ids(train_ids, trace.train_count());
    std::vector<Transition> transitions;
    transitions.reserve(trace.checkpoints.size() * train_ids.size());
    for (const auto& cp : trace.checkpoints) {
        const double loss = cp.source->test_loss(cp, test_example_id);
        const Eigen::VectorXd test_grad = cp.source->test_gradient(cp, test_example_id);
        for (const int id : train_ids) {
            const double drop =
                hypothetical_loss_reduction(cp.source->train_gradient(cp, id), test_grad, cp.eta);
            transitions.push_back({Batch{id}, loss, loss - drop, cp.run_id, cp.step});
        }
    }
    return transitions;
}

SimulatorParams hypothetical_linear_fit(const CheckpointTrace& trace,
                                        std::span<const int> train_ids, int test_example_id,
                                        double lambda) {
    const auto transitions = hypothetical_transitions(trace, train_ids, test_example_id);
    const DesignProblem problem = build_design(transitions, trace.train_count(), Variant::Linear);
    return fit_design(problem, test_example_id, lambda);
}

double influence_function_score(const Eigen::VectorXd& train_grad,
                                const Eigen::VectorXd& test_grad,
                                const Eigen::MatrixXd& hessian) {
    if (train_grad.size() != test_grad.size() || hessian.rows() != test_grad.size()) {
        throw Error(ErrorKind::DimensionMismatch, "gradient and Hessian dimensions disagree");
    }
    const auto llt = factor_hessian(hessian);
    return train_grad.dot(llt.solve(test_grad));
}

InfluenceScores influence_function_scores(const CheckpointTrace& trace,
                                          std::span<const int> train_ids, int test_example_id) {
    require_nonempty(trace);
    const int n = trace.train_count();
    check_train_ids(train_ids, n);
    const Checkpoint& final_cp = trace.checkpoints.back();
    const Eigen::MatrixXd hessian = final_cp.source->training_hessian(final_cp);
    const Eigen::VectorXd test_grad = final_cp.source->test_gradient(final_cp, test_example_id);
    if (hessian.rows() != test_grad.size()) {
        throw Error(ErrorKind::DimensionMismatch, "gradient and Hessian dimensions disagree");
    }
    const Eigen::VectorXd u = factor_hessian(hessian).solve(test_grad);
    InfluenceScores s = empty_scores(test_example_id, InfluenceMethod::InfluenceFunction, n);
    for (const int id : train_ids) {
        const Eigen::VectorXd g = final_cp.source->train_gradient(final_cp, id);
        if (g.size() != u.size()) {
            throw Error(ErrorKind::DimensionMismatch, "gradient and Hessian dimensions disagree");
        }
        s.scores[id - 1] = g.dot(u);
        s.normalizers[static_cast<std::size_t>(id - 1)] = 1.0;
    }
    return s;
}

Eigen::VectorXd second_order_additive_fit(const CheckpointTrace& trace,
                                          std::span<const int> train_ids, int test_example_id) {
    return -influence_function_scores(trace, train_ids, test_example_id).scores;
}

SimulatedTrajectory simulate_from_scores(const InfluenceScores& scores,
                                         const Curriculum& curriculum, double initial_loss,
                                         double step_scale) {
    SimulatorParams params;
    params.test_example_id = scores.test_example_id;
    params.variant = Variant::Additive;
    params.A = Eigen::VectorXd::Zero(scores.n());
    params.B = Eigen::VectorXd::Zero(scores.n());
    for (int i = 1; i <= scores.n(); ++i) {
        if (scores.present(i)) {
            params.B[i - 1] =
                -step_scale * scores.scores[i - 1] / scores.normalizers[static_cast<std::size_t>(i - 1)];
        }
    }
    return simulate(params, curriculum, initial_loss);
}

Rescaled optimal_rescale(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size()) {
        throw Error(ErrorKind::DimensionMismatch,
                    fmt::format("trajectory lengths differ: {} vs {}", predicted.size(),
                                actual.size()));
    }
    double cross = 0.0;
    double norm = 0.0;
    for (std::size_t t = 0; t < predicted.size(); ++t) {
        cross += predicted[t] * actual[t];
        norm += predicted[t] * predicted[t];
    }
    if (norm == 0.0) {
        throw Error(ErrorKind::UndefinedSigma, "predicted trajectory is identically zero");
    }
    Rescaled out;
    out.sigma = cross / norm;
    out.trajectory.reserve(predicted.size());
    for (const double v : predicted) out.trajectory.push_back(out.sigma * v);
    return out;
}

std::string serialize_scores(const InfluenceScores& scores) {
    Json document = Json::object();
    document["format"] = std::string(kScoresFormat);
    document["version"] = kScoresVersion;
    document["test_example_id"] = scores.test_example_id;
    document["method"] = std::string(to_string(scores.method));
    document["n"] = scores.n();
    Json values = Json::array();
    for (int i = 0; i < scores.n(); ++i) values.push_back(scores.scores[i]);
    document["scores"] = std::move(values);
    Json normalizers = Json::array();
    for (const double v : scores.normalizers) normalizers.push_back(v);
    document["normalizers"] = std::move(normalizers);
    return dump_canonical(document) + "\n";
}

InfluenceScores parse_scores(std::string_view document) {
    const Json root = parse_json(document, "scores");
    if (field::string(root, "format", "scores") != kScoresFormat ||
        field::integer(root, "version", "scores") != kScoresVersion) {
        throw Error(ErrorKind::Parse, "scores: not a trajsim-scores v1 document");
    }
    const int n = static_cast<int>(field::integer(root, "n", "scores"));
    InfluenceScores s = empty_scores(static_cast<int>(field::integer(root, "test_example_id", "scores")),
                                     influence_method_from_string(field::string(root, "method", "scores")),
                                     n);
    const Json& values = field::require(root, "scores", "scores");
    const Json& normalizers = field::require(root, "normalizers", "scores");
    if (!values.is_array() || !normalizers.is_array() || static_cast<int>(values.size()) != n ||
        static_cast<int>(normalizers.size()) != n) {
        throw Error(ErrorKind::Parse, fmt::format("scores: expected {} scores and normalizers", n));
    }
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        s.scores[i] = field::as_number(values[k], "scores.scores");
        s.normalizers[k] = field::as_number(normalizers[k], "scores.normalizers");
    }
    if (!s.scores.allFinite()) {
        throw Error(ErrorKind::Validation, "scores: entries must be finite");
    }
    return s;
}

}  // namespace trajsim
