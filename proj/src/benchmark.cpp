// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/benchmark.h"

#include <map>
#include <memory>
#include <numeric>

#include <fmt/format.h>

#include "trajsim/baselines.h"
#include "trajsim/error.h"
#include "trajsim/simulate.h"

namespace trajsim {
namespace {

// Additive rollout of TracIn-CP scores, rescaled by the per-trajectory
// optimal sigma against the recorded losses of the run being evaluated.
Method tracin_method(std::string name, std::vector<InfluenceScores> scores, double step_scale) {
    auto by_id = std::make_shared<std::map<int, InfluenceScores>>();
    for (auto& s : scores) by_id->emplace(s.test_example_id, std::move(s));
    return {std::move(name), [by_id, step_scale](const Run& run) {
                std::vector<SimulatedTrajectory> out;
                for (const auto& observed : run.trajectories) {
                    const auto it = by_id->find(observed.test_example_id);
                    if (it == by_id->end()) continue;
                    SimulatedTrajectory predicted = simulate_from_scores(
                        it->second, run.curriculum, observed.initial_loss, step_scale);
                    std::vector<double> p;
                    std::vector<double> a;
                    for (const auto& [t, loss] : observed.losses) {
                        p.push_back(predicted.losses[static_cast<std::size_t>(t - 1)]);
                        a.push_back(loss);
                    }
                    const double sigma = optimal_rescale(p, a).sigma;
                    for (double& v : predicted.losses) v *= sigma;
                    out.push_back(std::move(predicted));
                }
                return out;
            }};
}

std::vector<InfluenceScores> score_all(const CheckpointTrace& trace, int n, int m) {
    std::vector<int> train_ids(static_cast<std::size_t>(n));
    std::iota(train_ids.begin(), train_ids.end(), 1);
    std::vector<InfluenceScores> scores;
    for (int j = 1; j <= m; ++j) scores.push_back(tracin_cp(trace, train_ids, j));
    return scores;
}

}  // namespace

Method tracin_cp_method(std::string name, const CheckpointTrace& trace, int n, int m,
                        double step_scale) {
    return tracin_method(std::move(name), score_all(trace, n, m), step_scale);
}

std::vector<SimulatorParams> fit_simulators(std::span<const Run> fit_runs,
                                            std::span<const Run> validation_runs, int m,
                                            const FitRequest& request) {
    std::vector<int> ids = request.test_ids;
    if (ids.empty()) {
        ids.resize(static_cast<std::size_t>(m));
        std::iota(ids.begin(), ids.end(), 1);
    }
    for (const int id : ids) {
        if (id < 1 || id > m) {
            throw Error(ErrorKind::Validation, fmt::format("test id {} out of range [1, {}]", id, m));
        }
    }
    double lambda = 0.0;
    if (request.lambda) {
        lambda = *request.lambda;
    } else {
        if (validation_runs.empty()) {
            throw Error(ErrorKind::Config, "automatic lambda needs at least one validation run");
        }
        lambda = select_lambda(fit_runs, validation_runs, ids, request.variant, request.grid).lambda;
    }
    std::vector<SimulatorParams> params;
    params.reserve(ids.size());
    for (const int id : ids) {
        params.push_back(fit_simulator(fit_runs, id, request.variant, lambda));
    }
    return params;
}

void split_past_runs(const RunSet& runs, int validation_count, std::vector<Run>& fit,
                     std::vector<Run>& validation) {
    std::vector<Run> past = runs.with_role(Role::Past);
    if (validation_count < 0 || validation_count >= static_cast<int>(past.size())) {
        throw Error(ErrorKind::Config,
                    fmt::format("cannot hold out {} of {} past runs for validation",
                                validation_count, past.size()));
    }
    const auto cut = past.end() - validation_count;
    fit.assign(past.begin(), cut);
    validation.assign(cut, past.end());
}

Method simulator_method(std::string name, std::vector<SimulatorParams> params) {
    auto by_id = std::make_shared<std::map<int, SimulatorParams>>();
    for (auto& p : params) by_id->emplace(p.test_example_id, std::move(p));
    return {std::move(name), [by_id](const Run& run) {
                std::vector<SimulatedTrajectory> out;
                for (const auto& observed : run.trajectories) {
                    const auto it = by_id->find(observed.test_example_id);
                    if (it == by_id->end()) continue;
                    out.push_back(simulate(it->second, run.curriculum, observed.initial_loss));
                }
                return out;
            }};
}

EvalReport run_benchmark(const RunCollection& collection, const BenchmarkOptions& options,
                         bool keep_trajectories) {
    const auto fit = collection.fit_runs();
    const auto validation = collection.validation_runs();
    const auto test = collection.test_runs();
    const int n = collection.runs.n;
    const int m = collection.runs.m();

    std::vector<Method> methods;
    auto add_simulator = [&](std::string name, Variant variant) {
        FitRequest request;
        request.variant = variant;
        request.grid = options.grid;
        methods.push_back(simulator_method(std::move(name), fit_simulators(fit, validation, m, request)));
    };
    add_simulator("linear", Variant::Linear);
    if (options.include_ablations) {
        add_simulator("additive", Variant::Additive);
        add_simulator("multiplicative", Variant::Multiplicative);
    }
    // The trainer averages gradients over a batch, so one example's share of
    // an update is eta / batch_size.
    const double step_scale = 1.0 / collection.config.batch_size;
    const CheckpointTrace all_steps = CheckpointTrace::concat(collection.fit_traces());
    if (options.include_tracin_cp) {
        const CheckpointTrace subset = all_steps.evenly_spaced(options.tracin_checkpoints);
        methods.push_back(tracin_cp_method("tracin-cp", subset, n, m, step_scale));
    }
    if (options.include_tracin_all_steps) {
        methods.push_back(tracin_cp_method("tracin-cp-all", all_steps, n, m, step_scale));
    }
    return compare_methods(methods, test, keep_trajectories);
}

}  // namespace trajsim
