// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Small builders for hand-written test fixtures.
#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include "trajsim/fitting.h"
#include "trajsim/run_model.h"

namespace fixture {

using trajsim::Batch;
using trajsim::Curriculum;
using trajsim::LossTrajectory;
using trajsim::Role;
using trajsim::Run;
using trajsim::SimulatorParams;
using trajsim::Variant;

/// A run with one fully recorded trajectory: losses[0] is L_0 and
/// losses[t] is L_t.
inline Run run(int n, std::vector<Batch> steps, const std::vector<double>& losses,
               std::string id = "r", int test_id = 1, Role role = Role::Past) {
    Run r;
    r.run_id = std::move(id);
    r.role = role;
    r.curriculum = Curriculum{n, std::move(steps)};
    LossTrajectory tr;
    tr.test_example_id = test_id;
    tr.initial_loss = losses.at(0);
    for (std::size_t t = 1; t < losses.size(); ++t) tr.losses[static_cast<int>(t)] = losses[t];
    r.trajectories.push_back(tr);
    return r;
}

inline Eigen::VectorXd vec(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index k = 0;
    for (const double x : values) v[k++] = x;
    return v;
}

inline SimulatorParams params(Variant variant, Eigen::VectorXd A, Eigen::VectorXd B,
                              int test_id = 1) {
    SimulatorParams p;
    p.test_example_id = test_id;
    p.variant = variant;
    p.A = std::move(A);
    p.B = std::move(B);
    return p;
}

}  // namespace fixture
