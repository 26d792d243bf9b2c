// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <chrono>

#include "fixtures.h"
#include "trajsim/error.h"
#include "trajsim/rng.h"
#include "trajsim/simulate.h"

using namespace trajsim;
using fixture::vec;

namespace {

ErrorKind kind_of(auto&& fn, std::string* message = nullptr) {
    try {
        fn();
    } catch (const Error& e) {
        if (message) *message = e.what();
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::Io;
}

Curriculum random_curriculum(Rng& rng, int n, int length, int batch_size) {
    Curriculum c{n, {}};
    for (int t = 0; t < length; ++t) {
        Batch b;
        for (int k = 0; k < batch_size; ++k) b.push_back(1 + static_cast<int>(rng.below(n)));
        c.steps.push_back(b);
    }
    return c;
}

SimulatorParams random_params(Rng& rng, int n, Variant variant, int test_id = 1) {
    Eigen::VectorXd A(n), B(n);
    for (int i = 0; i < n; ++i) {
        A[i] = rng.uniform(0.3, 0.55);
        B[i] = rng.uniform(-0.1, 0.1);
    }
    return fixture::params(variant, A, B, test_id);
}

trajsim::Run base_run() {
    return fixture::run(3, {{1}, {2}, {3}, {1, 2}}, {2.0, 1.5, 1.2, 1.0, 0.8});
}

}  // namespace

TEST(Simulate, HalvingExample) {
    const auto p = fixture::params(Variant::Linear, vec({0.5, 0.5}), vec({0, 0}));
    const SimulatedTrajectory tr = simulate(p, Curriculum{2, {{1}, {2}}}, 100.0);
    EXPECT_EQ(tr.losses, (std::vector<double>{50.0, 25.0}));
    EXPECT_EQ(tr.initial_loss, 100.0);
    EXPECT_FALSE(tr.first_nonfinite_step);
}

TEST(Simulate, IdentityDynamicsIsFlat) {
    Rng rng(1);
    const auto p = fixture::params(Variant::Linear, Eigen::VectorXd::Ones(4),
                                   Eigen::VectorXd::Zero(4));
    for (int trial = 0; trial < 10; ++trial) {
        const SimulatedTrajectory tr = simulate(p, random_curriculum(rng, 4, 12, 1), 3.25);
        for (const double v : tr.losses) EXPECT_EQ(v, 3.25);
    }
}

TEST(Simulate, TwoStepRecursion) {
    const auto p = fixture::params(Variant::Linear, vec({0.9}), vec({-1.0}));
    const SimulatedTrajectory tr = simulate(p, Curriculum{1, {{1}, {1}}}, 10.0);
    ASSERT_EQ(tr.length(), 2);
    EXPECT_DOUBLE_EQ(tr.losses[0], 8.0);
    EXPECT_DOUBLE_EQ(tr.losses[1], 6.2);
}

TEST(Simulate, AblationsPinAlphaOrBeta) {
    const Curriculum c{2, {{1, 2}}};
    const auto add = fixture::params(Variant::Additive, vec({5, 5}), vec({-0.1, -0.2}));
    EXPECT_DOUBLE_EQ(simulate(add, c, 1.0).losses[0], 0.7);
    const auto mul = fixture::params(Variant::Multiplicative, vec({0.2, 0.3}), vec({9, 9}));
    EXPECT_DOUBLE_EQ(simulate(mul, c, 2.0).losses[0], 1.0);
}

TEST(Simulate, MultiplicityCountsEveryCopy) {
    const auto p = fixture::params(Variant::Linear, vec({0.25, 1.0}), vec({0.5, 0.0}));
    EXPECT_DOUBLE_EQ(simulate(p, Curriculum{2, {{1, 1, 1}}}, 4.0).losses[0], 0.75 * 4.0 + 1.5);
}

TEST(Simulate, NoClampingOfNegativeLosses) {
    const auto p = fixture::params(Variant::Linear, vec({1.0}), vec({-2.0}));
    EXPECT_EQ(simulate(p, Curriculum{1, {{1}}}, 1.0).losses[0], -1.0);
}

TEST(Simulate, OverflowIsFlagged) {
    const auto p = fixture::params(Variant::Linear, vec({1e200}), vec({0.0}));
    const SimulatedTrajectory tr = simulate(p, Curriculum{1, {{1}, {1}, {1}}}, 1.0);
    ASSERT_TRUE(tr.first_nonfinite_step.has_value());
    EXPECT_EQ(*tr.first_nonfinite_step, 2);
}

TEST(Simulate, RejectsBadInputs) {
    const auto p = fixture::params(Variant::Linear, vec({1.0}), vec({0.0}));
    EXPECT_EQ(kind_of([&] { simulate(p, Curriculum{1, {{1}}}, NAN); }), ErrorKind::Validation);
    EXPECT_EQ(kind_of([&] { simulate(p, Curriculum{2, {{2}}}, 1.0); }), ErrorKind::Validation);
}

TEST(Simulate, OrderMattersForLinear) {
    const auto p = fixture::params(Variant::Linear, vec({0.5, 0.9}), vec({0.2, -0.3}));
    const auto forward = simulate(p, Curriculum{2, {{1}, {2}}}, 100.0);
    const auto backward = simulate(p, Curriculum{2, {{2}, {1}}}, 100.0);
    EXPECT_NE(forward.losses[0], backward.losses[0]);
    EXPECT_NE(forward.final_loss(), backward.final_loss());
}

TEST(Simulate, FinalLossPermutationInvariantForAblations) {
    Rng rng(6);
    for (const Variant v : {Variant::Multiplicative, Variant::Additive}) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto p = random_params(rng, 5, v);
            const Curriculum c = random_curriculum(rng, 5, 15, 2);
            Curriculum shuffled = c;
            rng.shuffle(shuffled.steps);
            const double a = simulate(p, c, 2.0).final_loss();
            const double b = simulate(p, shuffled, 2.0).final_loss();
            EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a)));
        }
    }
}

TEST(Simulate, CompositionOfCurricula) {
    Rng rng(2);
    const auto p = random_params(rng, 4, Variant::Linear);
    const Curriculum c1 = random_curriculum(rng, 4, 7, 2);
    const Curriculum c2 = random_curriculum(rng, 4, 9, 2);
    Curriculum joined = c1;
    joined.steps.insert(joined.steps.end(), c2.steps.begin(), c2.steps.end());
    const auto first = simulate(p, c1, 1.7);
    const auto second = simulate(p, c2, first.final_loss());
    const auto whole = simulate(p, joined, 1.7);
    std::vector<double> expected = first.losses;
    expected.insert(expected.end(), second.losses.begin(), second.losses.end());
    EXPECT_EQ(whole.losses, expected);
}

TEST(Simulate, Deterministic) {
    Rng rng(3);
    const auto p = random_params(rng, 6, Variant::Linear);
    const Curriculum c = random_curriculum(rng, 6, 50, 3);
    EXPECT_EQ(simulate(p, c, 1.0), simulate(p, c, 1.0));
}

// ---------------------------------------------------------------------------
// Batch simulation

TEST(SimulateBatch, EmptyParamsGiveEmptyOutput) {
    EXPECT_TRUE(simulate_batch({}, base_run()).empty());
}

TEST(SimulateBatch, SingleParamsMatchesSimulate) {
    Rng rng(4);
    const trajsim::Run run = base_run();
    const std::vector<SimulatorParams> params{random_params(rng, 3, Variant::Linear)};
    const auto out = simulate_batch(params, run);
    ASSERT_EQ(out.size(), 1u);
    ASSERT_TRUE(out[0].trajectory.has_value());
    EXPECT_EQ(*out[0].trajectory, simulate(params[0], run.curriculum, 2.0));
}

TEST(SimulateBatch, MissingInitialLossIsPerItemError) {
    Rng rng(4);
    const trajsim::Run run = base_run();
    const std::vector<SimulatorParams> params{random_params(rng, 3, Variant::Linear, 2),
                                              random_params(rng, 3, Variant::Linear, 1)};
    const auto out = simulate_batch(params, run);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].test_example_id, 2);
    EXPECT_FALSE(out[0].trajectory.has_value());
    EXPECT_NE(out[0].error.find("L0"), std::string::npos);
    EXPECT_TRUE(out[1].trajectory.has_value());
    EXPECT_TRUE(out[1].error.empty());
}

TEST(SimulateBatch, HundredStepsThreeParamsIsFast) {
    Rng rng(8);
    trajsim::Run run;
    run.run_id = "fast";
    run.curriculum = random_curriculum(rng, 50, 100, 4);
    std::vector<SimulatorParams> params;
    for (int j = 1; j <= 3; ++j) {
        params.push_back(random_params(rng, 50, Variant::Linear, j));
        run.trajectories.push_back(LossTrajectory{j, 2.0, {}});
    }
    simulate_batch(params, run);  // warm-up
    const auto start = std::chrono::steady_clock::now();
    const auto out = simulate_batch(params, run);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(ms, 10.0);
    EXPECT_EQ(out.size(), 3u);
}

// ---------------------------------------------------------------------------
// Edits

TEST(Edits, EmptyListIsIdentity) {
    Rng rng(9);
    const trajsim::Run run = base_run();
    const auto p = random_params(rng, 3, Variant::Linear);
    EXPECT_EQ(what_if(p, run, {}), simulate(p, run.curriculum, 2.0));
}

TEST(Edits, RemovingAbsentExampleIsIdentity) {
    Rng rng(9);
    const trajsim::Run run = fixture::run(4, {{1}, {2}, {3}}, {2.0, 1.5, 1.2, 1.0});
    const auto p = random_params(rng, 4, Variant::Linear);
    const std::vector<CurriculumEdit> edits{edit::RemoveExample{4}};
    EXPECT_EQ(what_if(p, run, edits), what_if(p, run, {}));
}

TEST(Edits, RemoveExampleDropsEmptiedSteps) {
    const Curriculum c{3, {{1}, {2, 1}, {3}}};
    const std::vector<CurriculumEdit> edits{edit::RemoveExample{1}};
    EXPECT_EQ(apply_edits(c, edits).steps, (std::vector<Batch>{{2}, {3}}));
}

TEST(Edits, RemoveStepsInclusiveRange) {
    const Curriculum c{3, {{1}, {2}, {3}, {1}}};
    const std::vector<CurriculumEdit> edits{edit::RemoveSteps{2, 3}};
    EXPECT_EQ(apply_edits(c, edits).steps, (std::vector<Batch>{{1}, {1}}));
}

TEST(Edits, DuplicateExampleMultipliesCopies) {
    const Curriculum c{3, {{1, 2}, {3}, {1, 1}}};
    const std::vector<CurriculumEdit> edits{edit::DuplicateExample{1, 3}};
    EXPECT_EQ(apply_edits(c, edits).steps,
              (std::vector<Batch>{{1, 1, 1, 2}, {3}, {1, 1, 1, 1, 1, 1}}));
}

TEST(Edits, ReorderAndReplace) {
    const Curriculum c{3, {{1}, {2}, {3}}};
    const std::vector<CurriculumEdit> edits{edit::Reorder{{3, 1, 2}}, edit::ReplaceBatch{2, {2, 2}}};
    EXPECT_EQ(apply_edits(c, edits).steps, (std::vector<Batch>{{3}, {2, 2}, {2}}));
}

TEST(Edits, ReorderKeepsMultiplicativeFinalLoss) {
    const auto p = fixture::params(Variant::Multiplicative, vec({0.5, 0.9, 0.7}), vec({0, 0, 0}));
    const trajsim::Run run = base_run();
    const std::vector<CurriculumEdit> swap{edit::Reorder{{2, 1, 3, 4}}};
    const auto base = what_if(p, run, {});
    const auto edited = what_if(p, run, swap);
    EXPECT_NE(base.losses[0], edited.losses[0]);
    EXPECT_NEAR(base.final_loss(), edited.final_loss(), 1e-15);
    // The edited rollout is the direct simulation of the swapped curriculum.
    EXPECT_EQ(edited, simulate(p, Curriculum{3, {{2}, {1}, {3}, {1, 2}}}, 2.0));
}

TEST(Edits, ErrorsNameTheOffendingEdit) {
    const Curriculum c{3, {{1}, {2}, {3}}};
    const auto check = [&](std::vector<CurriculumEdit> edits, const std::string& fragment) {
        std::string message;
        EXPECT_EQ(kind_of([&] { apply_edits(c, edits); }, &message), ErrorKind::Edit);
        EXPECT_NE(message.find(fragment), std::string::npos) << message;
    };
    check({edit::RemoveExample{1}, edit::RemoveExample{9}}, "edit 1 (remove-example)");
    check({edit::RemoveSteps{0, 1}}, "edit 0 (remove-steps)");
    check({edit::RemoveSteps{3, 2}}, "remove-steps");
    check({edit::DuplicateExample{1, 0}}, "duplicate-example");
    check({edit::Reorder{{1, 1, 2}}}, "not a permutation");
    check({edit::Reorder{{1, 2}}}, "reorder");
    check({edit::ReplaceBatch{4, {1}}}, "replace-batch");
    check({edit::ReplaceBatch{1, {}}}, "empty");
    check({edit::ReplaceBatch{1, {4}}}, "out of range");
    check({edit::RemoveSteps{1, 3}}, "empty curriculum");
}

TEST(Edits, JsonRoundTrip) {
    const std::vector<CurriculumEdit> edits{edit::RemoveExample{2}, edit::RemoveSteps{1, 3},
                                            edit::DuplicateExample{4, 10}, edit::Reorder{{2, 1}},
                                            edit::ReplaceBatch{1, {3, 3}}};
    Json list = Json::array();
    for (const auto& e : edits) list.push_back(edit_to_json(e));
    const auto parsed = edits_from_json(list);
    ASSERT_EQ(parsed.size(), edits.size());
    for (std::size_t k = 0; k < edits.size(); ++k) {
        EXPECT_EQ(edit_to_json(parsed[k]), edit_to_json(edits[k]));
    }
    EXPECT_EQ(dump_canonical(list[2]), R"({"op":"duplicate-example","id":4,"count":10})");
}

TEST(Edits, MalformedJson) {
    EXPECT_EQ(kind_of([] { edits_from_json(Json::object()); }), ErrorKind::Parse);
    EXPECT_EQ(kind_of([] { edits_from_json(Json::parse(R"([{"op":"explode"}])")); }),
              ErrorKind::Edit);
    EXPECT_EQ(kind_of([] { edits_from_json(Json::parse(R"([{"op":"remove-example"}])")); }),
              ErrorKind::Parse);
}

TEST(TrajectoryDocument, RoundTrip) {
    Rng rng(10);
    const auto p = random_params(rng, 4, Variant::Linear);
    std::vector<SimulatedTrajectory> trs{simulate(p, random_curriculum(rng, 4, 5, 2), 1.3)};
    trs.push_back(simulate(fixture::params(Variant::Linear, vec({1e300}), vec({0})),
                           Curriculum{1, {{1}, {1}}}, 1.0));
    const std::string doc = serialize_trajectories(trs);
    const auto parsed = parse_trajectories(doc);
    ASSERT_EQ(parsed.size(), 2u);
    EXPECT_EQ(parsed[0], trs[0]);
    EXPECT_EQ(parsed[1].first_nonfinite_step, 2);
    EXPECT_EQ(serialize_trajectories(parsed), doc);
}

TEST(CurriculumDocument, RoundTripAndValidation) {
    const Curriculum c{3, {{1, 2}, {3}}};
    EXPECT_EQ(curriculum_from_json(curriculum_to_json(c), "c"), c);
    EXPECT_EQ(kind_of([] { curriculum_from_json(Json::parse(R"({"n":2,"steps":[[3]]})"), "c"); }),
              ErrorKind::Validation);
}
