// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/simulate.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "trajsim/error.h"

namespace trajsim {
namespace {

constexpr std::string_view kTrajectoryFormat = "trajsim-trajectories";
constexpr int kTrajectoryVersion = 1;

std::string_view edit_name(const CurriculumEdit& e) {
    struct Visitor {
        std::string_view operator()(const edit::RemoveExample&) const { return "remove-example"; }
        std::string_view operator()(const edit::RemoveSteps&) const { return "remove-steps"; }
        std::string_view operator()(const edit::DuplicateExample&) const {
            return "duplicate-example";
        }
        std::string_view operator()(const edit::Reorder&) const { return "reorder"; }
        std::string_view operator()(const edit::ReplaceBatch&) const { return "replace-batch"; }
    };
    return std::visit(Visitor{}, e);
}

[[noreturn]] void edit_error(std::size_t index, const CurriculumEdit& e, std::string_view reason) {
    throw Error(ErrorKind::Edit, fmt::format("edit {} ({}): {}", index, edit_name(e), reason));
}

void check_id(std::size_t index, const CurriculumEdit& e, int id, int n) {
    if (id < 1 || id > n) {
        edit_error(index, e, fmt::format("id {} out of range [1, {}]", id, n));
    }
}

class EditApplier {
public:
    EditApplier(std::vector<Batch>& steps, int n, std::size_t index, const CurriculumEdit& e)
        : steps_(steps), n_(n), index_(index), edit_(e) {}

    void operator()(const edit::RemoveExample& op) {
        check_id(index_, edit_, op.id, n_);
        std::vector<Batch> kept;
        kept.reserve(steps_.size());
        for (auto& batch : steps_) {
            std::erase(batch, op.id);
            if (!batch.empty()) kept.push_back(std::move(batch));
        }
        steps_ = std::move(kept);
    }

    void operator()(const edit::RemoveSteps& op) {
        const int length = static_cast<int>(steps_.size());
        if (op.first < 1 || op.last < op.first || op.last > length) {
            edit_error(index_, edit_,
                       fmt::format("step range [{}, {}] invalid for a curriculum of {} steps",
                                   op.first, op.last, length));
        }
        steps_.erase(steps_.begin() + (op.first - 1), steps_.begin() + op.last);
    }

    void operator()(const edit::DuplicateExample& op) {
        check_id(index_, edit_, op.id, n_);
        if (op.count < 1) {
            edit_error(index_, edit_, fmt::format("count must be >= 1, got {}", op.count));
        }
        for (auto& batch : steps_) {
            Batch expanded;
            expanded.reserve(batch.size());
            for (const int id : batch) {
                const int copies = id == op.id ? op.count : 1;
                expanded.insert(expanded.end(), static_cast<std::size_t>(copies), id);
            }
            batch = std::move(expanded);
        }
    }

    void operator()(const edit::Reorder& op) {
        const auto length = steps_.size();
        if (op.permutation.size() != length) {
            edit_error(index_, edit_,
                       fmt::format("permutation has {} entries, curriculum has {} steps",
                                   op.permutation.size(), length));
        }
        std::vector<bool> seen(length, false);
        for (const int source : op.permutation) {
            if (source < 1 || source > static_cast<int>(length) ||
                seen[static_cast<std::size_t>(source - 1)]) {
                edit_error(index_, edit_, "not a permutation of the step indices");
            }
            seen[static_cast<std::size_t>(source - 1)] = true;
        }
        std::vector<Batch> reordered;
        reordered.reserve(length);
        for (const int source : op.permutation) {
            reordered.push_back(steps_[static_cast<std::size_t>(source - 1)]);
        }
        steps_ = std::move(reordered);
    }

    void operator()(const edit::ReplaceBatch& op) {
        const int length = static_cast<int>(steps_.size());
        if (op.step < 1 || op.step > length) {
            edit_error(index_, edit_,
                       fmt::format("step {} out of range [1, {}]", op.step, length));
        }
        if (op.batch.empty()) {
            edit_error(index_, edit_, "replacement batch is empty");
        }
        for (const int id : op.batch) check_id(index_, edit_, id, n_);
        steps_[static_cast<std::size_t>(op.step - 1)] = op.batch;
    }

private:
    std::vector<Batch>& steps_;
    int n_;
    std::size_t index_;
    const CurriculumEdit& edit_;
};

std::vector<int> int_array(const Json& value, std::string_view where) {
    if (!value.is_array()) {
        throw Error(ErrorKind::Parse, fmt::format("{}: expected an array of integers", where));
    }
    std::vector<int> out;
    out.reserve(value.size());
    for (const auto& item : value) {
        out.push_back(static_cast<int>(field::as_integer(item, where)));
    }
    return out;
}

Json int_array_json(const std::vector<int>& values) {
    Json array = Json::array();
    for (const int v : values) array.push_back(v);
    return array;
}

}  // namespace

SimulatedTrajectory simulate(const SimulatorParams& params, const Curriculum& curriculum,
                             double initial_loss) {
    if (!std::isfinite(initial_loss)) {
        throw Error(ErrorKind::Validation, "initial loss must be finite");
    }
    const int n = params.n();
    SimulatedTrajectory out;
    out.test_example_id = params.test_example_id;
    out.initial_loss = initial_loss;
    out.losses.reserve(curriculum.steps.size());
    double loss = initial_loss;
    for (int t = 1; t <= curriculum.length(); ++t) {
        const Batch& batch = curriculum.batch(t);
        for (const int id : batch) {
            if (id < 1 || id > n) {
                throw Error(ErrorKind::Validation,
                            fmt::format("curriculum step {}: id {} out of range [1, {}]", t, id, n));
            }
        }
        loss = params.alpha(batch) * loss + params.beta(batch);
        if (!std::isfinite(loss) && !out.first_nonfinite_step) {
            out.first_nonfinite_step = t;
        }
        out.losses.push_back(loss);
    }
    return out;
}

std::vector<BatchOutcome> simulate_batch(std::span<const SimulatorParams> params, const Run& run) {
    std::vector<BatchOutcome> outcomes;
    outcomes.reserve(params.size());
    for (const auto& p : params) {
        BatchOutcome outcome;
        outcome.test_example_id = p.test_example_id;
        const LossTrajectory* observed = run.find(p.test_example_id);
        if (observed == nullptr) {
            outcome.error = fmt::format("run '{}' has no L0 for test example {}", run.run_id,
                                        p.test_example_id);
        } else {
            try {
                outcome.trajectory = simulate(p, run.curriculum, observed->initial_loss);
            } catch (const Error& e) {
                outcome.error = e.what();
            }
        }
        outcomes.push_back(std::move(outcome));
    }
    return outcomes;
}

Curriculum apply_edits(const Curriculum& base, std::span<const CurriculumEdit> edits) {
    Curriculum edited = base;
    for (std::size_t k = 0; k < edits.size(); ++k) {
        std::visit(EditApplier(edited.steps, edited.n, k, edits[k]), edits[k]);
    }
    if (edited.steps.empty()) {
        throw Error(ErrorKind::Edit, "edits leave an empty curriculum");
    }
    return edited;
}

SimulatedTrajectory what_if(const SimulatorParams& params, const Run& base_run,
                            std::span<const CurriculumEdit> edits) {
    const LossTrajectory* observed = base_run.find(params.test_example_id);
    if (observed == nullptr) {
        throw Error(ErrorKind::Validation, fmt::format("run '{}' has no L0 for test example {}",
                                                       base_run.run_id, params.test_example_id));
    }
    return simulate(params, apply_edits(base_run.curriculum, edits), observed->initial_loss);
}

Json edit_to_json(const CurriculumEdit& e) {
    struct Visitor {
        Json operator()(const edit::RemoveExample& op) const {
            return Json{{"op", "remove-example"}, {"id", op.id}};
        }
        Json operator()(const edit::RemoveSteps& op) const {
            return Json{{"op", "remove-steps"}, {"first", op.first}, {"last", op.last}};
        }
        Json operator()(const edit::DuplicateExample& op) const {
            return Json{{"op", "duplicate-example"}, {"id", op.id}, {"count", op.count}};
        }
        Json operator()(const edit::Reorder& op) const {
            return Json{{"op", "reorder"}, {"permutation", int_array_json(op.permutation)}};
        }
        Json operator()(const edit::ReplaceBatch& op) const {
            return Json{{"op", "replace-batch"}, {"step", op.step}, {"batch", int_array_json(op.batch)}};
        }
    };
    return std::visit(Visitor{}, e);
}

CurriculumEdit edit_from_json(const Json& value, std::size_t index) {
    const std::string where = fmt::format("edits[{}]", index);
    if (!value.is_object()) {
        throw Error(ErrorKind::Parse, where + ": expected an object");
    }
    const std::string op = field::string(value, "op", where);
    auto integer = [&](std::string_view key) {
        return static_cast<int>(field::integer(value, key, where));
    };
    if (op == "remove-example") return edit::RemoveExample{integer("id")};
    if (op == "remove-steps") return edit::RemoveSteps{integer("first"), integer("last")};
    if (op == "duplicate-example") return edit::DuplicateExample{integer("id"), integer("count")};
    if (op == "reorder") {
        return edit::Reorder{int_array(field::require(value, "permutation", where),
                                       where + ".permutation")};
    }
    if (op == "replace-batch") {
        return edit::ReplaceBatch{integer("step"),
                                  int_array(field::require(value, "batch", where), where + ".batch")};
    }
    throw Error(ErrorKind::Edit, fmt::format("{}: unknown op '{}'", where, op));
}

std::vector<CurriculumEdit> edits_from_json(const Json& value) {
    if (!value.is_array()) {
        throw Error(ErrorKind::Parse, "edits: expected an array");
    }
    std::vector<CurriculumEdit> edits;
    edits.reserve(value.size());
    for (std::size_t k = 0; k < value.size(); ++k) {
        edits.push_back(edit_from_json(value[k], k));
    }
    return edits;
}

Json curriculum_to_json(const Curriculum& curriculum) {
    Json steps = Json::array();
    for (const auto& batch : curriculum.steps) steps.push_back(int_array_json(batch));
    return Json{{"n", curriculum.n}, {"steps", std::move(steps)}};
}

Curriculum curriculum_from_json(const Json& value, std::string_view where) {
    if (!value.is_object()) {
        throw Error(ErrorKind::Parse, fmt::format("{}: expected an object", where));
    }
    Curriculum curriculum;
    curriculum.n = static_cast<int>(field::integer(value, "n", where));
    const Json& steps = field::require(value, "steps", where);
    if (!steps.is_array()) {
        throw Error(ErrorKind::Parse, fmt::format("{}.steps: expected an array", where));
    }
    for (std::size_t t = 0; t < steps.size(); ++t) {
        curriculum.steps.push_back(int_array(steps[t], fmt::format("{}.steps[{}]", where, t)));
    }
    validate(curriculum, where);
    return curriculum;
}

Json trajectories_to_json(std::span<const SimulatedTrajectory> trajectories) {
    Json list = Json::array();
    for (const auto& trajectory : trajectories) {
        Json entry = Json::object();
        entry["test_example_id"] = trajectory.test_example_id;
        entry["L0"] = trajectory.initial_loss;
        Json losses = Json::array();
        for (const double v : trajectory.losses) losses.push_back(v);
        entry["losses"] = std::move(losses);
        if (trajectory.first_nonfinite_step) {
            entry["first_nonfinite_step"] = *trajectory.first_nonfinite_step;
        }
        list.push_back(std::move(entry));
    }
    return list;
}

std::string serialize_trajectories(std::span<const SimulatedTrajectory> trajectories) {
    Json document = Json::object();
    document["format"] = std::string(kTrajectoryFormat);
    document["version"] = kTrajectoryVersion;
    document["trajectories"] = trajectories_to_json(trajectories);
    return dump_canonical(document) + "\n";
}

std::vector<SimulatedTrajectory> parse_trajectories(std::string_view document) {
    const Json root = parse_json(document, "trajectories");
    if (field::string(root, "format", "trajectories") != kTrajectoryFormat ||
        field::integer(root, "version", "trajectories") != kTrajectoryVersion) {
        throw Error(ErrorKind::Parse, "trajectories: not a trajsim-trajectories v1 document");
    }
    const Json& list = field::require(root, "trajectories", "trajectories");
    if (!list.is_array()) {
        throw Error(ErrorKind::Parse, "trajectories.trajectories: expected an array");
    }
    std::vector<SimulatedTrajectory> out;
    for (std::size_t k = 0; k < list.size(); ++k) {
        const std::string where = fmt::format("trajectories[{}]", k);
        const Json& entry = list[k];
        SimulatedTrajectory trajectory;
        trajectory.test_example_id = static_cast<int>(field::integer(entry, "test_example_id", where));
        trajectory.initial_loss = field::number(entry, "L0", where);
        const Json& losses = field::require(entry, "losses", where);
        if (!losses.is_array()) {
            throw Error(ErrorKind::Parse, where + ".losses: expected an array");
        }
        for (const auto& v : losses) {
            trajectory.losses.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                    : field::as_number(v, where + ".losses"));
        }
        if (entry.contains("first_nonfinite_step")) {
            trajectory.first_nonfinite_step =
                static_cast<int>(field::integer(entry, "first_nonfinite_step", where));
        }
        out.push_back(std::move(trajectory));
    }
    return out;
}

}  // namespace trajsim
