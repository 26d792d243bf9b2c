// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/fitting.h"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "trajsim/analysis.h"
#include "trajsim/error.h"
#include "trajsim/json_io.h"
#include "trajsim/simulate.h"

namespace trajsim {
namespace {

constexpr std::string_view kParamsFormat = "trajsim-params";
constexpr int kParamsVersion = 1;
constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_finite(const DesignProblem& problem) {
    if (!problem.X.allFinite() || !problem.y.allFinite()) {
        throw Error(ErrorKind::Numeric, "design problem contains non-finite entries");
    }
}

SimulatorParams unpack(const Eigen::VectorXd& w, int n, Variant variant) {
    SimulatorParams params;
    params.variant = variant;
    switch (variant) {
        case Variant::Linear:
            params.A = w.head(n);
            params.B = w.tail(n);
            break;
        case Variant::Additive:
            params.A = Eigen::VectorXd::Zero(n);
            params.B = w;
            break;
        case Variant::Multiplicative:
            params.A = w;
            params.B = Eigen::VectorXd::Zero(n);
            break;
    }
    return params;
}

Json vector_to_json(const Eigen::VectorXd& v) {
    Json array = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        array.push_back(v[i]);
    }
    return array;
}

Eigen::VectorXd vector_from_json(const Json& value, int n, std::string_view where) {
    if (!value.is_array() || static_cast<int>(value.size()) != n) {
        throw Error(ErrorKind::Parse, fmt::format("{}: expected an array of {} numbers", where, n));
    }
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) {
        v[i] = field::as_number(value[static_cast<std::size_t>(i)], where);
    }
    return v;
}

// Mean validation MSE of full-trajectory rollouts; nullopt if any rollout
// leaves the finite range.
std::optional<double> validation_mse(std::span<const SimulatorParams> params,
                                     std::span<const Run> validation_runs) {
    double total = 0.0;
    int counted = 0;
    for (const auto& run : validation_runs) {
        std::vector<SimulatedTrajectory> predicted;
        std::vector<LossTrajectory> actual;
        for (const auto& p : params) {
            const LossTrajectory* observed = run.find(p.test_example_id);
            if (observed == nullptr) continue;
            auto trajectory = simulate(p, run.curriculum, observed->initial_loss);
            if (trajectory.first_nonfinite_step) return std::nullopt;
            predicted.push_back(std::move(trajectory));
            actual.push_back(*observed);
        }
        if (predicted.empty()) continue;
        try {
            const double mse = all_steps_mse(predicted, actual);
            if (!std::isfinite(mse)) return std::nullopt;
            total += mse;
            ++counted;
        } catch (const Error&) {
            // Nothing recorded to compare against in this run.
        }
    }
    if (counted == 0) return std::nullopt;
    return total / counted;
}

}  // namespace

std::string_view to_string(Variant variant) {
    switch (variant) {
        case Variant::Linear: return "linear";
        case Variant::Additive: return "additive";
        case Variant::Multiplicative: return "multiplicative";
    }
    return "linear";
}

Variant variant_from_string(std::string_view text) {
    if (text == "linear") return Variant::Linear;
    if (text == "additive") return Variant::Additive;
    if (text == "multiplicative") return Variant::Multiplicative;
    throw Error(ErrorKind::Validation,
                fmt::format("unknown variant '{}' (expected linear|additive|multiplicative)", text));
}

double SimulatorParams::alpha(const Batch& batch) const {
    if (variant == Variant::Additive) return 1.0;
    double sum = 0.0;
    for (const int id : batch) sum += A[id - 1];
    return sum;
}

double SimulatorParams::beta(const Batch& batch) const {
    if (variant == Variant::Multiplicative) return 0.0;
    double sum = 0.0;
    for (const int id : batch) sum += B[id - 1];
    return sum;
}

bool SimulatorParams::operator==(const SimulatorParams& other) const {
    return test_example_id == other.test_example_id && variant == other.variant &&
           A.size() == other.A.size() && B.size() == other.B.size() && A == other.A &&
           B == other.B && lambda == other.lambda && diagnostics == other.diagnostics;
}

std::vector<Transition> collect_transitions(std::span<const Run> runs, int test_example_id) {
    std::vector<Transition> transitions;
    for (const auto& run : runs) {
        const LossTrajectory* trajectory = run.find(test_example_id);
        if (trajectory == nullptr) continue;
        for (int t = 1; t <= run.length(); ++t) {
            const auto prev = trajectory->at(t - 1);
            const auto next = trajectory->at(t);
            if (!prev || !next) continue;
            transitions.push_back({run.curriculum.batch(t), *prev, *next, run.run_id, t});
        }
    }
    return transitions;
}

DesignProblem build_design(std::span<const Transition> transitions, int n, Variant variant) {
    if (transitions.empty()) {
        throw Error(ErrorKind::EmptyProblem,
                    "no usable (L_{t-1}, L_t) pairs: the design problem has zero rows");
    }
    DesignProblem problem;
    problem.variant = variant;
    problem.n = n;
    const auto rows = static_cast<Eigen::Index>(transitions.size());
    const Eigen::Index cols = variant == Variant::Linear ? 2 * n : n;
    problem.X = Eigen::MatrixXd::Zero(rows, cols);
    problem.y.resize(rows);
    problem.rows.reserve(transitions.size());
    for (Eigen::Index s = 0; s < rows; ++s) {
        const Transition& tr = transitions[static_cast<std::size_t>(s)];
        for (const int id : tr.batch) {
            if (id < 1 || id > n) {
                throw Error(ErrorKind::Validation,
                            fmt::format("run '{}' step {}: id {} out of range [1, {}]", tr.run_id,
                                        tr.step, id, n));
            }
            const Eigen::Index col = id - 1;
            switch (variant) {
                case Variant::Linear:
                    problem.X(s, col) += tr.prev_loss;
                    problem.X(s, n + col) += 1.0;
                    break;
                case Variant::Additive:
                    problem.X(s, col) += 1.0;
                    break;
                case Variant::Multiplicative:
                    problem.X(s, col) += tr.prev_loss;
                    break;
            }
        }
        problem.y[s] = variant == Variant::Additive ? tr.next_loss - tr.prev_loss : tr.next_loss;
        problem.rows.push_back({tr.run_id, tr.step});
    }
    return problem;
}

DesignProblem build_design(std::span<const Run> runs, int test_example_id, Variant variant) {
    if (runs.empty()) {
        throw Error(ErrorKind::EmptyProblem, "no runs to build a design problem from");
    }
    const auto transitions = collect_transitions(runs, test_example_id);
    if (transitions.empty()) {
        throw Error(ErrorKind::EmptyProblem,
                    fmt::format("test example {}: no step with both L_(t-1) and L_t recorded",
                                test_example_id));
    }
    return build_design(transitions, runs.front().curriculum.n, variant);
}

RidgeSolution solve_ridge(const DesignProblem& problem, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorKind::Numeric, fmt::format("lambda must be finite and >= 0, got {}", lambda));
    }
    require_finite(problem);
    const Eigen::Index p = problem.X.cols();
    RidgeSolution solution;
    if (problem.X.rows() == 0) {
        // lambda > 0 with no data: the regularizer alone is minimized at 0.
        if (lambda == 0.0) {
            throw Error(ErrorKind::EmptyProblem, "zero rows and lambda = 0");
        }
        solution.w = Eigen::VectorXd::Zero(p);
        return solution;
    }
    if (lambda > 0.0) {
        Eigen::MatrixXd normal = problem.X.transpose() * problem.X;
        normal.diagonal().array() += lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(normal);
        if (llt.info() != Eigen::Success) {
            throw Error(ErrorKind::Numeric, "normal equations are not positive definite");
        }
        solution.w = llt.solve(problem.X.transpose() * problem.y);
        solution.rank = static_cast<int>(p);
    } else {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
        const auto size = std::max(problem.X.rows(), problem.X.cols());
        cod.setThreshold(static_cast<double>(size) * kEps);
        cod.compute(problem.X);
        solution.w = cod.solve(problem.y);
        solution.rank = static_cast<int>(cod.rank());
        solution.rank_deficient = solution.rank < p;
    }
    if (!solution.w.allFinite()) {
        throw Error(ErrorKind::Numeric, "ridge solution is not finite");
    }
    return solution;
}

SimulatorParams fit_design(const DesignProblem& problem, int test_example_id, double lambda) {
    const RidgeSolution solution = solve_ridge(problem, lambda);
    SimulatorParams params = unpack(solution.w, problem.n, problem.variant);
    params.test_example_id = test_example_id;
    params.lambda = lambda;
    params.diagnostics.rows = problem.row_count();
    params.diagnostics.cols = problem.col_count();
    params.diagnostics.rank = numerical_rank(problem.X);
    params.diagnostics.rss = (problem.y - problem.X * solution.w).squaredNorm();
    params.diagnostics.rank_deficient = params.diagnostics.rank < problem.col_count();
    return params;
}

SimulatorParams fit_simulator(std::span<const Run> runs, int test_example_id, Variant variant,
                              double lambda) {
    return fit_design(build_design(runs, test_example_id, variant), test_example_id, lambda);
}

UnivariateFit fit_univariate_bs1(std::span<const Run> runs, int test_example_id,
                                 int train_example_id, double lambda) {
    if (!(lambda >= 0.0)) {
        throw Error(ErrorKind::Numeric, "lambda must be >= 0");
    }
    double sxx = 0.0, sx = 0.0, sxy = 0.0, sy = 0.0;
    int count = 0;
    for (const auto& run : runs) {
        const LossTrajectory* trajectory = run.find(test_example_id);
        if (trajectory == nullptr) continue;
        for (const auto& [t, multiplicity] : occurrence_steps(run, train_example_id)) {
            if (run.curriculum.batch(t).size() != 1) {
                throw Error(ErrorKind::Unsupported,
                            fmt::format("run '{}' step {}: batch size {} (univariate fit needs "
                                        "batch size 1)",
                                        run.run_id, t, run.curriculum.batch(t).size()));
            }
            const auto prev = trajectory->at(t - 1);
            const auto next = trajectory->at(t);
            if (!prev || !next) continue;
            sxx += *prev * *prev;
            sx += *prev;
            sxy += *prev * *next;
            sy += *next;
            ++count;
        }
    }
    if (count == 0) {
        throw Error(ErrorKind::NoData,
                    fmt::format("training example {} has no usable occurrence", train_example_id));
    }
    if (lambda == 0.0 && count == 1) {
        throw Error(ErrorKind::Underdetermined,
                    fmt::format("training example {} observed once; two occurrences are needed "
                                "when lambda = 0",
                                train_example_id));
    }
    const double a11 = sxx + lambda;
    const double a12 = sx;
    const double a22 = count + lambda;
    const double det = a11 * a22 - a12 * a12;
    if (lambda == 0.0 && det <= 64.0 * kEps * sxx * count) {
        throw Error(ErrorKind::Underdetermined,
                    fmt::format("training example {}: identical L_(t-1) at every occurrence, "
                                "alpha and beta columns are collinear",
                                train_example_id));
    }
    UnivariateFit fit;
    fit.A = (a22 * sxy - a12 * sy) / det;
    fit.B = (a11 * sy - a12 * sxy) / det;
    fit.occurrences = count;
    return fit;
}

std::vector<std::optional<double>> closed_form_additive(std::span<const Run> runs,
                                                        int test_example_id) {
    if (runs.empty()) return {};
    const int n = runs.front().curriculum.n;
    std::vector<double> drops(static_cast<std::size_t>(n), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(n), 0);
    for (const auto& run : runs) {
        const LossTrajectory* trajectory = run.find(test_example_id);
        if (trajectory == nullptr) continue;
        for (int t = 1; t <= run.length(); ++t) {
            const Batch& batch = run.curriculum.batch(t);
            if (batch.size() != 1) {
                throw Error(ErrorKind::Unsupported,
                            fmt::format("run '{}' step {}: batch size {} (closed-form additive "
                                        "fit needs batch size 1)",
                                        run.run_id, t, batch.size()));
            }
            const auto prev = trajectory->at(t - 1);
            const auto next = trajectory->at(t);
            if (!prev || !next) continue;
            const auto index = static_cast<std::size_t>(batch.front() - 1);
            drops[index] += *prev - *next;
            counts[index] += 1;
        }
    }
    std::vector<std::optional<double>> result(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < result.size(); ++i) {
        if (counts[i] > 0) {
            result[i] = -drops[i] / counts[i];
        }
    }
    return result;
}

std::vector<double> default_lambda_grid() {
    std::vector<double> grid{0.0};
    for (int e = -6; e <= 1; ++e) {
        grid.push_back(std::pow(10.0, e));
    }
    return grid;
}

LambdaSelection select_lambda(std::span<const Run> fit_runs, std::span<const Run> validation_runs,
                              std::span<const int> test_ids, Variant variant,
                              std::span<const double> grid) {
    if (grid.empty()) {
        throw Error(ErrorKind::Config, "lambda grid is empty");
    }
    std::vector<double> sorted(grid.begin(), grid.end());
    std::sort(sorted.begin(), sorted.end());

    // The design depends only on the data, so build it once per test id.
    std::vector<std::pair<int, DesignProblem>> problems;
    for (const int id : test_ids) {
        try {
            problems.emplace_back(id, build_design(fit_runs, id, variant));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::EmptyProblem) throw;
        }
    }

    LambdaSelection selection;
    std::optional<double> best;
    for (const double lambda : sorted) {
        LambdaScore score{lambda, std::nullopt};
        if (!problems.empty()) {
            try {
                std::vector<SimulatorParams> params;
                for (const auto& [id, problem] : problems) {
                    const RidgeSolution solution = solve_ridge(problem, lambda);
                    SimulatorParams p = unpack(solution.w, problem.n, variant);
                    p.test_example_id = id;
                    p.lambda = lambda;
                    params.push_back(std::move(p));
                }
                score.validation_mse = validation_mse(params, validation_runs);
            } catch (const Error&) {
                score.validation_mse.reset();
            }
        }
        if (score.validation_mse && (!best || *score.validation_mse <= *best)) {
            best = score.validation_mse;
            selection.lambda = lambda;
        }
        selection.scores.push_back(score);
    }
    if (!best) {
        throw Error(ErrorKind::NoData,
                    "lambda selection failed: no grid value produced a validation score");
    }
    return selection;
}

int numerical_rank(const Eigen::MatrixXd& matrix, double* tolerance,
                   std::vector<double>* singular_values) {
    if (matrix.size() == 0) {
        if (tolerance) *tolerance = 0.0;
        if (singular_values) singular_values->clear();
        return 0;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(matrix);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double sigma_max = sv.size() > 0 ? sv[0] : 0.0;
    const double tol =
        static_cast<double>(std::max(matrix.rows(), matrix.cols())) * kEps * sigma_max;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv[i] > tol) ++rank;
    }
    if (tolerance) *tolerance = tol;
    if (singular_values) singular_values->assign(sv.data(), sv.data() + sv.size());
    return rank;
}

IdentifiabilityReport check_identifiability(const DesignProblem& problem) {
    IdentifiabilityReport report;
    report.rows = problem.row_count();
    report.cols = problem.col_count();
    report.rank = numerical_rank(problem.X, &report.tolerance, &report.singular_values);
    report.too_few_rows = report.rows < report.cols;

    const int n = problem.n;
    // Column that records which rows contain example i.
    const Eigen::Index presence_offset = problem.variant == Variant::Linear ? n : 0;
    const int needed = problem.variant == Variant::Linear ? 2 : 1;
    for (int i = 0; i < n; ++i) {
        int observed = 0;
        for (Eigen::Index s = 0; s < problem.X.rows(); ++s) {
            if (problem.X(s, presence_offset + i) != 0.0) ++observed;
        }
        if (observed < needed) {
            report.under_observed.push_back(i + 1);
        }
        if (problem.variant != Variant::Linear || observed < 2) continue;
        // alpha column = L_{t-1} * beta column; parallel iff L_{t-1} is constant.
        std::optional<double> first;
        bool constant = true;
        for (Eigen::Index s = 0; s < problem.X.rows() && constant; ++s) {
            const double beta = problem.X(s, n + i);
            if (beta == 0.0) continue;
            const double prev = problem.X(s, i) / beta;
            if (!first) {
                first = prev;
            } else if (std::abs(prev - *first) > 1e-12 * std::max(1.0, std::abs(*first))) {
                constant = false;
            }
        }
        if (constant) {
            report.constant_loss.push_back(i + 1);
        }
    }
    return report;
}

std::string serialize_params(std::span<const SimulatorParams> params) {
    Json document = Json::object();
    document["format"] = std::string(kParamsFormat);
    document["version"] = kParamsVersion;
    Json simulators = Json::array();
    for (const auto& p : params) {
        Json entry = Json::object();
        entry["test_example_id"] = p.test_example_id;
        entry["variant"] = std::string(to_string(p.variant));
        entry["lambda"] = p.lambda;
        entry["n"] = p.n();
        if (p.variant != Variant::Additive) entry["A"] = vector_to_json(p.A);
        if (p.variant != Variant::Multiplicative) entry["B"] = vector_to_json(p.B);
        Json diagnostics = Json::object();
        diagnostics["rows"] = p.diagnostics.rows;
        diagnostics["cols"] = p.diagnostics.cols;
        diagnostics["rank"] = p.diagnostics.rank;
        diagnostics["rss"] = p.diagnostics.rss;
        diagnostics["rank_deficient"] = p.diagnostics.rank_deficient;
        entry["diagnostics"] = std::move(diagnostics);
        simulators.push_back(std::move(entry));
    }
    document["simulators"] = std::move(simulators);
    return dump_canonical(document) + "\n";
}

std::vector<SimulatorParams> parse_params(std::string_view document) {
    const Json root = parse_json(document, "params");
    if (field::string(root, "format", "params") != kParamsFormat) {
        throw Error(ErrorKind::Parse, "params: not a trajsim-params document");
    }
    if (field::integer(root, "version", "params") != kParamsVersion) {
        throw Error(ErrorKind::Parse, "params: unsupported version");
    }
    const Json& simulators = field::require(root, "simulators", "params");
    if (!simulators.is_array()) {
        throw Error(ErrorKind::Parse, "params.simulators: expected an array");
    }
    std::vector<SimulatorParams> result;
    for (std::size_t k = 0; k < simulators.size(); ++k) {
        const std::string where = fmt::format("params.simulators[{}]", k);
        const Json& entry = simulators[k];
        SimulatorParams p;
        p.test_example_id = static_cast<int>(field::integer(entry, "test_example_id", where));
        p.variant = variant_from_string(field::string(entry, "variant", where));
        p.lambda = field::number(entry, "lambda", where);
        const int n = static_cast<int>(field::integer(entry, "n", where));
        if (n < 1) {
            throw Error(ErrorKind::Validation, fmt::format("{}: n must be >= 1", where));
        }
        p.A = p.variant == Variant::Additive
                  ? Eigen::VectorXd::Zero(n)
                  : vector_from_json(field::require(entry, "A", where), n, where + ".A");
        p.B = p.variant == Variant::Multiplicative
                  ? Eigen::VectorXd::Zero(n)
                  : vector_from_json(field::require(entry, "B", where), n, where + ".B");
        if (entry.contains("diagnostics")) {
            const Json& d = entry["diagnostics"];
            const std::string dw = where + ".diagnostics";
            p.diagnostics.rows = static_cast<int>(field::integer(d, "rows", dw));
            p.diagnostics.cols = static_cast<int>(field::integer(d, "cols", dw));
            p.diagnostics.rank = static_cast<int>(field::integer(d, "rank", dw));
            p.diagnostics.rss = field::number(d, "rss", dw);
            const Json& deficient = field::require(d, "rank_deficient", dw);
            if (!deficient.is_boolean()) {
                throw Error(ErrorKind::Parse, dw + ".rank_deficient: expected a boolean");
            }
            p.diagnostics.rank_deficient = deficient.get<bool>();
        }
        if (!p.A.allFinite() || !p.B.allFinite()) {
            throw Error(ErrorKind::Validation, fmt::format("{}: parameters must be finite", where));
        }
        result.push_back(std::move(p));
    }
    return result;
}

}  // namespace trajsim
