// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/analysis.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "trajsim/error.h"

namespace trajsim {
namespace {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& values) {
    if (values.empty()) return {};
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double ss = 0.0;
    for (const double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / values.size())};
}

Json optional_number(const std::optional<double>& v) {
    return v ? Json(*v) : Json(nullptr);
}

}  // namespace

double all_steps_mse(std::span<const SimulatedTrajectory> predicted,
                     std::span<const LossTrajectory> actual) {
    if (predicted.size() != actual.size()) {
        throw Error(ErrorKind::DimensionMismatch,
                    fmt::format("{} predicted vs {} actual trajectories", predicted.size(),
                                actual.size()));
    }
    std::map<int, const LossTrajectory*> by_id;
    for (const auto& trajectory : actual) by_id[trajectory.test_example_id] = &trajectory;
    double total = 0.0;
    int examples = 0;
    for (const auto& p : predicted) {
        const auto it = by_id.find(p.test_example_id);
        if (it == by_id.end()) {
            throw Error(ErrorKind::Validation,
                        fmt::format("no actual trajectory for test example {}", p.test_example_id));
        }
        double sum = 0.0;
        int compared = 0;
        for (const auto& [t, loss] : it->second->losses) {
            if (t < 1 || t > p.length()) {
                throw Error(ErrorKind::DimensionMismatch,
                            fmt::format("test example {}: actual step {} beyond predicted length {}",
                                        p.test_example_id, t, p.length()));
            }
            const double diff = loss - p.losses[static_cast<std::size_t>(t - 1)];
            sum += diff * diff;
            ++compared;
        }
        if (compared == 0) continue;
        total += sum / compared;
        ++examples;
    }
    if (examples == 0) {
        throw Error(ErrorKind::NoData, "empty comparison set: no recorded actual losses");
    }
    return total / examples;
}

std::vector<double> fractional_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        // Positions i..j (0-based) share the mean 1-based rank.
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double final_step_spearman(const std::map<int, double>& predicted_finals,
                           const std::map<int, double>& actual_finals) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [id, value] : predicted_finals) {
        const auto it = actual_finals.find(id);
        if (it == actual_finals.end()) continue;
        if (!std::isfinite(value) || !std::isfinite(it->second)) {
            throw Error(ErrorKind::Numeric, fmt::format("non-finite final loss for test example {}", id));
        }
        xs.push_back(value);
        ys.push_back(it->second);
    }
    if (xs.size() < 2) {
        throw Error(ErrorKind::UndefinedRho, "Spearman needs at least two common test examples");
    }
    const auto rx = fractional_ranks(xs);
    const auto ry = fractional_ranks(ys);
    const double mean = (static_cast<double>(rx.size()) + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        sxy += (rx[k] - mean) * (ry[k] - mean);
        sxx += (rx[k] - mean) * (rx[k] - mean);
        syy += (ry[k] - mean) * (ry[k] - mean);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorKind::UndefinedRho, "Spearman undefined: constant ranks on one side");
    }
    return sxy / std::sqrt(sxx * syy);
}

const MethodReport& EvalReport::method(std::string_view name) const {
    for (const auto& m : methods) {
        if (m.name == name) return m;
    }
    throw Error(ErrorKind::NotFound, fmt::format("no method named '{}' in report", name));
}

EvalReport compare_methods(std::span<const Method> methods, std::span<const Run> future_runs,
                           bool keep_trajectories) {
    EvalReport report;
    report.run_count = static_cast<int>(future_runs.size());
    std::set<int> test_ids;
    for (const auto& run : future_runs) {
        for (const auto& trajectory : run.trajectories) test_ids.insert(trajectory.test_example_id);
    }
    report.test_example_count = static_cast<int>(test_ids.size());

    for (const auto& method : methods) {
        MethodReport mr;
        mr.name = method.name;
        std::vector<double> mses;
        std::vector<double> rhos;
        for (const auto& run : future_runs) {
            RunMetrics metrics;
            metrics.run_id = run.run_id;
            try {
                auto predicted = method.simulate(run);
                std::vector<LossTrajectory> actual;
                std::map<int, double> predicted_finals;
                std::map<int, double> actual_finals;
                for (const auto& p : predicted) {
                    const LossTrajectory* observed = run.find(p.test_example_id);
                    if (observed == nullptr) {
                        throw Error(ErrorKind::Validation,
                                    fmt::format("run '{}' does not track test example {}",
                                                run.run_id, p.test_example_id));
                    }
                    actual.push_back(*observed);
                    predicted_finals[p.test_example_id] = p.final_loss();
                    if (const auto final_loss = observed->at(run.length())) {
                        actual_finals[p.test_example_id] = *final_loss;
                    }
                }
                const double mse = all_steps_mse(predicted, actual);
                if (!std::isfinite(mse)) {
                    throw Error(ErrorKind::Numeric, "simulated trajectory is not finite");
                }
                metrics.mse = mse;
                try {
                    metrics.rho = final_step_spearman(predicted_finals, actual_finals);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::UndefinedRho) throw;
                }
                if (keep_trajectories) metrics.trajectories = std::move(predicted);
            } catch (const std::exception& e) {
                metrics.mse.reset();
                metrics.rho.reset();
                metrics.error = e.what();
            }
            if (!metrics.error.empty()) {
                ++mr.failures;
            } else {
                mses.push_back(*metrics.mse);
                if (metrics.rho) {
                    rhos.push_back(*metrics.rho);
                } else {
                    ++mr.rho_undefined;
                }
            }
            mr.per_run.push_back(std::move(metrics));
        }
        const auto mse_stats = mean_std(mses);
        const auto rho_stats = mean_std(rhos);
        mr.mse_mean = mse_stats.mean;
        mr.mse_std = mse_stats.std;
        mr.rho_mean = rho_stats.mean;
        mr.rho_std = rho_stats.std;
        mr.runs = static_cast<int>(mses.size());
        report.methods.push_back(std::move(mr));
    }
    return report;
}

Json EvalReport::to_json(bool include_trajectories) const {
    Json root = Json::object();
    root["format"] = "trajsim-eval";
    root["version"] = 1;
    root["run_count"] = run_count;
    root["test_example_count"] = test_example_count;
    Json list = Json::array();
    for (const auto& m : methods) {
        Json entry = Json::object();
        entry["name"] = m.name;
        entry["mse_mean"] = m.mse_mean;
        entry["mse_std"] = m.mse_std;
        entry["rho_mean"] = m.rho_mean;
        entry["rho_std"] = m.rho_std;
        entry["runs"] = m.runs;
        entry["rho_undefined"] = m.rho_undefined;
        entry["failures"] = m.failures;
        Json per_run = Json::array();
        for (const auto& r : m.per_run) {
            Json row = Json::object();
            row["run_id"] = r.run_id;
            row["mse"] = optional_number(r.mse);
            row["rho"] = optional_number(r.rho);
            if (!r.error.empty()) row["error"] = r.error;
            if (include_trajectories) row["trajectories"] = trajectories_to_json(r.trajectories);
            per_run.push_back(std::move(row));
        }
        entry["per_run"] = std::move(per_run);
        list.push_back(std::move(entry));
    }
    root["methods"] = std::move(list);
    return root;
}

std::string EvalReport::to_table() const {
    std::vector<std::array<std::string, 3>> rows;
    rows.push_back({"Method", "All-steps MSE", "Final-step Spearman"});
    for (const auto& m : methods) {
        std::string rho = m.runs - m.rho_undefined > 0
                              ? fmt::format("{:.3f} ± {:.3f}", m.rho_mean, m.rho_std)
                              : std::string("undefined");
        std::string mse = m.runs > 0 ? fmt::format("{:.4g} ± {:.2g}", m.mse_mean, m.mse_std)
                                     : std::string("failed");
        rows.push_back({m.name, mse, rho});
    }
    // "±" is two bytes but one column; count code points for alignment.
    auto width = [](const std::string& s) {
        return static_cast<std::size_t>(
            std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
    };
    std::array<std::size_t, 3> widths{};
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < 3; ++c) widths[c] = std::max(widths[c], width(row[c]));
    }
    std::string out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            out += rows[r][c];
            if (c < 2) out += std::string(widths[c] - width(rows[r][c]) + 2, ' ');
        }
        out += '\n';
        if (r == 0) out += std::string(widths[0] + widths[1] + widths[2] + 4, '-') + '\n';
    }
    out += fmt::format("({} held-out runs, {} test examples)\n", run_count, test_example_count);
    return out;
}

CostReport cost_model(double n, double m, double checkpoints, double loss_cost,
                      double gradient_cost) {
    if (!(n > 0 && m > 0 && checkpoints > 0 && loss_cost > 0 && gradient_cost > 0)) {
        throw Error(ErrorKind::Validation, "cost model inputs must all be positive");
    }
    CostReport c;
    c.n = n;
    c.m = m;
    c.checkpoints = checkpoints;
    c.loss_cost = loss_cost;
    c.gradient_cost = gradient_cost;
    c.additive_cost = 2.0 * n * m * loss_cost;
    c.multiplicative_cost = c.additive_cost;
    c.linear_cost = 2.0 * c.additive_cost;
    c.tracin_cp_cost = (n + m) * checkpoints * gradient_cost;
    c.crossover_checkpoints = n * m / (n + m);
    return c;
}

Json CostReport::to_json() const {
    Json j = Json::object();
    j["n"] = n;
    j["m"] = m;
    j["checkpoints"] = checkpoints;
    j["loss_cost"] = loss_cost;
    j["gradient_cost"] = gradient_cost;
    j["additive_cost"] = additive_cost;
    j["multiplicative_cost"] = multiplicative_cost;
    j["linear_cost"] = linear_cost;
    j["tracin_cp_cost"] = tracin_cp_cost;
    j["crossover_checkpoints"] = crossover_checkpoints;
    return j;
}

std::string CostReport::to_table() const {
    std::string out;
    out += fmt::format("n = {:g}, m = {:g}, K = {:g}, V_L = {:g}, V_G = {:g}\n", n, m, checkpoints,
                       loss_cost, gradient_cost);
    out += fmt::format("{:<16}{:>16.6g}\n", "additive", additive_cost);
    out += fmt::format("{:<16}{:>16.6g}\n", "multiplicative", multiplicative_cost);
    out += fmt::format("{:<16}{:>16.6g}\n", "linear", linear_cost);
    out += fmt::format("{:<16}{:>16.6g}\n", "tracin-cp", tracin_cp_cost);
    out += fmt::format("crossover K* = nm/(n+m) = {:.6g}\n", crossover_checkpoints);
    return out;
}

}  // namespace trajsim
