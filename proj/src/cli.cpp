// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/cli.h"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "trajsim/analysis.h"
#include "trajsim/benchmark.h"
#include "trajsim/error.h"
#include "trajsim/json_io.h"
#include "trajsim/service.h"
#include "trajsim/simulate.h"
#include "trajsim/toy_lab.h"

namespace trajsim {
namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void emit(std::ostream& out, const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        out << content;
    } else {
        write_file(path, content);
    }
}

std::vector<SimulatorParams> select_params(std::vector<SimulatorParams> params,
                                           const std::vector<int>& ids) {
    if (ids.empty()) return params;
    std::vector<SimulatorParams> picked;
    for (const int id : ids) {
        const auto it = std::find_if(params.begin(), params.end(),
                                     [id](const auto& p) { return p.test_example_id == id; });
        if (it == params.end()) {
            throw Error(ErrorKind::NotFound, fmt::format("params have no simulator for test example {}", id));
        }
        picked.push_back(*it);
    }
    return picked;
}

const Run& find_run(const RunSet& runs, const std::string& run_id) {
    const Run* run = runs.find(run_id);
    if (run == nullptr) throw Error(ErrorKind::NotFound, fmt::format("unknown run '{}'", run_id));
    return *run;
}

std::optional<double> parse_lambda(const std::string& text) {
    if (text == "auto") return std::nullopt;
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        if (used == text.size() && value >= 0.0) return value;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Usage, fmt::format("--lambda expects 'auto' or a number >= 0, got '{}'", text));
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string config;
    std::string out;
    std::string trace_out;
    std::string truth_out;
    std::optional<std::uint64_t> seed;
};

int run_generate(const GenerateArgs& a, std::ostream& out) {
    const FlatConfig flat = parse_flat_config(read_file(a.config));
    const auto mode = flat.find("mode");
    if (mode != flat.end() && mode->second == "synthetic") {
        SyntheticSetup setup = parse_synthetic_config(flat);
        if (a.seed) setup.runs.seed = *a.seed;
        const auto truth = synthetic_truth(setup);
        const RunSet runs = generate_synthetic_runs(truth, setup.runs);
        write_file(a.out, serialize_run_set(runs));
        if (!a.truth_out.empty()) write_file(a.truth_out, serialize_params(truth));
        out << fmt::format("wrote {} synthetic runs (n = {}, m = {}) to {}\n", runs.runs.size(),
                           runs.n, runs.m(), a.out);
        return 0;
    }
    RunCollectionConfig config = parse_collection_config(flat);
    if (a.seed) config.seed = *a.seed;
    const RunCollection collection = make_run_collection(config);
    write_file(a.out, serialize_run_set(collection.runs));
    if (!a.trace_out.empty()) write_file(a.trace_out, serialize_traces(collection.traces));
    out << fmt::format("wrote {} toy runs (n = {}, m = {}) to {}\n", collection.runs.runs.size(),
                       collection.runs.n, collection.runs.m(), a.out);
    return 0;
}

struct FitArgs {
    std::string runs;
    std::vector<int> test_ids;
    std::string variant = "linear";
    std::string lambda = "auto";
    int validation_runs = 2;
    std::string out;
};

int run_fit(const FitArgs& a, std::ostream& out) {
    FitRequest request;
    request.test_ids = a.test_ids;
    request.variant = variant_from_string(a.variant);
    request.lambda = parse_lambda(a.lambda);
    const RunSet runs = load_run_log(a.runs);
    std::vector<Run> fit;
    std::vector<Run> validation;
    split_past_runs(runs, request.lambda ? 0 : a.validation_runs, fit, validation);
    const auto params = fit_simulators(fit, validation, runs.m(), request);
    emit(out, a.out, serialize_params(params));
    return 0;
}

struct SimulateArgs {
    std::string params;
    std::vector<int> test_ids;
    std::string curriculum;
    std::optional<double> l0;
    std::string runs;
    std::string run_id;
    std::string out;
};

int run_simulate(const SimulateArgs& a, std::ostream& out) {
    const auto params = select_params(parse_params(read_file(a.params)), a.test_ids);
    std::vector<SimulatedTrajectory> trajectories;
    if (!a.curriculum.empty()) {
        if (!a.l0) throw Error(ErrorKind::Usage, "--curriculum needs --l0");
        const Curriculum curriculum =
            curriculum_from_json(parse_json(read_file(a.curriculum), a.curriculum), "curriculum");
        for (const auto& p : params) trajectories.push_back(simulate(p, curriculum, *a.l0));
    } else {
        if (a.runs.empty() || a.run_id.empty()) {
            throw Error(ErrorKind::Usage, "give --curriculum and --l0, or --runs and --run-id");
        }
        const RunSet runs = load_run_log(a.runs);
        const Run& run = find_run(runs, a.run_id);
        for (const auto& p : params) trajectories.push_back(what_if(p, run, {}));
    }
    emit(out, a.out, serialize_trajectories(trajectories));
    return 0;
}

struct WhatIfArgs {
    std::string params;
    std::string runs;
    std::string run_id;
    std::string edits;
    std::vector<int> test_ids;
    std::string out;
};

int run_whatif(const WhatIfArgs& a, std::ostream& out) {
    const auto params = parse_params(read_file(a.params));
    const RunSet runs = load_run_log(a.runs);
    const Run& run = find_run(runs, a.run_id);
    const auto edits = edits_from_json(parse_json(read_file(a.edits), a.edits));
    std::vector<int> ids = a.test_ids;
    if (ids.empty()) {
        for (const auto& p : params) ids.push_back(p.test_example_id);
    }
    const std::string ref = std::filesystem::path(a.params).stem().string();
    emit(out, a.out, dump_canonical(whatif_document(ref, params, run, edits, ids)) + "\n");
    return 0;
}

struct EvaluateArgs {
    std::string runs;
    std::vector<std::string> params;
    int validation_runs = 2;
    std::string config;
    std::string traces;
    int checkpoints = 10;
    bool all_steps = false;
    std::string out;
    std::string dump;
};

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
    EvalReport report;
    if (a.runs.empty()) {
        if (a.config.empty()) throw Error(ErrorKind::Usage, "evaluate needs --runs or --config");
        const RunCollection collection =
            make_run_collection(parse_collection_config(read_file(a.config)));
        BenchmarkOptions options;
        options.tracin_checkpoints = a.checkpoints;
        options.include_tracin_all_steps = a.all_steps;
        report = run_benchmark(collection, options, !a.dump.empty());
    } else {
        const RunSet runs = load_run_log(a.runs);
        const auto future = runs.with_role(Role::Future);
        if (future.empty()) throw Error(ErrorKind::NoData, "run log has no future runs to evaluate on");
        std::vector<Run> fit;
        std::vector<Run> validation;
        std::vector<Method> methods;
        if (a.params.empty()) {
            split_past_runs(runs, a.validation_runs, fit, validation);
            for (const auto variant : {Variant::Linear, Variant::Additive, Variant::Multiplicative}) {
                FitRequest request;
                request.variant = variant;
                methods.push_back(simulator_method(std::string(to_string(variant)),
                                                   fit_simulators(fit, validation, runs.m(), request)));
            }
        } else {
            for (const auto& path : a.params) {
                methods.push_back(simulator_method(std::filesystem::path(path).stem().string(),
                                                   parse_params(read_file(path))));
            }
        }
        if (!a.traces.empty()) {
            if (a.config.empty()) throw Error(ErrorKind::Usage, "--traces needs --config");
            const RunCollectionConfig config = parse_collection_config(read_file(a.config));
            auto data = std::make_shared<const ToyDataset>(make_toy_dataset(config.dataset));
            const SoftmaxModel model(data->dim, data->classes, config.l2);
            auto source_for = [&](const std::string& run_id) -> std::shared_ptr<const GradientSource> {
                const Run& run = find_run(runs, run_id);
                std::vector<int> ids;
                for (const auto& batch : run.curriculum.steps) ids.insert(ids.end(), batch.begin(), batch.end());
                std::sort(ids.begin(), ids.end());
                ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
                return std::make_shared<const ToyGradientSource>(data, model, ids);
            };
            if (fit.empty()) split_past_runs(runs, a.validation_runs, fit, validation);
            std::vector<CheckpointTrace> fit_traces;
            for (auto& trace : parse_traces(read_file(a.traces), source_for)) {
                if (trace.checkpoints.empty()) continue;
                const auto& id = trace.checkpoints.front().run_id;
                if (std::any_of(fit.begin(), fit.end(), [&](const Run& r) { return r.run_id == id; })) {
                    fit_traces.push_back(std::move(trace));
                }
            }
            const CheckpointTrace all = CheckpointTrace::concat(fit_traces);
            const double step_scale = 1.0 / config.batch_size;
            methods.push_back(tracin_cp_method("tracin-cp", all.evenly_spaced(a.checkpoints), runs.n,
                                               runs.m(), step_scale));
            if (a.all_steps) {
                methods.push_back(tracin_cp_method("tracin-cp-all", all, runs.n, runs.m(), step_scale));
            }
        }
        report = compare_methods(methods, future, !a.dump.empty());
    }
    out << report.to_table();
    if (!a.out.empty()) write_file(a.out, dump_canonical(report.to_json(false)) + "\n");
    if (!a.dump.empty()) write_file(a.dump, dump_canonical(report.to_json(true)) + "\n");
    return 0;
}

struct DiagnoseArgs {
    std::string runs;
    int test_id = 1;
    std::string variant = "linear";
    bool json = false;
};

int run_diagnose(const DiagnoseArgs& a, std::ostream& out) {
    const RunSet runs = load_run_log(a.runs);
    const auto past = runs.with_role(Role::Past);
    const DesignProblem problem = build_design(past, a.test_id, variant_from_string(a.variant));
    const IdentifiabilityReport r = check_identifiability(problem);
    if (a.json) {
        Json j = Json::object();
        j["test_example_id"] = a.test_id;
        j["variant"] = a.variant;
        j["rows"] = r.rows;
        j["cols"] = r.cols;
        j["rank"] = r.rank;
        j["tolerance"] = r.tolerance;
        j["too_few_rows"] = r.too_few_rows;
        j["under_observed"] = r.under_observed;
        j["constant_loss"] = r.constant_loss;
        j["passes"] = r.passes();
        out << dump_canonical(j) << '\n';
        return 0;
    }
    auto ids = [](const std::vector<int>& v) {
        return v.empty() ? std::string("none") : fmt::format("{}", fmt::join(v, ", "));
    };
    out << fmt::format("design: {} rows x {} columns, numerical rank {} (tol {:.3g})\n", r.rows,
                       r.cols, r.rank, r.tolerance);
    out << fmt::format("(1) rows >= parameters:          {}\n", r.too_few_rows ? "FAIL" : "ok");
    out << fmt::format("(2) under-observed examples:     {}\n", ids(r.under_observed));
    out << fmt::format("(3) constant-loss collinearity:  {}\n", ids(r.constant_loss));
    out << (r.passes() ? "identifiable: unique least-squares solution at lambda = 0\n"
                       : "not identifiable at lambda = 0 (minimum-norm solution will be used)\n");
    return 0;
}

struct CostArgs {
    double n = 0, m = 0, k = 0, vl = 1, vg = 2;
    bool json = false;
};

int run_cost(const CostArgs& a, std::ostream& out) {
    const CostReport report = cost_model(a.n, a.m, a.k, a.vl, a.vg);
    out << (a.json ? dump_canonical(report.to_json()) + "\n" : report.to_table());
    return 0;
}

struct ServeArgs {
    std::string store;
    std::string bind = "127.0.0.1:8080";
    std::string static_dir;
};

int run_serve(ServeArgs a) {
    if (a.store.empty()) {
        if (const char* env = std::getenv("TRAJSIM_STORE")) a.store = env;
    }
    if (a.store.empty()) throw Error(ErrorKind::Usage, "serve needs --store or TRAJSIM_STORE");
    return serve(a.store, a.bind, a.static_dir);
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fit, run and evaluate training-run simulators.", "trajsim"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Generate toy or synthetic runs from a config");
    generate->add_option("--config", gen.config, "flat key = value config")->required();
    generate->add_option("--out", gen.out, "run log to write")->required();
    generate->add_option("--trace-out", gen.trace_out, "checkpoint sidecar (toy mode)");
    generate->add_option("--truth-out", gen.truth_out, "ground-truth params (synthetic mode)");
    generate->add_option("--seed", gen.seed, "override the config seed");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit one simulator per test example");
    fit_cmd->add_option("--runs", fit.runs)->required();
    fit_cmd->add_option("--test-id", fit.test_ids, "repeatable; default: all");
    fit_cmd->add_option("--variant", fit.variant)->check(CLI::IsMember({"linear", "additive", "multiplicative"}));
    fit_cmd->add_option("--lambda", fit.lambda, "auto or a value >= 0");
    fit_cmd->add_option("--val-runs", fit.validation_runs, "past runs held out to select lambda");
    fit_cmd->add_option("--out", fit.out, "params document (default: stdout)");

    SimulateArgs sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "Roll out fitted simulators");
    simulate_cmd->add_option("--params", sim.params)->required();
    simulate_cmd->add_option("--test-id", sim.test_ids);
    simulate_cmd->add_option("--curriculum", sim.curriculum, "curriculum document {n, steps}");
    simulate_cmd->add_option("--l0", sim.l0);
    simulate_cmd->add_option("--runs", sim.runs);
    simulate_cmd->add_option("--run-id", sim.run_id);
    simulate_cmd->add_option("--out", sim.out);

    WhatIfArgs wi;
    auto* whatif_cmd = app.add_subcommand("whatif", "Simulate an edited curriculum of a recorded run");
    whatif_cmd->add_option("--params", wi.params)->required();
    whatif_cmd->add_option("--runs", wi.runs)->required();
    whatif_cmd->add_option("--run-id", wi.run_id)->required();
    whatif_cmd->add_option("--edits", wi.edits, "JSON array of edits")->required();
    whatif_cmd->add_option("--test-id", wi.test_ids);
    whatif_cmd->add_option("--out", wi.out);

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Compare simulators on held-out runs");
    evaluate->add_option("--runs", ev.runs, "run log; omitted: regenerate from --config");
    evaluate->add_option("--params", ev.params, "params documents to compare (repeatable)");
    evaluate->add_option("--val-runs", ev.validation_runs);
    evaluate->add_option("--config", ev.config, "toy collection config");
    evaluate->add_option("--traces", ev.traces, "checkpoint sidecar for TracIn-CP");
    evaluate->add_option("--checkpoints", ev.checkpoints, "TracIn-CP checkpoint count");
    evaluate->add_flag("--all-steps", ev.all_steps, "also run TracIn-CP on every checkpoint");
    evaluate->add_option("--out", ev.out, "JSON report");
    evaluate->add_option("--dump-trajectories", ev.dump, "JSON report with trajectories");

    DiagnoseArgs diag;
    auto* diagnose = app.add_subcommand("diagnose", "Identifiability report for one test example");
    diagnose->add_option("--runs", diag.runs)->required();
    diagnose->add_option("--test-id", diag.test_id)->required();
    diagnose->add_option("--variant", diag.variant)->check(CLI::IsMember({"linear", "additive", "multiplicative"}));
    diagnose->add_flag("--json", diag.json);

    CostArgs cost;
    auto* cost_cmd = app.add_subcommand("cost", "Loss-versus-gradient cost model");
    cost_cmd->add_option("--n", cost.n)->required();
    cost_cmd->add_option("--m", cost.m)->required();
    cost_cmd->add_option("--k", cost.k, "TracIn-CP checkpoints")->required();
    cost_cmd->add_option("--vl", cost.vl, "cost of one loss evaluation");
    cost_cmd->add_option("--vg", cost.vg, "cost of one gradient evaluation");
    cost_cmd->add_flag("--json", cost.json);

    ServeArgs srv;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP service over a store directory");
    serve_cmd->add_option("--store", srv.store, "directory with runs.log and params/");
    serve_cmd->add_option("--bind", srv.bind, "host:port");
    serve_cmd->add_option("--static", srv.static_dir, "static files mounted at /ui");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "trajsim: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*generate) return run_generate(gen, out);
        if (*fit_cmd) return run_fit(fit, out);
        if (*simulate_cmd) return run_simulate(sim, out);
        if (*whatif_cmd) return run_whatif(wi, out);
        if (*evaluate) return run_evaluate(ev, out);
        if (*diagnose) return run_diagnose(diag, out);
        if (*cost_cmd) return run_cost(cost, out);
        if (*serve_cmd) return run_serve(srv);
    } catch (const Error& e) {
        err << "trajsim: " << e.what() << '\n';
        return e.kind() == ErrorKind::Usage ? kExitUsage : kExitData;
    } catch (const std::exception& e) {
        err << "trajsim: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace trajsim
