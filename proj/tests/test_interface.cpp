// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <sstream>
#include <thread>

#include "fixtures.h"
#include "trajsim/cli.h"
#include "trajsim/error.h"
#include "trajsim/json_io.h"
#include "trajsim/service.h"
#include "trajsim/simulate.h"

#include <httplib.h>

using namespace trajsim;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("trajsim-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli_dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

/// Runs the real binary; returns its exit status.
int run_binary(const std::string& arguments) {
    const std::string command = std::string(TRAJSIM_CLI) + " " + arguments + " >/dev/null 2>&1";
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSyntheticConfig =
    "mode = synthetic\nn = 6\ntest_count = 3\nruns = 7\nfuture_runs = 2\n"
    "batch_size = 2\nepochs = 3\nnoise_sigma = 0.01\nseed = 4\n";

/// A generated synthetic store: runs.log plus the config that produced it.
struct SyntheticStore {
    TempDir dir;
    SyntheticStore() {
        write_file(dir / "synthetic.cfg", kSyntheticConfig);
        const CliResult r = cli({"generate", "--config", dir / "synthetic.cfg", "--out", dir / "runs.log"});
        EXPECT_EQ(r.code, 0) << r.err;
    }
};

Store halving_store() {
    Store store;
    store.runs.n = 2;
    store.runs.train_names = {"a", "b"};
    store.runs.test_names = {"z"};
    store.runs.runs.push_back(fixture::run(2, {{1}, {2}}, {100, 60, 30}, "base", 1, Role::Past));
    store.runs.runs.push_back(fixture::run(2, {{2}, {1}, {2}}, {90, 50, 20, 10}, "other", 1, Role::Past));
    store.runs.runs.push_back(fixture::run(2, {{1}, {1}}, {80, 40, 25}, "third", 1, Role::Past));
    store.runs.runs.push_back(fixture::run(2, {{1}, {2}}, {70, 40, 20}, "future", 1, Role::Future));
    store.params["halving"] = {fixture::params(Variant::Linear, fixture::vec({0.5, 0.5}),
                                               fixture::vec({0, 0}))};
    store.params["skewed"] = {fixture::params(Variant::Linear, fixture::vec({0.5, 0.9}),
                                              fixture::vec({1.0, -2.0}))};
    return store;
}

Json body_of(const HttpResponse& r) { return Json::parse(r.body); }

HttpResponse post(Service& s, const std::string& path, const std::string& body) {
    return s.handle({"POST", path, body});
}

HttpResponse get(Service& s, const std::string& path) { return s.handle({"GET", path, ""}); }

}  // namespace

// ---------------------------------------------------------------------------
// CLI

TEST(Cli, FitHappyPath) {
    SyntheticStore store;
    const CliResult r = cli({"fit", "--runs", store.dir / "runs.log", "--test-id", "3", "--variant",
                             "linear", "--lambda", "auto", "--out", store.dir / "params.json"});
    EXPECT_EQ(r.code, 0) << r.err;
    const auto params = parse_params(read_file(store.dir / "params.json"));
    ASSERT_EQ(params.size(), 1u);
    EXPECT_EQ(params[0].test_example_id, 3);
    EXPECT_EQ(params[0].n(), 6);
}

TEST(Cli, MissingCurriculumFileExitsTwo) {
    SyntheticStore store;
    ASSERT_EQ(cli({"fit", "--runs", store.dir / "runs.log", "--lambda", "0.1", "--out",
                   store.dir / "params.json"})
                  .code,
              0);
    const CliResult r = cli({"simulate", "--params", store.dir / "params.json", "--curriculum",
                             store.dir / "missing.json", "--l0", "1"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("missing.json"), std::string::npos) << r.err;
    EXPECT_EQ(run_binary("simulate --params " + store.dir / "params.json" + " --curriculum " +
                         store.dir / "missing.json --l0 1"),
              2);
}

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(cli({"frobnicate"}).code, 1);
    EXPECT_EQ(cli({}).code, 1);
    EXPECT_EQ(cli({"fit"}).code, 1);
    EXPECT_EQ(cli({"cost", "--n", "10", "--m", "10", "--k", "1", "--bogus"}).code, 1);
    EXPECT_EQ(cli({"fit", "--runs", "x.log", "--lambda", "-3"}).code, 1);
    EXPECT_EQ(run_binary("frobnicate"), 1);
    EXPECT_EQ(run_binary("--help"), 0);
}

TEST(Cli, CostReport) {
    const CliResult r = cli({"cost", "--n", "10000", "--m", "10", "--k", "5", "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_DOUBLE_EQ(j["crossover_checkpoints"].get<double>(), 10000.0 * 10.0 / 10010.0);
}

TEST(Cli, DiagnoseReportsConditions) {
    SyntheticStore store;
    const CliResult r = cli({"diagnose", "--runs", store.dir / "runs.log", "--test-id", "1", "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_EQ(j["cols"], 12);
    EXPECT_EQ(j["passes"], true);
}

TEST(Cli, WhatIfAndSimulateAgreeWithoutEdits) {
    SyntheticStore store;
    ASSERT_EQ(cli({"fit", "--runs", store.dir / "runs.log", "--lambda", "0.001", "--out",
                   store.dir / "p.json"})
                  .code,
              0);
    write_file(store.dir / "edits.json", "[]");
    const CliResult w = cli({"whatif", "--params", store.dir / "p.json", "--runs", store.dir / "runs.log",
                             "--run-id", "run-005", "--edits", store.dir / "edits.json"});
    ASSERT_EQ(w.code, 0) << w.err;
    const CliResult s = cli({"simulate", "--params", store.dir / "p.json", "--runs",
                             store.dir / "runs.log", "--run-id", "run-005"});
    ASSERT_EQ(s.code, 0) << s.err;
    const Json doc = Json::parse(w.out);
    EXPECT_EQ(doc["params_ref"], "p");
    EXPECT_EQ(doc["edited"], Json::parse(s.out)["trajectories"]);
    EXPECT_EQ(doc["base"], doc["edited"]);
}

TEST(Cli, GenerateFitSimulateIsByteIdentical) {
    TempDir a, b;
    for (const TempDir* d : {&a, &b}) {
        write_file(*d / "s.cfg", kSyntheticConfig);
        write_file(*d / "c.json", R"({"n":6,"steps":[[1,2],[3],[4,5,6],[1]]})");
        ASSERT_EQ(run_binary("generate --config " + *d / "s.cfg" + " --out " + *d / "runs.log" +
                             " --truth-out " + *d / "truth.json"),
                  0);
        ASSERT_EQ(run_binary("fit --runs " + *d / "runs.log" + " --out " + *d / "p.json"), 0);
        ASSERT_EQ(run_binary("simulate --params " + *d / "p.json" + " --curriculum " + *d / "c.json" +
                             " --l0 2.5 --out " + *d / "sim.json"),
                  0);
    }
    for (const std::string name : {"runs.log", "truth.json", "p.json", "sim.json"}) {
        EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
    }
}

TEST(Cli, DeskPipelineUnderOneMinute) {
    TempDir d;
    write_file(d / "toy.cfg", "mode = toy\nseed = 3\ndataset_seed = 3\n");
    const auto start = std::chrono::steady_clock::now();
    CliResult r = cli({"generate", "--config", d / "toy.cfg", "--out", d / "runs.log", "--trace-out",
                       d / "traces.jsonl"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli({"fit", "--runs", d / "runs.log", "--out", d / "linear.json"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli({"evaluate", "--runs", d / "runs.log", "--config", d / "toy.cfg", "--traces",
             d / "traces.jsonl", "--out", d / "eval.json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(seconds, 60.0);
    const Json report = Json::parse(read_file(d / "eval.json"));
    ASSERT_EQ(report["methods"].size(), 4u);
    EXPECT_EQ(report["methods"][3]["name"], "tracin-cp");
    EXPECT_NE(r.out.find("linear"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Service handlers

TEST(Service, HealthRunsAndParams) {
    Service s(halving_store());
    EXPECT_EQ(body_of(get(s, "/health"))["status"], "ok");
    const Json runs = body_of(get(s, "/runs"));
    EXPECT_EQ(runs["runs"].size(), 4u);
    EXPECT_EQ(runs["runs"][3]["role"], "future");
    const HttpResponse run = get(s, "/runs/base");
    EXPECT_EQ(run.status, 200);
    EXPECT_EQ(body_of(run)["steps"], Json::parse("[[1],[2]]"));
    const Json params = body_of(get(s, "/params"));
    EXPECT_EQ(params["params"].size(), 2u);
    EXPECT_EQ(params["params"][0]["ref"], "halving");
    EXPECT_EQ(parse_params(get(s, "/params/skewed").body)[0].B[1], -2.0);
}

TEST(Service, SimulateHalvingExample) {
    Service s(halving_store());
    const HttpResponse r = post(
        s, "/simulate", R"({"params_ref":"halving","curriculum":{"n":2,"steps":[[1],[2]]},"L0":100})");
    ASSERT_EQ(r.status, 200) << r.body;
    const auto trajectories = parse_trajectories(r.body);
    ASSERT_EQ(trajectories.size(), 1u);
    EXPECT_EQ(trajectories[0].losses, (std::vector<double>{50.0, 25.0}));
}

TEST(Service, WhatIfWithoutEditsEqualsSimulate) {
    Service s(halving_store());
    const Json w = body_of(post(s, "/whatif", R"({"params_ref":"skewed","run_id":"other","edits":[]})"));
    const Json sim =
        body_of(post(s, "/simulate", R"({"params_ref":"skewed","run_id":"other"})"));
    EXPECT_EQ(w["edited"], sim["trajectories"]);
    EXPECT_EQ(w["base"], sim["trajectories"]);
}

TEST(Service, WhatIfAppliesEdits) {
    Service s(halving_store());
    const Json w = body_of(post(
        s, "/whatif",
        R"({"params_ref":"skewed","run_id":"other","edits":[{"op":"remove-example","id":1}]})"));
    EXPECT_EQ(w["curriculum"]["steps"], Json::parse("[[2],[2]]"));
    const auto expected = simulate(halving_store().params["skewed"][0], Curriculum{2, {{2}, {2}}}, 90);
    EXPECT_EQ(w["edited"][0]["losses"].get<std::vector<double>>(), expected.losses);
}

TEST(Service, StatusCodes) {
    Service s(halving_store());
    const auto check = [&](const HttpResponse& r, int status, const std::string& kind) {
        EXPECT_EQ(r.status, status) << r.body;
        const Json body = body_of(r);
        EXPECT_EQ(body["error"]["kind"], kind) << r.body;
        EXPECT_FALSE(body["error"]["message"].get<std::string>().empty());
    };
    check(post(s, "/simulate", "{not json"), 400, "parse error");
    check(post(s, "/simulate", R"({"params_ref":"nope","run_id":"base"})"), 404, "not found");
    check(post(s, "/whatif", R"({"params_ref":"halving","run_id":"nope"})"), 404, "not found");
    check(get(s, "/runs/nope"), 404, "not found");
    check(get(s, "/params/nope"), 404, "not found");
    check(get(s, "/jobs/job-9"), 404, "not found");
    check(get(s, "/elsewhere"), 404, "not found");
    check(post(s, "/whatif",
               R"({"params_ref":"halving","run_id":"base","edits":[{"op":"remove-example","id":7}]})"),
          422, "edit error");
    check(post(s, "/simulate",
               R"({"params_ref":"halving","curriculum":{"n":2,"steps":[[3]]},"L0":1})"),
          422, "validation error");
}

TEST(Service, FitJobCreatesNewRef) {
    Service s(halving_store());
    const HttpResponse accepted = post(s, "/fit", R"({"variant":"additive","lambda":0.01})");
    ASSERT_EQ(accepted.status, 202) << accepted.body;
    const Json job = body_of(accepted);
    EXPECT_EQ(job["job_id"], "job-1");
    s.wait_for_jobs();
    const Json done = body_of(get(s, job["poll"].get<std::string>()));
    ASSERT_EQ(done["status"], "done") << done.dump();
    EXPECT_EQ(done["params_ref"], "fit-1");
    const auto params = parse_params(get(s, "/params/fit-1").body);
    EXPECT_EQ(params[0].variant, Variant::Additive);
    // Existing refs are untouched.
    EXPECT_EQ(parse_params(get(s, "/params/halving").body), halving_store().params["halving"]);
    post(s, "/fit", R"({"lambda":"auto","validation_runs":1})");
    s.wait_for_jobs();
    EXPECT_EQ(body_of(get(s, "/jobs/job-2"))["params_ref"], "fit-2");
}

TEST(Service, FitRejectsBadSplitSynchronously) {
    Service s(halving_store());
    const HttpResponse r = post(s, "/fit", R"({"validation_runs":5})");
    EXPECT_EQ(r.status, 422);
}

TEST(Service, FailedJobReportsError) {
    Service s(halving_store());
    ASSERT_EQ(post(s, "/fit", R"({"lambda":0.1,"test_ids":[4]})").status, 202);
    s.wait_for_jobs();
    const Json job = body_of(get(s, "/jobs/job-1"));
    EXPECT_EQ(job["status"], "failed");
    EXPECT_NE(job["error"].get<std::string>().find("out of range"), std::string::npos);
}

TEST(Service, PersistsFittedParams) {
    SyntheticStore store;
    Service s(load_store(store.dir.path().string()));
    ASSERT_EQ(post(s, "/fit", R"({"lambda":0.01})").status, 202);
    s.wait_for_jobs();
    ASSERT_TRUE(fs::exists(store.dir / "params/fit-1.json"));
    EXPECT_EQ(read_file(store.dir / "params/fit-1.json"), get(s, "/params/fit-1").body);
    // A reloaded store sees the persisted ref.
    EXPECT_EQ(load_store(store.dir.path().string()).params.count("fit-1"), 1u);
}

TEST(Service, CliAndServiceProduceIdenticalDocuments) {
    SyntheticStore store;
    fs::create_directories(store.dir.path() / "params");
    ASSERT_EQ(cli({"fit", "--runs", store.dir / "runs.log", "--lambda", "0.001", "--out",
                   store.dir / "params/p.json"})
                  .code,
              0);
    Service s(load_store(store.dir.path().string()));
    const CliResult sim = cli({"simulate", "--params", store.dir / "params/p.json", "--runs",
                               store.dir / "runs.log", "--run-id", "run-006"});
    EXPECT_EQ(sim.out, post(s, "/simulate", R"({"params_ref":"p","run_id":"run-006"})").body);

    const std::string edits = R"([{"op":"duplicate-example","id":2,"count":3},{"op":"remove-steps","first":1,"last":2}])";
    write_file(store.dir / "edits.json", edits);
    const CliResult w = cli({"whatif", "--params", store.dir / "params/p.json", "--runs",
                             store.dir / "runs.log", "--run-id", "run-006", "--edits",
                             store.dir / "edits.json", "--test-id", "2"});
    ASSERT_EQ(w.code, 0) << w.err;
    const std::string request =
        R"({"params_ref":"p","run_id":"run-006","test_ids":[2],"edits":)" + edits + "}";
    EXPECT_EQ(w.out, post(s, "/whatif", request).body);
}

// ---------------------------------------------------------------------------
// HTTP front end

TEST(HttpServer, ConcurrentWhatIfMatchesSequentialReplay) {
    Service service(halving_store());
    HttpServer server(service);
    const int port = server.bind("127.0.0.1", 0);
    std::thread listener([&] { server.listen(); });

    std::vector<std::string> requests;
    for (int k = 0; k < 50; ++k) {
        const std::string ref = k % 2 == 0 ? "halving" : "skewed";
        const std::string run = k % 3 == 0 ? "base" : (k % 3 == 1 ? "other" : "third");
        std::string edits = "[]";
        if (k % 5 == 1) edits = R"([{"op":"remove-example","id":1}])";
        if (k % 5 == 2) edits = R"([{"op":"duplicate-example","id":2,"count":)" + std::to_string(k) + "}]";
        if (k % 5 == 3) edits = R"([{"op":"replace-batch","step":1,"batch":[1,2,2]}])";
        requests.push_back(R"({"params_ref":")" + ref + R"(","run_id":")" + run + R"(","edits":)" +
                           edits + "}");
    }
    std::vector<std::future<std::pair<int, std::string>>> pending;
    for (const auto& body : requests) {
        pending.push_back(std::async(std::launch::async, [port, body] {
            httplib::Client client("127.0.0.1", port);
            client.set_read_timeout(30, 0);
            const auto res = client.Post("/whatif", body, "application/json");
            return res ? std::make_pair(res->status, res->body)
                       : std::make_pair(-1, httplib::to_string(res.error()));
        }));
    }
    std::vector<std::pair<int, std::string>> concurrent;
    for (auto& f : pending) concurrent.push_back(f.get());
    server.stop();
    listener.join();

    for (std::size_t k = 0; k < requests.size(); ++k) {
        const HttpResponse expected = post(service, "/whatif", requests[k]);
        EXPECT_EQ(concurrent[k].first, expected.status) << "request " << k;
        EXPECT_EQ(concurrent[k].second, expected.body) << "request " << k;
    }
}

TEST(HttpServer, CorsAndRouting) {
    Service service(halving_store());
    HttpServer server(service);
    const int port = server.bind("127.0.0.1", 0);
    std::thread listener([&] { server.listen(); });
    httplib::Client client("127.0.0.1", port);
    const auto health = client.Get("/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");
    const auto missing = client.Get("/runs/nope");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);
    const auto bad = client.Post("/simulate", "{", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
    server.stop();
    listener.join();
}
