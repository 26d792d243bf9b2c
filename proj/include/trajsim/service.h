// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// HTTP service over a store directory:
//
//   <store>/runs.log          run log
//   <store>/params/<ref>.json fitted simulator documents (ref = file stem)
//
// Request handling is a pure function of an immutable store snapshot; the
// only mutation is appending params produced by /fit jobs.

#pragma once

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "trajsim/fitting.h"
#include "trajsim/run_model.h"
#include "trajsim/simulate.h"

namespace trajsim {

struct Store {
    RunSet runs;
    std::map<std::string, std::vector<SimulatorParams>> params;  // ref -> simulators
    std::string directory;  // empty: nothing is persisted
};

Store load_store(const std::string& directory);

/// The what-if document returned by POST /whatif and by `trajsim whatif`:
/// the edited curriculum plus base and edited trajectories per test id.
Json whatif_document(const std::string& params_ref, const std::vector<SimulatorParams>& params,
                     const Run& run, std::span<const CurriculumEdit> edits,
                     std::span<const int> test_ids);

struct HttpRequest {
    std::string method;
    std::string path;
    std::string body;
};

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

class Service {
public:
    explicit Service(Store store);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    HttpResponse handle(const HttpRequest& request);

    /// Blocks until every submitted fit job has finished.
    void wait_for_jobs();

private:
    struct Job {
        std::string status = "running";
        std::string params_ref;
        std::string error;
    };

    HttpResponse get_runs() const;
    HttpResponse get_run(const std::string& run_id) const;
    HttpResponse get_params() const;
    HttpResponse get_params_ref(const std::string& ref) const;
    HttpResponse post_simulate(const std::string& body) const;
    HttpResponse post_whatif(const std::string& body) const;
    HttpResponse post_fit(const std::string& body);
    HttpResponse get_job(const std::string& job_id) const;

    std::shared_ptr<const Store> snapshot() const;

    mutable std::shared_mutex store_mutex_;
    std::shared_ptr<const Store> store_;

    mutable std::mutex jobs_mutex_;
    std::condition_variable jobs_done_;
    std::map<std::string, Job> jobs_;
    int next_job_ = 1;
    int running_jobs_ = 0;
    std::vector<std::thread> workers_;
};

/// Socket front end for a Service. Every request is forwarded to
/// Service::handle; `static_directory`, if set, is mounted at /ui.
class HttpServer {
public:
    explicit HttpServer(Service& service, const std::string& static_directory = {});
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds host:port (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves on the bound socket until stop() is called.
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Runs an HTTP server until the process is stopped. `bind` is host:port.
int serve(const std::string& store_directory, const std::string& bind,
          const std::string& static_directory = {});

}  // namespace trajsim
