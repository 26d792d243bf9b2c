// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/service.h"

#include <filesystem>
#include <iostream>

#include <fmt/format.h>
#include <httplib.h>

#include "trajsim/benchmark.h"
#include "trajsim/error.h"
#include "trajsim/json_io.h"
#include "trajsim/simulate.h"

namespace trajsim {
namespace fs = std::filesystem;

namespace {

HttpResponse json_response(int status, const Json& body) {
    return {status, dump_canonical(body) + "\n", "application/json"};
}

HttpResponse error_response(int status, std::string_view kind, std::string_view message) {
    return json_response(status, Json{{"error", Json{{"kind", kind}, {"message", message}}}});
}

int status_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parse: return 400;
        case ErrorKind::NotFound: return 404;
        default: return 422;
    }
}

std::vector<int> requested_ids(const Json& body, const std::vector<SimulatorParams>& params) {
    std::vector<int> ids;
    if (body.contains("test_ids")) {
        const Json& list = body["test_ids"];
        if (!list.is_array()) {
            throw Error(ErrorKind::Parse, "test_ids: expected an array");
        }
        for (const auto& v : list) ids.push_back(static_cast<int>(field::as_integer(v, "test_ids")));
    } else {
        for (const auto& p : params) ids.push_back(p.test_example_id);
    }
    return ids;
}

const SimulatorParams& params_for(const std::vector<SimulatorParams>& params, int id,
                                  const std::string& ref) {
    for (const auto& p : params) {
        if (p.test_example_id == id) return p;
    }
    throw Error(ErrorKind::NotFound,
                fmt::format("params '{}' has no simulator for test example {}", ref, id));
}

}  // namespace

Json whatif_document(const std::string& params_ref, const std::vector<SimulatorParams>& params,
                     const Run& run, std::span<const CurriculumEdit> edits,
                     std::span<const int> test_ids) {
    const Curriculum edited = apply_edits(run.curriculum, edits);
    std::vector<SimulatedTrajectory> base;
    std::vector<SimulatedTrajectory> changed;
    for (const int id : test_ids) {
        const SimulatorParams& p = params_for(params, id, params_ref);
        base.push_back(what_if(p, run, {}));
        changed.push_back(what_if(p, run, edits));
    }
    Json edit_list = Json::array();
    for (const auto& e : edits) edit_list.push_back(edit_to_json(e));
    Json document = Json::object();
    document["format"] = "trajsim-whatif";
    document["version"] = 1;
    document["params_ref"] = params_ref;
    document["run_id"] = run.run_id;
    document["edits"] = std::move(edit_list);
    document["curriculum"] = curriculum_to_json(edited);
    document["base"] = trajectories_to_json(base);
    document["edited"] = trajectories_to_json(changed);
    return document;
}

Store load_store(const std::string& directory) {
    Store store;
    store.directory = directory;
    store.runs = load_run_log((fs::path(directory) / "runs.log").string());
    const fs::path params_dir = fs::path(directory) / "params";
    if (fs::is_directory(params_dir)) {
        for (const auto& entry : fs::directory_iterator(params_dir)) {
            if (entry.path().extension() != ".json") continue;
            store.params[entry.path().stem().string()] =
                parse_params(read_file(entry.path().string()));
        }
    }
    return store;
}

Service::Service(Store store) : store_(std::make_shared<const Store>(std::move(store))) {}

Service::~Service() {
    wait_for_jobs();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(jobs_mutex_);
        workers.swap(workers_);
    }
    for (auto& w : workers) {
        if (w.joinable()) w.join();
    }
}

void Service::wait_for_jobs() {
    std::unique_lock lock(jobs_mutex_);
    jobs_done_.wait(lock, [this] { return running_jobs_ == 0; });
}

std::shared_ptr<const Store> Service::snapshot() const {
    std::shared_lock lock(store_mutex_);
    return store_;
}

HttpResponse Service::handle(const HttpRequest& request) {
    try {
        const std::string& path = request.path;
        if (request.method == "GET") {
            if (path == "/health") return json_response(200, Json{{"status", "ok"}});
            if (path == "/runs") return get_runs();
            if (path.starts_with("/runs/")) return get_run(path.substr(6));
            if (path == "/params") return get_params();
            if (path.starts_with("/params/")) return get_params_ref(path.substr(8));
            if (path.starts_with("/jobs/")) return get_job(path.substr(6));
        } else if (request.method == "POST") {
            if (path == "/simulate") return post_simulate(request.body);
            if (path == "/whatif") return post_whatif(request.body);
            if (path == "/fit") return post_fit(request.body);
        }
        return error_response(404, to_string(ErrorKind::NotFound),
                              fmt::format("no route for {} {}", request.method, path));
    } catch (const Error& e) {
        return error_response(status_for(e.kind()), to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
        std::cerr << "trajsim service: internal error on " << request.method << ' '
                  << request.path << ": " << e.what() << '\n';
        return error_response(500, "internal", "internal error");
    }
}

HttpResponse Service::get_runs() const {
    const auto store = snapshot();
    const RunSet& rs = store->runs;
    Json runs = Json::array();
    for (const auto& run : rs.runs) {
        Json ids = Json::array();
        for (const auto& t : run.trajectories) ids.push_back(t.test_example_id);
        runs.push_back(Json{{"run_id", run.run_id},
                            {"role", to_string(run.role)},
                            {"length", run.length()},
                            {"test_ids", std::move(ids)}});
    }
    return json_response(200, Json{{"n", rs.n},
                                   {"m", rs.m()},
                                   {"train_examples", rs.train_names},
                                   {"test_examples", rs.test_names},
                                   {"runs", std::move(runs)}});
}

HttpResponse Service::get_run(const std::string& run_id) const {
    const auto store = snapshot();
    const Run* run = store->runs.find(run_id);
    if (run == nullptr) {
        throw Error(ErrorKind::NotFound, fmt::format("unknown run '{}'", run_id));
    }
    return {200, serialize_run(*run) + "\n", "application/json"};
}

HttpResponse Service::get_params() const {
    const auto store = snapshot();
    Json list = Json::array();
    for (const auto& [ref, params] : store->params) {
        Json simulators = Json::array();
        for (const auto& p : params) {
            simulators.push_back(Json{{"test_example_id", p.test_example_id},
                                      {"variant", to_string(p.variant)},
                                      {"lambda", p.lambda},
                                      {"n", p.n()}});
        }
        list.push_back(Json{{"ref", ref}, {"simulators", std::move(simulators)}});
    }
    return json_response(200, Json{{"params", std::move(list)}});
}

HttpResponse Service::get_params_ref(const std::string& ref) const {
    const auto store = snapshot();
    const auto it = store->params.find(ref);
    if (it == store->params.end()) {
        throw Error(ErrorKind::NotFound, fmt::format("unknown params ref '{}'", ref));
    }
    return {200, serialize_params(it->second), "application/json"};
}

HttpResponse Service::post_simulate(const std::string& body) const {
    const auto store = snapshot();
    const Json request = parse_json(body, "request");
    const std::string ref = field::string(request, "params_ref", "request");
    const auto it = store->params.find(ref);
    if (it == store->params.end()) {
        throw Error(ErrorKind::NotFound, fmt::format("unknown params ref '{}'", ref));
    }
    const auto ids = requested_ids(request, it->second);

    std::vector<SimulatedTrajectory> trajectories;
    if (request.contains("run_id")) {
        const std::string run_id = field::string(request, "run_id", "request");
        const Run* run = store->runs.find(run_id);
        if (run == nullptr) throw Error(ErrorKind::NotFound, fmt::format("unknown run '{}'", run_id));
        for (const int id : ids) {
            trajectories.push_back(what_if(params_for(it->second, id, ref), *run, {}));
        }
    } else {
        const Curriculum curriculum =
            curriculum_from_json(field::require(request, "curriculum", "request"), "curriculum");
        const double l0 = field::number(request, "L0", "request");
        for (const int id : ids) {
            trajectories.push_back(simulate(params_for(it->second, id, ref), curriculum, l0));
        }
    }
    return {200, serialize_trajectories(trajectories), "application/json"};
}

HttpResponse Service::post_whatif(const std::string& body) const {
    const auto store = snapshot();
    const Json request = parse_json(body, "request");
    const std::string ref = field::string(request, "params_ref", "request");
    const auto it = store->params.find(ref);
    if (it == store->params.end()) {
        throw Error(ErrorKind::NotFound, fmt::format("unknown params ref '{}'", ref));
    }
    const std::string run_id = field::string(request, "run_id", "request");
    const Run* run = store->runs.find(run_id);
    if (run == nullptr) throw Error(ErrorKind::NotFound, fmt::format("unknown run '{}'", run_id));
    const auto edits = request.contains("edits") ? edits_from_json(request["edits"])
                                                 : std::vector<CurriculumEdit>{};
    const auto ids = requested_ids(request, it->second);
    return json_response(200, whatif_document(ref, it->second, *run, edits, ids));
}

HttpResponse Service::post_fit(const std::string& body) {
    const Json request = body.empty() ? Json::object() : parse_json(body, "request");
    FitRequest fit;
    if (request.contains("variant")) {
        fit.variant = variant_from_string(field::string(request, "variant", "request"));
    }
    if (request.contains("test_ids")) {
        fit.test_ids = requested_ids(request, {});
    }
    if (request.contains("lambda")) {
        const Json& lambda = request["lambda"];
        if (!(lambda.is_string() && lambda.get<std::string>() == "auto")) {
            fit.lambda = field::as_number(lambda, "request.lambda");
        }
    }
    int validation_count = 2;
    if (request.contains("validation_runs")) {
        validation_count = static_cast<int>(field::integer(request, "validation_runs", "request"));
    }
    // Validate the split synchronously so that bad requests fail fast.
    const auto store = snapshot();
    auto fit_runs = std::make_shared<std::vector<Run>>();
    auto validation_runs = std::make_shared<std::vector<Run>>();
    split_past_runs(store->runs, fit.lambda ? 0 : validation_count, *fit_runs, *validation_runs);

    std::string job_id;
    {
        std::lock_guard lock(jobs_mutex_);
        job_id = fmt::format("job-{}", next_job_++);
        jobs_[job_id] = Job{};
        ++running_jobs_;
        workers_.emplace_back([this, job_id, fit, fit_runs, validation_runs, store] {
            Job result;
            try {
                auto params = fit_simulators(*fit_runs, *validation_runs, store->runs.m(), fit);
                std::unique_lock store_lock(store_mutex_);
                auto next = std::make_shared<Store>(*store_);
                std::string ref;
                for (int k = 1;; ++k) {
                    ref = fmt::format("fit-{}", k);
                    if (!next->params.contains(ref)) break;
                }
                if (!next->directory.empty()) {
                    const fs::path dir = fs::path(next->directory) / "params";
                    fs::create_directories(dir);
                    write_file((dir / (ref + ".json")).string(), serialize_params(params));
                }
                next->params.emplace(ref, std::move(params));
                store_ = std::move(next);
                result.status = "done";
                result.params_ref = ref;
            } catch (const std::exception& e) {
                result.status = "failed";
                result.error = e.what();
            }
            std::lock_guard jobs_lock(jobs_mutex_);
            jobs_[job_id] = result;
            --running_jobs_;
            jobs_done_.notify_all();
        });
    }
    return json_response(202, Json{{"job_id", job_id},
                                   {"status", "running"},
                                   {"poll", "/jobs/" + job_id}});
}

HttpResponse Service::get_job(const std::string& job_id) const {
    std::lock_guard lock(jobs_mutex_);
    const auto it = jobs_.find(job_id);
    if (it == jobs_.end()) {
        throw Error(ErrorKind::NotFound, fmt::format("unknown job '{}'", job_id));
    }
    Json body = Json{{"job_id", job_id}, {"status", it->second.status}};
    if (!it->second.params_ref.empty()) body["params_ref"] = it->second.params_ref;
    if (!it->second.error.empty()) body["error"] = it->second.error;
    return json_response(200, body);
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
    Service& service;
    httplib::Server server;
    explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service, const std::string& static_directory)
    : impl_(std::make_unique<Impl>(service)) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        const HttpResponse response = impl_->service.handle({req.method, req.path, req.body});
        res.status = response.status;
        res.set_content(response.body, response.content_type.c_str());
    };
    impl_->server.Get(R"(/(health|runs|params|jobs)(/.*)?)", forward);
    impl_->server.Post(R"(/(simulate|whatif|fit))", forward);
    impl_->server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.status = 204;
    });
    impl_->server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                       {"Access-Control-Allow-Headers", "Content-Type"},
                                       {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    if (!static_directory.empty() && !impl_->server.set_mount_point("/ui", static_directory)) {
        throw Error(ErrorKind::Io, fmt::format("static directory '{}' not found", static_directory));
    }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorKind::Io, fmt::format("cannot bind {}", host));
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw Error(ErrorKind::Io, fmt::format("cannot bind {}:{}", host, port));
    }
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

int serve(const std::string& store_directory, const std::string& bind,
          const std::string& static_directory) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
        throw Error(ErrorKind::Usage, fmt::format("bind address '{}' must be host:port", bind));
    }
    const std::string host = bind.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(bind.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error(ErrorKind::Usage, fmt::format("bad port in '{}'", bind));
    }
    Service service(load_store(store_directory));
    HttpServer server(service, static_directory);
    const int bound = server.bind(host, port);
    std::cerr << "trajsim: serving " << store_directory << " on http://" << host << ':' << bound
              << '\n';
    server.listen();
    return 0;
}

}  // namespace trajsim
