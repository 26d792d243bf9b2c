// Copyright (c) 2026, trajsim contributors
// SPDX-License-Identifier: Apache-2.0

#include "trajsim/toy_lab.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "trajsim/error.h"
#include "trajsim/json_io.h"
#include "trajsim/simulate.h"

namespace trajsim {
namespace {

constexpr std::string_view kTraceFormat = "trajsim-traces";
constexpr int kTraceVersion = 1;

Eigen::VectorXd augmented(const Eigen::VectorXd& x) {
    Eigen::VectorXd a(x.size() + 1);
    a.head(x.size()) = x;
    a[x.size()] = 1.0;
    return a;
}

void check_row(int id, int count, std::string_view what) {
    if (id < 1 || id > count) {
        throw Error(ErrorKind::Validation,
                    fmt::format("{} id {} out of range [1, {}]", what, id, count));
    }
}

std::vector<Batch> chunk(const std::vector<int>& order, int batch_size) {
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

std::vector<int> distinct_ids(const Curriculum& curriculum) {
    std::set<int> ids;
    for (const auto& batch : curriculum.steps) ids.insert(batch.begin(), batch.end());
    return {ids.begin(), ids.end()};
}

// Typed lookups into a FlatConfig; every consumed key is recorded so that
// leftovers can be reported as unknown.
class ConfigReader {
public:
    explicit ConfigReader(const FlatConfig& config) : config_(config) {}

    template <typename T>
    void read(std::string_view key, T& out) {
        const auto it = config_.find(key);
        if (it == config_.end()) return;
        used_.insert(std::string(key));
        const std::string& text = it->second;
        if constexpr (std::is_same_v<T, std::string>) {
            out = text;
        } else {
            T value{};
            const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc() || ptr != text.data() + text.size()) {
                throw Error(ErrorKind::Config,
                            fmt::format("config key '{}': cannot parse '{}'", key, text));
            }
            out = value;
        }
    }

    void finish() const {
        for (const auto& [key, value] : config_) {
            if (key != "mode" && !used_.contains(key)) {
                throw Error(ErrorKind::Config, fmt::format("unknown config key '{}'", key));
            }
        }
    }

private:
    const FlatConfig& config_;
    std::set<std::string> used_;
};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset and model

ToyDataset make_toy_dataset(const ToyDatasetConfig& config) {
    if (config.train_count < 1 || config.test_count < 1 || config.dim < 1 || config.classes < 2) {
        throw Error(ErrorKind::Config,
                    "toy dataset needs train_count >= 1, test_count >= 1, dim >= 1, classes >= 2");
    }
    const Rng root(config.seed);
    Rng mean_rng = root.fork(0);
    Eigen::MatrixXd means(config.classes, config.dim);
    for (int c = 0; c < config.classes; ++c) {
        for (int j = 0; j < config.dim; ++j) means(c, j) = config.separation * mean_rng.normal();
    }
    auto draw = [&](Rng rng, int count, Eigen::MatrixXd& x, Eigen::VectorXi& y) {
        x.resize(count, config.dim);
        y.resize(count);
        for (int r = 0; r < count; ++r) {
            const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.classes)));
            y[r] = label;
            for (int j = 0; j < config.dim; ++j) {
                x(r, j) = means(label, j) + config.noise * rng.normal();
            }
        }
    };
    ToyDataset data;
    data.dim = config.dim;
    data.classes = config.classes;
    data.seed = config.seed;
    draw(root.fork(1), config.train_count, data.train_x, data.train_y);
    draw(root.fork(2), config.test_count, data.test_x, data.test_y);
    return data;
}

Eigen::VectorXd SoftmaxModel::probabilities(const Eigen::VectorXd& theta,
                                            const Eigen::VectorXd& x) const {
    const Eigen::Map<const Eigen::MatrixXd> W(theta.data(), dim_ + 1, classes_);
    Eigen::VectorXd logits = W.transpose() * augmented(x);
    logits.array() -= logits.maxCoeff();
    Eigen::VectorXd p = logits.array().exp();
    return p / p.sum();
}

double SoftmaxModel::cross_entropy(const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                                   int label) const {
    const Eigen::Map<const Eigen::MatrixXd> W(theta.data(), dim_ + 1, classes_);
    const Eigen::VectorXd logits = W.transpose() * augmented(x);
    const double top = logits.maxCoeff();
    const double lse = top + std::log((logits.array() - top).exp().sum());
    return lse - logits[label];
}

Eigen::VectorXd SoftmaxModel::cross_entropy_gradient(const Eigen::VectorXd& theta,
                                                     const Eigen::VectorXd& x, int label) const {
    Eigen::VectorXd residual = probabilities(theta, x);
    residual[label] -= 1.0;
    const Eigen::VectorXd a = augmented(x);
    Eigen::VectorXd grad(parameter_count());
    for (int c = 0; c < classes_; ++c) {
        grad.segment(c * (dim_ + 1), dim_ + 1) = residual[c] * a;
    }
    return grad;
}

Eigen::MatrixXd SoftmaxModel::cross_entropy_hessian(const Eigen::VectorXd& theta,
                                                    const Eigen::VectorXd& x) const {
    const Eigen::VectorXd p = probabilities(theta, x);
    const Eigen::VectorXd a = augmented(x);
    const Eigen::MatrixXd outer = a * a.transpose();
    const int block = dim_ + 1;
    Eigen::MatrixXd H(parameter_count(), parameter_count());
    for (int c = 0; c < classes_; ++c) {
        for (int d = 0; d < classes_; ++d) {
            const double w = (c == d ? p[c] : 0.0) - p[c] * p[d];
            H.block(c * block, d * block, block, block) = w * outer;
        }
    }
    return H;
}

double SoftmaxModel::training_loss(const Eigen::VectorXd& theta, const ToyDataset& data,
                                   std::span<const int> ids) const {
    double sum = 0.0;
    for (const int id : ids) {
        check_row(id, data.train_count(), "training");
        sum += cross_entropy(theta, data.train_x.row(id - 1).transpose(), data.train_y[id - 1]);
    }
    return sum / static_cast<double>(ids.size()) + 0.5 * l2_ * theta.squaredNorm();
}

Eigen::VectorXd SoftmaxModel::training_gradient(const Eigen::VectorXd& theta,
                                                const ToyDataset& data,
                                                std::span<const int> ids) const {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(parameter_count());
    for (const int id : ids) {
        check_row(id, data.train_count(), "training");
        sum += cross_entropy_gradient(theta, data.train_x.row(id - 1).transpose(),
                                      data.train_y[id - 1]);
    }
    return sum / static_cast<double>(ids.size()) + l2_ * theta;
}

Eigen::MatrixXd SoftmaxModel::training_hessian(const Eigen::VectorXd& theta,
                                               const ToyDataset& data,
                                               std::span<const int> ids) const {
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(parameter_count(), parameter_count());
    for (const int id : ids) {
        check_row(id, data.train_count(), "training");
        sum += cross_entropy_hessian(theta, data.train_x.row(id - 1).transpose());
    }
    sum /= static_cast<double>(ids.size());
    sum.diagonal().array() += l2_;
    return sum;
}

double SoftmaxModel::test_loss(const Eigen::VectorXd& theta, const ToyDataset& data,
                               int test_id) const {
    check_row(test_id, data.test_count(), "test");
    return cross_entropy(theta, data.test_x.row(test_id - 1).transpose(), data.test_y[test_id - 1]);
}

Eigen::VectorXd sgd_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& gradient,
                         double eta) {
    return theta - eta * gradient;
}

ToyGradientSource::ToyGradientSource(std::shared_ptr<const ToyDataset> data, SoftmaxModel model,
                                     std::vector<int> hessian_ids)
    : data_(std::move(data)), model_(model), hessian_ids_(std::move(hessian_ids)) {
    if (hessian_ids_.empty()) {
        for (int i = 1; i <= data_->train_count(); ++i) hessian_ids_.push_back(i);
    }
}

Eigen::VectorXd ToyGradientSource::train_gradient(const Checkpoint& checkpoint,
                                                  int train_id) const {
    const int ids[] = {train_id};
    return model_.training_gradient(checkpoint.theta, *data_, ids);
}

Eigen::VectorXd ToyGradientSource::test_gradient(const Checkpoint& checkpoint, int test_id) const {
    check_row(test_id, data_->test_count(), "test");
    return model_.cross_entropy_gradient(checkpoint.theta,
                                         data_->test_x.row(test_id - 1).transpose(),
                                         data_->test_y[test_id - 1]);
}

double ToyGradientSource::test_loss(const Checkpoint& checkpoint, int test_id) const {
    return model_.test_loss(checkpoint.theta, *data_, test_id);
}

Eigen::MatrixXd ToyGradientSource::training_hessian(const Checkpoint& checkpoint) const {
    return model_.training_hessian(checkpoint.theta, *data_, hessian_ids_);
}

// ---------------------------------------------------------------------------
// Training

double EtaSchedule::at(int step, int total_steps) const {
    if (total_steps <= 1) return initial;
    const double progress = static_cast<double>(step - 1) / (total_steps - 1);
    return initial * (1.0 + (final_fraction - 1.0) * progress);
}

ToyTrainingResult train_toy(std::shared_ptr<const ToyDataset> data, const Curriculum& curriculum,
                            const ToyTrainConfig& config) {
    validate(curriculum, config.run_id);
    if (config.checkpoint_every < 1) {
        throw Error(ErrorKind::Config, "checkpoint_every must be >= 1");
    }
    for (const auto& batch : curriculum.steps) {
        for (const int id : batch) check_row(id, data->train_count(), "training");
    }
    const SoftmaxModel model(data->dim, data->classes, config.l2);
    auto source = std::make_shared<const ToyGradientSource>(data, model, distinct_ids(curriculum));

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(model.parameter_count());
    if (config.init_scale > 0.0) {
        Rng rng(config.seed);
        for (Eigen::Index k = 0; k < theta.size(); ++k) theta[k] = config.init_scale * rng.normal();
    }

    const int T = curriculum.length();
    const int m = data->test_count();
    ToyTrainingResult result;
    result.run.run_id = config.run_id;
    result.run.role = config.role;
    result.run.curriculum = curriculum;
    result.run.curriculum.n = data->train_count();
    result.run.trajectories.resize(static_cast<std::size_t>(m));
    for (int j = 1; j <= m; ++j) {
        auto& trajectory = result.run.trajectories[static_cast<std::size_t>(j - 1)];
        trajectory.test_example_id = j;
        trajectory.initial_loss = model.test_loss(theta, *data, j);
    }
    auto checkpoint = [&](int step) {
        const double eta = config.eta.at(std::min(step + 1, T), T);
        result.trace.checkpoints.push_back({config.run_id, step, eta, theta, source});
    };
    checkpoint(0);
    for (int t = 1; t <= T; ++t) {
        const double eta = config.eta.at(t, T);
        if (!(eta > 0.0)) {
            throw Error(ErrorKind::Config, fmt::format("learning rate at step {} is not positive", t));
        }
        theta = sgd_step(theta, model.training_gradient(theta, *data, curriculum.batch(t)), eta);
        for (int j = 1; j <= m; ++j) {
            const double loss = model.test_loss(theta, *data, j);
            if (!std::isfinite(loss) || !theta.allFinite()) {
                throw Error(ErrorKind::Numeric,
                            fmt::format("run '{}' diverged at step {} (last good step {})",
                                        config.run_id, t, t - 1));
            }
            result.run.trajectories[static_cast<std::size_t>(j - 1)].losses.emplace(t, loss);
        }
        if (t % config.checkpoint_every == 0 || t == T) checkpoint(t);
    }
    result.final_theta = theta;
    return result;
}

Eigen::VectorXd fit_to_optimum(const ToyDataset& data, std::span<const int> ids,
                               const SoftmaxModel& model, int max_iterations,
                               double gradient_tolerance) {
    if (ids.empty()) {
        throw Error(ErrorKind::NoData, "no training examples to fit");
    }
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(model.parameter_count());
    double loss = model.training_loss(theta, data, ids);
    for (int iteration = 0; iteration < max_iterations; ++iteration) {
        const Eigen::VectorXd g = model.training_gradient(theta, data, ids);
        if (g.lpNorm<Eigen::Infinity>() < gradient_tolerance) break;
        const Eigen::LLT<Eigen::MatrixXd> llt(model.training_hessian(theta, data, ids));
        if (llt.info() != Eigen::Success) {
            throw Error(ErrorKind::Conditioning, "training Hessian is not positive definite");
        }
        const Eigen::VectorXd direction = llt.solve(g);
        // Backtracking keeps the iteration monotone far from the optimum.
        double step = 1.0;
        Eigen::VectorXd candidate = theta - direction;
        double candidate_loss = model.training_loss(candidate, data, ids);
        while (candidate_loss > loss && step > 1e-8) {
            step *= 0.5;
            candidate = theta - step * direction;
            candidate_loss = model.training_loss(candidate, data, ids);
        }
        if (candidate_loss > loss) break;
        theta = candidate;
        loss = candidate_loss;
    }
    return theta;
}

// ---------------------------------------------------------------------------
// Batching matrix and synthetic runs

BatchingMatrix build_batching_matrix(int n, int k) {
    if (k < 1 || n < 1 || n % (k + 1) != 0) {
        throw Error(ErrorKind::Config,
                    fmt::format("batching matrix needs k >= 1 and n divisible by k + 1 (n = {}, k = {})",
                                n, k));
    }
    BatchingMatrix batching;
    batching.batch_size = k;
    batching.blocks = n / (k + 1);
    batching.Q = Eigen::MatrixXi::Zero(n, n);
    for (int b = 0; b < batching.blocks; ++b) {
        batching.Q.block(b * (k + 1), b * (k + 1), k + 1, k + 1).setOnes();
        for (int d = 0; d <= k; ++d) batching.Q(b * (k + 1) + d, b * (k + 1) + d) = 0;
    }
    if (numerical_rank(batching.Q.cast<double>()) != n) {
        throw Error(ErrorKind::Numeric, "batching matrix is not full rank");
    }
    return batching;
}

Curriculum curriculum_from_Q(const BatchingMatrix& batching, int repeats) {
    if (repeats < 1) {
        throw Error(ErrorKind::Config, "repeats must be >= 1");
    }
    const int n = batching.n();
    Curriculum curriculum;
    curriculum.n = n;
    for (int t = 0; t < repeats * n; ++t) {
        const int row = t % n;
        Batch batch;
        for (int j = 0; j < n; ++j) {
            if (batching.Q(row, j) != 0) batch.push_back(j + 1);
        }
        curriculum.steps.push_back(std::move(batch));
    }
    return curriculum;
}

RunSet generate_synthetic_runs(std::span<const SimulatorParams> true_params,
                               const SyntheticConfig& config) {
    if (true_params.empty()) {
        throw Error(ErrorKind::Config, "no ground-truth parameters given");
    }
    if (!(config.noise_sigma >= 0.0) || config.run_count < 0 || config.batch_size < 1 ||
        config.future_runs < 0 || config.future_runs > config.run_count) {
        throw Error(ErrorKind::Config, "invalid synthetic run configuration");
    }
    const int n = true_params.front().n();
    int m = 0;
    for (const auto& p : true_params) {
        if (p.n() != n) {
            throw Error(ErrorKind::Config, "ground-truth parameters disagree on n");
        }
        m = std::max(m, p.test_example_id);
    }
    RunSet set;
    set.n = n;
    for (int i = 1; i <= n; ++i) set.train_names.push_back(fmt::format("train-{}", i));
    for (int j = 1; j <= m; ++j) set.test_names.push_back(fmt::format("test-{}", j));

    std::optional<Curriculum> fixed;
    if (config.source == CurriculumSource::BatchingMatrix) {
        fixed = curriculum_from_Q(build_batching_matrix(n, config.batch_size), config.repeats);
    }
    const Rng root(config.seed);
    for (int r = 0; r < config.run_count; ++r) {
        Rng rng = root.fork(static_cast<std::uint64_t>(r) + 1);
        Run run;
        run.run_id = fmt::format("run-{:03}", r);
        run.role = r >= config.run_count - config.future_runs ? Role::Future : Role::Past;
        if (fixed) {
            run.curriculum = *fixed;
        } else {
            run.curriculum.n = n;
            std::vector<int> order(static_cast<std::size_t>(n));
            for (int e = 0; e < config.epochs; ++e) {
                std::iota(order.begin(), order.end(), 1);
                rng.shuffle(order);
                for (auto& batch : chunk(order, config.batch_size)) {
                    run.curriculum.steps.push_back(std::move(batch));
                }
            }
        }
        for (const auto& p : true_params) {
            LossTrajectory trajectory;
            trajectory.test_example_id = p.test_example_id;
            trajectory.initial_loss = rng.uniform(config.l0_min, config.l0_max);
            double loss = trajectory.initial_loss;
            for (int t = 1; t <= run.length(); ++t) {
                const Batch& batch = run.curriculum.batch(t);
                loss = p.alpha(batch) * loss + p.beta(batch);
                if (config.noise_sigma > 0.0) loss += config.noise_sigma * rng.normal();
                trajectory.losses.emplace(t, loss);
            }
            run.trajectories.push_back(std::move(trajectory));
        }
        std::sort(run.trajectories.begin(), run.trajectories.end(),
                  [](const auto& a, const auto& b) { return a.test_example_id < b.test_example_id; });
        set.runs.push_back(std::move(run));
    }
    validate(set);
    return set;
}

SimulatorParams draw_linear_params(int n, int test_example_id, Rng& rng, double a_min,
                                   double a_max, double b_min, double b_max) {
    SimulatorParams p;
    p.test_example_id = test_example_id;
    p.variant = Variant::Linear;
    p.A.resize(n);
    p.B.resize(n);
    for (int i = 0; i < n; ++i) {
        p.A[i] = rng.uniform(a_min, a_max);
        const double magnitude = rng.uniform(b_min, b_max);
        p.B[i] = rng.below(2) == 0 ? magnitude : -magnitude;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Run collections

std::vector<Run> RunCollection::fit_runs() const {
    const auto first = runs.runs.begin();
    return {first, first + config.fit_runs};
}

std::vector<Run> RunCollection::validation_runs() const {
    const auto first = runs.runs.begin() + config.fit_runs;
    return {first, first + config.validation_runs};
}

std::vector<Run> RunCollection::test_runs() const {
    const auto first = runs.runs.begin() + config.fit_runs + config.validation_runs;
    return {first, runs.runs.end()};
}

std::span<const CheckpointTrace> RunCollection::fit_traces() const {
    return std::span<const CheckpointTrace>(traces).first(static_cast<std::size_t>(config.fit_runs));
}

RunCollection make_run_collection(const RunCollectionConfig& config) {
    if (config.fit_runs + config.validation_runs + config.test_runs != config.runs) {
        throw Error(ErrorKind::Config,
                    fmt::format("split sizes {} + {} + {} do not sum to the run count {}",
                                config.fit_runs, config.validation_runs, config.test_runs,
                                config.runs));
    }
    if (config.fit_runs < 0 || config.validation_runs < 0 || config.test_runs < 0 ||
        config.epochs < 1 || config.batch_size < 1 || config.per_run < 1 ||
        config.per_run > config.dataset.train_count) {
        throw Error(ErrorKind::Config,
                    "run collection needs nonnegative splits, epochs >= 1, batch_size >= 1 and "
                    "1 <= per_run <= train_count");
    }
    RunCollection collection;
    collection.config = config;
    collection.dataset = std::make_shared<const ToyDataset>(make_toy_dataset(config.dataset));
    const auto& data = collection.dataset;
    collection.runs.n = data->train_count();
    for (int i = 1; i <= data->train_count(); ++i) {
        collection.runs.train_names.push_back(fmt::format("train-{}", i));
    }
    for (int j = 1; j <= data->test_count(); ++j) {
        collection.runs.test_names.push_back(fmt::format("test-{}", j));
    }
    const Rng root(config.seed);
    for (int r = 0; r < config.runs; ++r) {
        Rng rng = root.fork(static_cast<std::uint64_t>(r) + 1);
        std::vector<int> subset = rng.sample_without_replacement(data->train_count(), config.per_run);
        for (auto& id : subset) id += 1;
        Curriculum curriculum;
        curriculum.n = data->train_count();
        for (int e = 0; e < config.epochs; ++e) {
            rng.shuffle(subset);
            for (auto& batch : chunk(subset, config.batch_size)) {
                curriculum.steps.push_back(std::move(batch));
            }
        }
        ToyTrainConfig train;
        train.l2 = config.l2;
        train.eta = config.eta;
        train.checkpoint_every = config.checkpoint_every;
        train.seed = rng.next_u64();
        train.run_id = fmt::format("run-{:02}", r);
        train.role = r < config.fit_runs + config.validation_runs ? Role::Past : Role::Future;
        auto result = train_toy(data, curriculum, train);
        collection.runs.runs.push_back(std::move(result.run));
        collection.traces.push_back(std::move(result.trace));
    }
    validate(collection.runs);
    return collection;
}

// ---------------------------------------------------------------------------
// Config documents

FlatConfig parse_flat_config(std::string_view document) {
    FlatConfig config;
    int line_number = 0;
    std::size_t start = 0;
    while (start <= document.size()) {
        const auto end = std::min(document.find('\n', start), document.size());
        std::string_view line = document.substr(start, end - start);
        start = end + 1;
        ++line_number;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::Config, fmt::format("config line {}: expected key = value", line_number));
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty() || value.empty()) {
            throw Error(ErrorKind::Config, fmt::format("config line {}: empty key or value", line_number));
        }
        if (!config.emplace(key, value).second) {
            throw Error(ErrorKind::Config,
                        fmt::format("config line {}: duplicate key '{}'", line_number, key));
        }
    }
    return config;
}

RunCollectionConfig parse_collection_config(const FlatConfig& flat) {
    if (const auto it = flat.find("mode"); it != flat.end() && it->second != "toy") {
        throw Error(ErrorKind::Config, fmt::format("expected mode = toy, got '{}'", it->second));
    }
    RunCollectionConfig c;
    ConfigReader r(flat);
    r.read("train_count", c.dataset.train_count);
    r.read("test_count", c.dataset.test_count);
    r.read("dim", c.dataset.dim);
    r.read("classes", c.dataset.classes);
    r.read("separation", c.dataset.separation);
    r.read("noise", c.dataset.noise);
    r.read("dataset_seed", c.dataset.seed);
    r.read("runs", c.runs);
    r.read("per_run", c.per_run);
    r.read("epochs", c.epochs);
    r.read("batch_size", c.batch_size);
    r.read("fit_runs", c.fit_runs);
    r.read("validation_runs", c.validation_runs);
    r.read("test_runs", c.test_runs);
    r.read("l2", c.l2);
    r.read("eta", c.eta.initial);
    r.read("eta_final_fraction", c.eta.final_fraction);
    r.read("checkpoint_every", c.checkpoint_every);
    r.read("seed", c.seed);
    r.finish();
    return c;
}

RunCollectionConfig parse_collection_config(std::string_view document) {
    return parse_collection_config(parse_flat_config(document));
}

std::string serialize_collection_config(const RunCollectionConfig& c) {
    std::string out = "mode = toy\n";
    auto put = [&out](std::string_view key, const auto& value) {
        if constexpr (std::is_floating_point_v<std::decay_t<decltype(value)>>) {
            out += fmt::format("{} = {}\n", key, format_double(value));
        } else {
            out += fmt::format("{} = {}\n", key, value);
        }
    };
    put("train_count", c.dataset.train_count);
    put("test_count", c.dataset.test_count);
    put("dim", c.dataset.dim);
    put("classes", c.dataset.classes);
    put("separation", c.dataset.separation);
    put("noise", c.dataset.noise);
    put("dataset_seed", c.dataset.seed);
    put("runs", c.runs);
    put("per_run", c.per_run);
    put("epochs", c.epochs);
    put("batch_size", c.batch_size);
    put("fit_runs", c.fit_runs);
    put("validation_runs", c.validation_runs);
    put("test_runs", c.test_runs);
    put("l2", c.l2);
    put("eta", c.eta.initial);
    put("eta_final_fraction", c.eta.final_fraction);
    put("checkpoint_every", c.checkpoint_every);
    put("seed", c.seed);
    return out;
}

SyntheticSetup parse_synthetic_config(const FlatConfig& flat) {
    const auto mode = flat.find("mode");
    if (mode == flat.end() || mode->second != "synthetic") {
        throw Error(ErrorKind::Config, "expected mode = synthetic");
    }
    SyntheticSetup s;
    std::string source = "shuffled";
    ConfigReader r(flat);
    r.read("n", s.n);
    r.read("test_count", s.test_count);
    r.read("runs", s.runs.run_count);
    r.read("future_runs", s.runs.future_runs);
    r.read("source", source);
    r.read("batch_size", s.runs.batch_size);
    r.read("repeats", s.runs.repeats);
    r.read("epochs", s.runs.epochs);
    r.read("l0_min", s.runs.l0_min);
    r.read("l0_max", s.runs.l0_max);
    r.read("noise_sigma", s.runs.noise_sigma);
    r.read("seed", s.runs.seed);
    r.finish();
    if (source == "q") {
        s.runs.source = CurriculumSource::BatchingMatrix;
    } else if (source == "shuffled") {
        s.runs.source = CurriculumSource::ShuffledEpochs;
    } else {
        throw Error(ErrorKind::Config, fmt::format("source must be q or shuffled, got '{}'", source));
    }
    if (s.n < 1 || s.test_count < 1) {
        throw Error(ErrorKind::Config, "n and test_count must be >= 1");
    }
    return s;
}

std::vector<SimulatorParams> synthetic_truth(const SyntheticSetup& setup) {
    Rng rng = Rng(setup.runs.seed).fork(0);
    std::vector<SimulatorParams> truth;
    for (int j = 1; j <= setup.test_count; ++j) {
        truth.push_back(draw_linear_params(setup.n, j, rng));
    }
    return truth;
}

std::string serialize_traces(std::span<const CheckpointTrace> traces) {
    std::string out = dump_canonical(Json{{"format", kTraceFormat}, {"version", kTraceVersion}});
    out += '\n';
    for (const auto& trace : traces) {
        Json line = Json::object();
        line["run_id"] = trace.checkpoints.empty() ? std::string() : trace.checkpoints.front().run_id;
        Json checkpoints = Json::array();
        for (const auto& cp : trace.checkpoints) {
            Json theta = Json::array();
            for (Eigen::Index k = 0; k < cp.theta.size(); ++k) theta.push_back(cp.theta[k]);
            checkpoints.push_back(Json{{"step", cp.step}, {"eta", cp.eta}, {"theta", std::move(theta)}});
        }
        line["checkpoints"] = std::move(checkpoints);
        out += dump_canonical(line);
        out += '\n';
    }
    return out;
}

std::vector<CheckpointTrace> parse_traces(
    std::string_view document,
    const std::function<std::shared_ptr<const GradientSource>(const std::string&)>& source_for_run) {
    std::vector<CheckpointTrace> traces;
    int line_number = 0;
    std::size_t start = 0;
    bool header_seen = false;
    while (start < document.size()) {
        const auto end = std::min(document.find('\n', start), document.size());
        const std::string_view line = trim(document.substr(start, end - start));
        start = end + 1;
        ++line_number;
        if (line.empty()) continue;
        const std::string where = fmt::format("traces line {}", line_number);
        const Json value = parse_json(line, where);
        if (!header_seen) {
            if (field::string(value, "format", where) != kTraceFormat ||
                field::integer(value, "version", where) != kTraceVersion) {
                throw Error(ErrorKind::Parse, where + ": not a trajsim-traces v1 document");
            }
            header_seen = true;
            continue;
        }
        const std::string run_id = field::string(value, "run_id", where);
        auto source = source_for_run(run_id);
        if (!source) {
            throw Error(ErrorKind::NotFound, fmt::format("{}: no gradient source for run '{}'", where, run_id));
        }
        CheckpointTrace trace;
        const Json& checkpoints = field::require(value, "checkpoints", where);
        if (!checkpoints.is_array()) {
            throw Error(ErrorKind::Parse, where + ".checkpoints: expected an array");
        }
        for (const auto& cp : checkpoints) {
            Checkpoint checkpoint;
            checkpoint.run_id = run_id;
            checkpoint.step = static_cast<int>(field::integer(cp, "step", where));
            checkpoint.eta = field::number(cp, "eta", where);
            const Json& theta = field::require(cp, "theta", where);
            if (!theta.is_array()) {
                throw Error(ErrorKind::Parse, where + ".theta: expected an array");
            }
            checkpoint.theta.resize(static_cast<Eigen::Index>(theta.size()));
            for (std::size_t k = 0; k < theta.size(); ++k) {
                checkpoint.theta[static_cast<Eigen::Index>(k)] = field::as_number(theta[k], where);
            }
            checkpoint.source = source;
            trace.checkpoints.push_back(std::move(checkpoint));
        }
        validate(trace);
        traces.push_back(std::move(trace));
    }
    if (!header_seen) {
        throw Error(ErrorKind::Parse, "traces: missing header line");
    }
    return traces;
}

}  // namespace trajsim
