#include "pricer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "pricer/errors.hpp"
#include "pricer/parallel.hpp"

namespace pricer {

void Architecture::validate() const {
    if (hidden_layers < 0) throw DomainError("architecture: negative hidden layer count");
    if (hidden_layers > 0 && neurons < 1) throw DomainError("architecture: neurons must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("architecture: dropout must lie in [0, 1)");
}

MlpModel Architecture::build(Eigen::Index inputs, Eigen::Index outputs, std::uint64_t seed) const {
    validate();
    MlpModel m = init_mlp(inputs, outputs, hidden_layers, neurons, activation, init, seed);
    m.dropout = dropout;
    return m;
}

nlohmann::json Architecture::to_json() const {
    return {{"hidden_layers", hidden_layers},
            {"neurons", neurons},
            {"activation", std::string(to_string(activation))},
            {"init", std::string(to_string(init))},
            {"dropout", dropout}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
    Architecture a;
    a.hidden_layers = j.value("hidden_layers", a.hidden_layers);
    a.neurons = j.value("neurons", a.neurons);
    a.activation = parse_activation(j.value("activation", std::string(to_string(a.activation))));
    a.init = parse_init_scheme(j.value("init", std::string(to_string(a.init))));
    a.dropout = j.value("dropout", a.dropout);
    a.validate();
    return a;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw DomainError("train config: epochs must be >= 1");
    if (batch_size < 1) throw DomainError("train config: batch_size must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw DomainError("train config: validation_fraction must lie in [0, 1)");
    }
    resolve_schedule(schedule, 1).validate();
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"optimizer", std::string(to_string(optimizer))},
            {"beta1", beta1},
            {"beta2", beta2},
            {"epsilon", epsilon},
            {"rho", rho},
            {"schedule", schedule.to_json()},
            {"seed", seed},
            {"shuffle", shuffle},
            {"standardize_inputs", standardize_inputs},
            {"standardize_outputs", standardize_outputs},
            {"validation_fraction", validation_fraction}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.optimizer = parse_optimizer(j.value("optimizer", std::string(to_string(c.optimizer))));
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.rho = j.value("rho", c.rho);
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        // Parse without validation so total_steps <= 0 (whole run) survives.
        const std::string kind = s.value("kind", "constant");
        if (kind == "exponential_decay") {
            c.schedule = LrSchedule::exponential(s.value("lr", 1e-3), s.value("lr_final", 1e-5),
                                                 s.value("total_steps", 0L));
        } else {
            c.schedule = LrSchedule::from_json(s);
        }
    }
    c.seed = j.value("seed", c.seed);
    c.shuffle = j.value("shuffle", c.shuffle);
    c.standardize_inputs = j.value("standardize_inputs", c.standardize_inputs);
    c.standardize_outputs = j.value("standardize_outputs", c.standardize_outputs);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.validate();
    return c;
}

LrSchedule resolve_schedule(const LrSchedule& schedule, long total_steps) {
    LrSchedule s = schedule;
    if (s.kind == LrSchedule::Kind::ExponentialDecay && s.total_steps <= 0) s.total_steps = std::max(total_steps, 1L);
    return s;
}

std::string TrainHistory::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_loss,val_loss,lr\n";
    for (std::size_t e = 0; e < train_loss.size(); ++e) {
        const std::size_t last = std::min(lr.size(), (e + 1) * static_cast<std::size_t>(steps_per_epoch)) - 1;
        out << e + 1 << ',' << train_loss[e] << ',';
        if (std::isfinite(val_loss[e])) out << val_loss[e];
        out << ',' << lr[last] << '\n';
    }
    return out.str();
}

namespace {

std::pair<Eigen::VectorXd, Eigen::VectorXd> column_mean_std(const RowMatrix& x) {
    const Eigen::VectorXd mean = x.colwise().mean().transpose();
    Eigen::VectorXd sd(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double s = std::sqrt((x.col(c).array() - mean[c]).square().mean());
        sd[c] = s > 1e-12 ? s : 1.0;
    }
    return {mean, sd};
}

void fit_input_scaling(MlpModel& model, const RowMatrix& x) {
    auto [mean, sd] = column_mean_std(x);
    model.input_offset = mean;
    model.input_scale = sd.cwiseInverse();
}

void fit_output_scaling(MlpModel& model, const RowMatrix& y) {
    auto [mean, sd] = column_mean_std(y);
    model.output_offset = mean;
    model.output_scale = sd;
}

// Eigen forward on column batches; used for validation losses during
// training where speed matters more than the row-exact kernel.
Eigen::MatrixXd forward_columns(const MlpModel& model, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd a = x;
    for (const Layer& layer : model.layers) {
        Eigen::MatrixXd z = layer.weights * a;
        z.colwise() += layer.bias;
        if (layer.activation != Activation::Identity) {
            z = z.unaryExpr([act = layer.activation](double v) { return activate(act, v); });
        }
        a = std::move(z);
    }
    if (model.has_output_scaling()) {
        a = ((a.array().colwise() * model.output_scale.array()).colwise() + model.output_offset.array()).matrix();
    }
    return a;
}

void check_widths(const MlpModel& model, const Dataset& ds, const char* what) {
    const auto in = static_cast<Eigen::Index>(ds.input_names().size());
    const auto out = static_cast<Eigen::Index>(ds.output_names().size());
    if (in != model.input_size() || out != model.output_size()) {
        throw ShapeMismatch(std::string(what) + ": dataset has " + std::to_string(in) + " inputs / " +
                            std::to_string(out) + " outputs, model expects " + std::to_string(model.input_size()) +
                            " / " + std::to_string(model.output_size()));
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrainResult train(MlpModel model, const Dataset& train_set, const Dataset* val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    model.validate();
    check_widths(model, train_set, "train");

    Dataset tr = train_set;
    Dataset va;
    bool have_val = false;
    if (val_set != nullptr) {
        check_widths(model, *val_set, "train (validation)");
        va = *val_set;
        have_val = va.rows() > 0;
    } else if (config.validation_fraction > 0.0 &&
               std::llround(static_cast<double>(tr.rows()) * config.validation_fraction) >= 1) {
        SplitSpec spec;
        spec.train = 1.0 - config.validation_fraction;
        spec.validation = 0.0;
        spec.test = config.validation_fraction;
        spec.seed = derive_seed(config.seed, 0x5e11);
        SplitResult parts = split(tr, spec);
        tr = std::move(parts.train);
        va = std::move(parts.test);
        have_val = true;
    }
    if (tr.rows() == 0) throw EmptyInput("train: no training rows");

    const RowMatrix x = tr.inputs();
    const RowMatrix y = tr.outputs();
    if (config.standardize_inputs && !model.has_input_scaling()) fit_input_scaling(model, x);
    if (config.standardize_outputs && !model.has_output_scaling()) fit_output_scaling(model, y);
    const Eigen::MatrixXd xt = scale_inputs(model, x).transpose();
    const Eigen::MatrixXd yt = y.transpose();
    Eigen::MatrixXd xv, yv;
    if (have_val) {
        xv = scale_inputs(model, va.inputs()).transpose();
        yv = va.outputs().transpose();
    }

    const Eigen::Index n = xt.cols();
    const Eigen::Index bs = std::min(config.batch_size, n);
    const long steps_per_epoch = static_cast<long>((n + bs - 1) / bs);
    const LrSchedule schedule = resolve_schedule(config.schedule, steps_per_epoch * config.epochs);
    schedule.validate();

    OptimizerState opt(config.optimizer);
    opt.beta1 = config.beta1;
    opt.beta2 = config.beta2;
    opt.epsilon = config.epsilon;
    opt.rho = config.rho;

    Rng shuffle_rng(derive_seed(config.seed, 1));
    Rng dropout_rng(derive_seed(config.seed, 2));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    TrainHistory hist;
    hist.steps_per_epoch = steps_per_epoch;
    hist.lr.reserve(static_cast<std::size_t>(steps_per_epoch * config.epochs));
    Gradients grads = Gradients::zeros_like(model);
    Eigen::MatrixXd xb, yb;
    long global = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        if (config.shuffle) shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (Eigen::Index start = 0; start < n; start += bs) {
            const Eigen::Index count = std::min(bs, n - start);
            xb.resize(xt.rows(), count);
            yb.resize(yt.rows(), count);
            for (Eigen::Index i = 0; i < count; ++i) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + i)];
                xb.col(i) = xt.col(src);
                yb.col(i) = yt.col(src);
            }
            const double loss = backprop_columns(model, xb, yb, grads, model.dropout > 0.0 ? &dropout_rng : nullptr);
            if (!std::isfinite(loss)) {
                throw NonFiniteLoss("training loss became non-finite at step " + std::to_string(global) +
                                        " (epoch " + std::to_string(epoch + 1) + ")",
                                    global);
            }
            const double lr = lr_at(schedule, global, steps_per_epoch);
            step(model, grads, opt, lr);
            hist.lr.push_back(lr);
            loss_sum += loss * static_cast<double>(count);
            ++global;
        }
        hist.train_loss.push_back(loss_sum / static_cast<double>(n));
        double vl = std::numeric_limits<double>::quiet_NaN();
        if (have_val) vl = (forward_columns(model, xv) - yv).squaredNorm() / static_cast<double>(yv.size());
        hist.val_loss.push_back(vl);
        hist.epoch_seconds.push_back(seconds_since(t0));
        if (on_epoch) on_epoch(epoch + 1, hist.train_loss.back(), vl);
    }

    model.training_meta = {{"schedule", schedule.to_json()},
                           {"optimizer", std::string(to_string(config.optimizer))},
                           {"seed", config.seed},
                           {"epochs", config.epochs},
                           {"batch_size", config.batch_size},
                           {"training_rows", n},
                           {"inputs", tr.input_names()},
                           {"outputs", tr.output_names()},
                           {"transforms", tr.transforms}};
    return {std::move(model), std::move(hist)};
}

namespace {

nlohmann::json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
    return {{"mse", finite_or_null(mse)},
            {"rmse", finite_or_null(rmse)},
            {"mae", finite_or_null(mae)},
            {"mape", finite_or_null(mape)},
            {"r2", finite_or_null(r2)},
            {"max_abs_error", finite_or_null(max_abs_error)},
            {"n", n},
            {"mape_excluded", mape_excluded}};
}

MetricsReport compute_metrics(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw ShapeMismatch("metrics: prediction and target lengths differ");
    if (pred.empty()) throw EmptyInput("metrics: no samples");
    MetricsReport m;
    m.n = pred.size();
    const double n = static_cast<double>(m.n);
    double mean_y = 0.0;
    for (double y : target) mean_y += y;
    mean_y /= n;
    double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0, ape_sum = 0.0;
    std::size_t ape_n = 0;
    for (std::size_t i = 0; i < m.n; ++i) {
        const double e = pred[i] - target[i];
        ss_res += e * e;
        ss_tot += (target[i] - mean_y) * (target[i] - mean_y);
        abs_sum += std::abs(e);
        m.max_abs_error = std::max(m.max_abs_error, std::abs(e));
        if (std::abs(target[i]) > kMapeFloor) {
            ape_sum += std::abs(e) / std::abs(target[i]);
            ++ape_n;
        }
    }
    m.mse = ss_res / n;
    m.rmse = std::sqrt(m.mse);
    m.mae = abs_sum / n;
    m.mape = ape_n > 0 ? ape_sum / static_cast<double>(ape_n) : 0.0;
    m.mape_excluded = m.n - ape_n;
    if (ss_tot > 0.0) {
        m.r2 = 1.0 - ss_res / ss_tot;
    } else {
        m.r2 = ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    }
    return m;
}

MetricsReport compute_metrics(const RowMatrix& predictions, const RowMatrix& targets) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
        throw ShapeMismatch("metrics: prediction and target shapes differ");
    }
    return compute_metrics(std::vector<double>(predictions.data(), predictions.data() + predictions.size()),
                           std::vector<double>(targets.data(), targets.data() + targets.size()));
}

MetricsReport evaluate(const MlpModel& model, const Dataset& test_set) {
    if (test_set.rows() == 0) throw EmptyInput("evaluate: empty test set");
    check_widths(model, test_set, "evaluate");
    return compute_metrics(forward_batch(model, test_set.inputs()), test_set.outputs());
}

std::vector<std::vector<Eigen::Index>> kfold_indices(Eigen::Index rows, int k, std::uint64_t seed) {
    if (k < 2) throw DomainError("kfold: k must be >= 2");
    if (k > rows) throw DomainError("kfold: k exceeds the number of rows");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<Eigen::Index>> folds(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        const Eigen::Index lo = rows * f / k;
        const Eigen::Index hi = rows * (f + 1) / k;
        folds[static_cast<std::size_t>(f)].assign(order.begin() + lo, order.begin() + hi);
    }
    return folds;
}

CvResult kfold_cv(const Dataset& data, int k, const Architecture& arch, const TrainConfig& config, int threads) {
    const auto folds = kfold_indices(data.rows(), k, derive_seed(config.seed, 0xf01d));
    CvResult res;
    res.fold_mse.assign(static_cast<std::size_t>(k), 0.0);
    const auto in = static_cast<Eigen::Index>(data.input_names().size());
    const auto out = static_cast<Eigen::Index>(data.output_names().size());
    parallel_for(static_cast<std::size_t>(k), threads, [&](std::size_t f) {
        std::vector<Eigen::Index> train_rows;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g != f) train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(train_rows.begin(), train_rows.end());
        const Dataset tr = data.select_rows(train_rows);
        const Dataset va = data.select_rows(folds[f]);
        TrainConfig cfg = config;
        cfg.seed = derive_seed(config.seed, 100 + f);
        const MlpModel model = arch.build(in, out, cfg.seed);
        const TrainResult r = train(model, tr, &va, cfg);
        res.fold_mse[f] = evaluate(r.model, va).mse;
    });
    res.mean_mse = std::accumulate(res.fold_mse.begin(), res.fold_mse.end(), 0.0) / static_cast<double>(k);
    return res;
}

void SearchSpace::validate() const {
    if (activations.empty() || inits.empty() || optimizers.empty()) {
        throw DomainError("search space: categorical sets must be non-empty");
    }
    if (!(dropout_low <= dropout_high) || neurons_low > neurons_high || batch_low > batch_high || batch_low < 1) {
        throw DomainError("search space: invalid range");
    }
}

Candidate sample_candidate(const SearchSpace& space, Rng& rng, const TrainConfig& base) {
    Candidate c;
    c.config = base;
    c.arch.hidden_layers = space.hidden_layers;
    c.arch.activation = space.activations[rng.index(space.activations.size())];
    c.arch.dropout = rng.uniform(space.dropout_low, space.dropout_high);
    c.arch.neurons = space.neurons_low +
                     static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(space.neurons_high - space.neurons_low + 1)));
    c.arch.init = space.inits[rng.index(space.inits.size())];
    c.config.optimizer = space.optimizers[rng.index(space.optimizers.size())];
    // Log-uniform integer in [batch_low, batch_high].
    const double lo = std::log(static_cast<double>(space.batch_low));
    const double hi = std::log(static_cast<double>(space.batch_high) + 1.0);
    c.config.batch_size = std::clamp(static_cast<Eigen::Index>(std::floor(std::exp(rng.uniform(lo, hi)))),
                                     space.batch_low, space.batch_high);
    return c;
}

namespace {

template <typename T>
T mode_by_rank(const std::vector<T>& values) {
    // Most frequent value; ties go to the value seen first (best ranked).
    std::map<T, int> count;
    for (const T& v : values) ++count[v];
    T best = values.front();
    int best_n = 0;
    for (const T& v : values) {
        if (count[v] > best_n) {
            best = v;
            best_n = count[v];
        }
    }
    return best;
}

}  // namespace

Candidate aggregate_top(const std::vector<Trial>& ranked, std::size_t top) {
    std::vector<const Trial*> use;
    for (const auto& t : ranked) {
        if (!t.failed && use.size() < top) use.push_back(&t);
    }
    if (use.empty()) throw DomainError("aggregate_top: no successful trials");
    std::vector<Activation> acts;
    std::vector<InitScheme> inits;
    std::vector<OptimizerKind> opts;
    double dropout = 0.0, neurons = 0.0, batch = 0.0;
    for (const Trial* t : use) {
        acts.push_back(t->candidate.arch.activation);
        inits.push_back(t->candidate.arch.init);
        opts.push_back(t->candidate.config.optimizer);
        dropout += t->candidate.arch.dropout;
        neurons += static_cast<double>(t->candidate.arch.neurons);
        batch += static_cast<double>(t->candidate.config.batch_size);
    }
    const double n = static_cast<double>(use.size());
    Candidate c = use.front()->candidate;
    c.arch.activation = mode_by_rank(acts);
    c.arch.init = mode_by_rank(inits);
    c.config.optimizer = mode_by_rank(opts);
    c.arch.dropout = dropout / n;
    c.arch.neurons = static_cast<Eigen::Index>(std::llround(neurons / n));
    c.config.batch_size = static_cast<Eigen::Index>(std::llround(batch / n));
    return c;
}

namespace {

nlohmann::json candidate_json(const Candidate& c) {
    nlohmann::json j = c.arch.to_json();
    j["optimizer"] = std::string(to_string(c.config.optimizer));
    j["batch_size"] = c.config.batch_size;
    return j;
}

}  // namespace

nlohmann::json SearchResult::to_json() const {
    nlohmann::json trials = nlohmann::json::array();
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const Trial& t = ranked[i];
        nlohmann::json j = candidate_json(t.candidate);
        j["rank"] = i + 1;
        j["mean_val_mse"] = finite_or_null(t.cv.mean_mse);
        nlohmann::json folds = nlohmann::json::array();
        for (double f : t.cv.fold_mse) folds.push_back(finite_or_null(f));
        j["fold_mse"] = folds;
        j["failed"] = t.failed;
        if (t.failed) j["error"] = t.error;
        trials.push_back(std::move(j));
    }
    return {{"trials", trials}, {"top5_consensus", candidate_json(consensus)}};
}

SearchResult random_search(const SearchSpace& space, int trials, const Dataset& data, int k,
                           const TrainConfig& base, std::uint64_t seed, int threads,
                           const std::vector<Candidate>& extra) {
    if (trials < 1) throw DomainError("random_search: trials must be >= 1");
    space.validate();
    Rng rng(seed);
    std::vector<Trial> all;
    for (int t = 0; t < trials; ++t) all.push_back({sample_candidate(space, rng, base), {}, false, {}});
    for (const auto& c : extra) all.push_back({c, {}, false, {}});

    parallel_for(all.size(), threads, [&](std::size_t i) {
        Trial& t = all[i];
        try {
            t.cv = kfold_cv(data, k, t.candidate.arch, t.candidate.config, 1);
            if (!std::isfinite(t.cv.mean_mse)) {
                t.failed = true;
                t.error = "non-finite validation loss";
            }
        } catch (const Error& e) {
            t.failed = true;
            t.error = e.what();
        }
        if (t.failed) t.cv.mean_mse = std::numeric_limits<double>::infinity();
    });

    SearchResult res;
    res.ranked = std::move(all);
    std::stable_sort(res.ranked.begin(), res.ranked.end(), [](const Trial& a, const Trial& b) {
        return a.cv.mean_mse < b.cv.mean_mse;
    });
    res.consensus = aggregate_top(res.ranked, 5);
    return res;
}

std::string LrRangeResult::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "step,lr,loss,smoothed_loss\n";
    for (std::size_t i = 0; i < lr.size(); ++i) out << i << ',' << lr[i] << ',' << loss[i] << ',' << smoothed[i] << '\n';
    return out.str();
}

nlohmann::json LrRangeResult::summary_json() const {
    return {{"steepest_lr", steepest_lr},
            {"min_loss_lr", min_loss_lr},
            {"divergence_lr", divergence_lr},
            {"band_low", band_low},
            {"band_high", band_high},
            {"steps_recorded", lr.size()}};
}

LrRangeResult lr_range_test(MlpModel model, const Dataset& data, const TrainConfig& config,
                            const LrRangeConfig& range) {
    if (range.steps < 10) throw DomainError("lr_range_test: steps must be >= 10");
    if (!(range.lr_start > 0.0 && range.lr_start < range.lr_end)) {
        throw DomainError("lr_range_test: need 0 < lr_start < lr_end");
    }
    check_widths(model, data, "lr_range_test");
    const RowMatrix x = data.inputs();
    const RowMatrix y = data.outputs();
    if (config.standardize_inputs && !model.has_input_scaling()) fit_input_scaling(model, x);
    if (config.standardize_outputs && !model.has_output_scaling()) fit_output_scaling(model, y);
    const Eigen::MatrixXd xt = scale_inputs(model, x).transpose();
    const Eigen::MatrixXd yt = y.transpose();
    const Eigen::Index n = xt.cols();
    const Eigen::Index bs = std::min(config.batch_size, n);

    OptimizerState opt(config.optimizer);
    opt.beta1 = config.beta1;
    opt.beta2 = config.beta2;
    opt.epsilon = config.epsilon;
    opt.rho = config.rho;
    Rng rng(derive_seed(config.seed, 3));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(order);

    LrRangeResult res;
    Gradients grads = Gradients::zeros_like(model);
    Eigen::MatrixXd xb(xt.rows(), bs), yb(yt.rows(), bs);
    const double log_lo = std::log(range.lr_start);
    const double log_step = (std::log(range.lr_end) - log_lo) / static_cast<double>(range.steps - 1);
    double avg = 0.0;
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index cursor = 0;
    for (int i = 0; i < range.steps; ++i) {
        const double lr = std::exp(log_lo + log_step * i);
        for (Eigen::Index c = 0; c < bs; ++c) {
            if (cursor == n) {
                rng.shuffle(order);
                cursor = 0;
            }
            const Eigen::Index src = order[static_cast<std::size_t>(cursor++)];
            xb.col(c) = xt.col(src);
            yb.col(c) = yt.col(src);
        }
        const double loss = backprop_columns(model, xb, yb, grads, nullptr);
        if (!std::isfinite(loss)) {
            res.divergence_lr = lr;
            break;
        }
        avg = range.smoothing * avg + (1.0 - range.smoothing) * loss;
        const double smoothed = avg / (1.0 - std::pow(range.smoothing, i + 1));
        res.lr.push_back(lr);
        res.loss.push_back(loss);
        res.smoothed.push_back(smoothed);
        if (smoothed < best) {
            best = smoothed;
            res.min_loss_lr = lr;
        }
        if (smoothed > range.divergence_factor * best) {
            res.divergence_lr = lr;
            break;
        }
        step(model, grads, opt, lr);
    }
    double steepest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < res.lr.size(); ++i) {
        if (res.divergence_lr > 0.0 && res.lr[i] >= res.divergence_lr) break;
        const double slope = (res.smoothed[i] - res.smoothed[i - 1]) / log_step;
        if (slope < steepest) {
            steepest = slope;
            res.steepest_lr = res.lr[i];
        }
    }
    // Usable band: up to a decade below the loss minimum, spanning two decades.
    res.band_high = res.min_loss_lr / 10.0;
    res.band_low = res.band_high / 100.0;
    return res;
}

std::string SizeStudyResult::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "factor,rows,repeats,mse_mean,mse_std,r2_mean,r2_std\n";
    for (const auto& r : rows) {
        out << r.factor << ',' << r.rows << ',' << r.mse.size() << ',' << r.mse_mean << ',' << r.mse_std << ','
            << r.r2_mean << ',' << r.r2_std << '\n';
    }
    return out.str();
}

bool SizeStudyResult::monotone_within_pooled_std() const {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].mse_mean > rows[i - 1].mse_mean + pooled_mse_std) return false;
    }
    return true;
}

bool SizeStudyResult::variance_shrinks() const {
    return !rows.empty() && rows.back().mse_std <= rows.front().mse_std;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

SizeStudyResult data_size_study(const Dataset& train_pool, const Dataset& test_set, const std::vector<double>& factors,
                                int repeats, const Architecture& arch, const TrainConfig& config, std::size_t base,
                                int threads) {
    if (repeats < 1) throw DomainError("data_size_study: repeats must be >= 1");
    if (factors.empty()) throw DomainError("data_size_study: no factors");
    SizeStudyResult res;
    std::vector<Dataset> subsets;
    for (double f : factors) {
        subsets.push_back(subset_for_size_study(train_pool, f, base));
        SizeStudyRow row;
        row.factor = f;
        row.rows = subsets.back().rows();
        row.mse.assign(static_cast<std::size_t>(repeats), 0.0);
        row.r2.assign(static_cast<std::size_t>(repeats), 0.0);
        res.rows.push_back(std::move(row));
    }
    const auto in = static_cast<Eigen::Index>(train_pool.input_names().size());
    const auto out = static_cast<Eigen::Index>(train_pool.output_names().size());
    const std::size_t jobs = factors.size() * static_cast<std::size_t>(repeats);
    parallel_for(jobs, threads, [&](std::size_t job) {
        const std::size_t fi = job / static_cast<std::size_t>(repeats);
        const std::size_t rep = job % static_cast<std::size_t>(repeats);
        TrainConfig cfg = config;
        cfg.seed = derive_seed(config.seed, rep);
        const TrainResult r = train(arch.build(in, out, cfg.seed), subsets[fi], nullptr, cfg);
        const MetricsReport m = evaluate(r.model, test_set);
        res.rows[fi].mse[rep] = m.mse;
        res.rows[fi].r2[rep] = m.r2;
    });
    double var_sum = 0.0;
    for (auto& row : res.rows) {
        std::tie(row.mse_mean, row.mse_std) = mean_std(row.mse);
        std::tie(row.r2_mean, row.r2_std) = mean_std(row.r2);
        var_sum += row.mse_std * row.mse_std;
    }
    res.pooled_mse_std = std::sqrt(var_sum / static_cast<double>(res.rows.size()));
    return res;
}

}  // namespace pricer
