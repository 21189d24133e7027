#include "pricer/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pricer/dataset.hpp"
#include "pricer/errors.hpp"
#include "pricer/experiments.hpp"
#include "pricer/generators.hpp"
#include "pricer/mlp.hpp"
#include "pricer/parallel.hpp"
#include "pricer/training.hpp"

namespace pricer {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Flag values keyed by JSON pointer into the resolved config.
using Overrides = std::vector<std::pair<std::string, json>>;

struct OutputFile {
    fs::path path;
    std::string content;
    // What the manifest hash covers: the content minus timing fields and
    // timestamps.
    std::string hashed;
    bool timed = false;
};

struct RunOutput {
    std::vector<OutputFile> files;  // files[0] is the primary output
    std::vector<fs::path> inputs;
};

struct Command {
    const char* name;
    const char* help;
    json (*defaults)();
    void (*flags)(CLI::App&, Overrides&);
    RunOutput (*run)(const json& cfg, std::ostream& out);
};

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string hash_text(std::string_view s) { return hex64(fnv1a64(s.data(), s.size())); }

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// ---- flag helpers ----------------------------------------------------------

template <typename T>
void opt(CLI::App& app, Overrides& ov, const std::string& flag, const std::string& ptr, const std::string& help) {
    app.add_option_function<T>(flag, [&ov, ptr](const T& v) { ov.emplace_back(ptr, json(v)); }, help);
}

void flag(CLI::App& app, Overrides& ov, const std::string& name, const std::string& ptr, const std::string& help) {
    app.add_flag_function(name, [&ov, ptr](std::int64_t count) { ov.emplace_back(ptr, json(count > 0)); }, help);
}

void list_opt(CLI::App& app, Overrides& ov, const std::string& flag, const std::string& ptr,
              const std::string& help) {
    app.add_option_function<std::string>(
        flag, [&ov, ptr](const std::string& v) { ov.emplace_back(ptr, json(split_list(v))); }, help);
}

void number_list_opt(CLI::App& app, Overrides& ov, const std::string& flag, const std::string& ptr,
                     const std::string& help) {
    app.add_option_function<std::string>(
        flag,
        [&ov, ptr, flag](const std::string& v) {
            json arr = json::array();
            for (const auto& item : split_list(v)) {
                try {
                    std::size_t used = 0;
                    const double d = std::stod(item, &used);
                    if (used != item.size()) throw std::invalid_argument(item);
                    arr.push_back(d);
                } catch (const std::logic_error&) {
                    throw DomainError(flag + ": '" + item + "' is not a number");
                }
            }
            ov.emplace_back(ptr, arr);
        },
        help);
}

void arch_flags(CLI::App& app, Overrides& ov) {
    opt<int>(app, ov, "--hidden-layers", "/architecture/hidden_layers", "hidden layer count");
    opt<long>(app, ov, "--neurons", "/architecture/neurons", "neurons per hidden layer");
    opt<std::string>(app, ov, "--activation", "/architecture/activation", "relu, sigmoid, leaky_relu, tanh, elu");
    opt<std::string>(app, ov, "--init", "/architecture/init", "uniform, glorot_uniform, he_uniform");
    opt<double>(app, ov, "--dropout", "/architecture/dropout", "dropout rate");
}

void train_flags(CLI::App& app, Overrides& ov) {
    opt<int>(app, ov, "--epochs", "/train/epochs", "training epochs");
    opt<long>(app, ov, "--batch-size", "/train/batch_size", "mini-batch size");
    opt<std::string>(app, ov, "--optimizer", "/train/optimizer", "sgd, adam, rmsprop");
    opt<double>(app, ov, "--lr", "/train/schedule/lr", "initial learning rate");
    opt<double>(app, ov, "--lr-final", "/train/schedule/lr_final", "final rate of an exponential decay");
    opt<double>(app, ov, "--validation-fraction", "/train/validation_fraction",
                "held-out share when no validation set is given");
}

void column_flags(CLI::App& app, Overrides& ov) {
    list_opt(app, ov, "--inputs", "/inputs", "comma-separated input columns");
    list_opt(app, ov, "--outputs", "/outputs", "comma-separated output columns");
}

void cos_flags(CLI::App& app, Overrides& ov) {
    opt<int>(app, ov, "--cos-terms", "/cos/n_terms", "COS expansion terms");
    opt<double>(app, ov, "--cos-width", "/cos/trunc_width", "COS truncation width L");
}

// ---- config resolution -----------------------------------------------------

void check_known_keys(const json& given, const json& known, const std::string& where) {
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string key = where + "/" + it.key();
        if (!known.contains(it.key())) throw DomainError("unknown config key '" + key + "'");
        const json& k = known.at(it.key());
        if (it.key() != "schedule" && k.is_object() && it.value().is_object()) {
            check_known_keys(it.value(), k, key);
        }
    }
}

// Objects merge key by key; a schedule is replaced whole since its
// fields depend on its kind.
void merge_into(json& target, const json& patch) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it.key() != "schedule" && target.contains(it.key()) && target[it.key()].is_object() &&
            it.value().is_object()) {
            merge_into(target[it.key()], it.value());
        } else {
            target[it.key()] = it.value();
        }
    }
}

json read_config_file(const std::string& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DomainError("config file '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw DomainError("config file '" + path + "': expected a JSON object");
    return j;
}

json train_defaults() {
    json t = TrainConfig{}.to_json();
    t.erase("seed");  // the command-level seed drives training
    return t;
}

// Canonical form of the nested sections, so the manifest records exactly
// what ran.
void normalize(json& cfg) {
    if (cfg.contains("architecture")) cfg["architecture"] = Architecture::from_json(cfg["architecture"]).to_json();
    if (cfg.contains("train")) {
        json t = TrainConfig::from_json(cfg["train"]).to_json();
        t.erase("seed");
        cfg["train"] = t;
    }
    if (cfg["threads"].is_null()) cfg["threads"] = default_thread_count();
    if (cfg["threads"].get<int>() < 1) throw DomainError("threads must be >= 1");
}

json resolve(const Command& c, const std::string& config_path, const Overrides& ov) {
    json cfg = c.defaults();
    cfg["seed"] = 0;
    cfg["threads"] = nullptr;
    if (!config_path.empty()) {
        const json file = read_config_file(config_path);
        check_known_keys(file, cfg, "");
        merge_into(cfg, file);
    }
    for (const auto& [ptr, value] : ov) cfg[json::json_pointer(ptr)] = value;
    normalize(cfg);
    return cfg;
}

// ---- shared pieces ---------------------------------------------------------

std::string required_path(const json& cfg, const char* key) {
    if (!cfg.contains(key) || cfg[key].is_null() || cfg[key].get<std::string>().empty()) {
        throw DomainError(std::string("missing required option '") + key + "'");
    }
    return cfg[key].get<std::string>();
}

std::string path_or(const json& cfg, const char* key, const std::string& fallback) {
    if (cfg.contains(key) && !cfg[key].is_null() && !cfg[key].get<std::string>().empty()) {
        return cfg[key].get<std::string>();
    }
    return fallback;
}

std::uint64_t seed_of(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }
int threads_of(const json& cfg) { return cfg.at("threads").get<int>(); }

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
    return p.parent_path() / (p.stem().string() + suffix);
}

CosConfig cos_from(const json& j) {
    CosConfig c;
    c.n_terms = j.value("n_terms", c.n_terms);
    c.trunc_width = j.value("trunc_width", c.trunc_width);
    c.validate();
    return c;
}

json cos_defaults() {
    const CosConfig c;
    return {{"n_terms", c.n_terms}, {"trunc_width", c.trunc_width}};
}

// Reorders / relabels columns; empty name lists keep the dataset's roles.
Dataset select_columns(const Dataset& ds, std::vector<std::string> inputs, std::vector<std::string> outputs) {
    if (inputs.empty() && outputs.empty()) return ds;
    if (inputs.empty()) inputs = ds.input_names();
    if (outputs.empty()) outputs = ds.output_names();
    std::vector<Column> cols;
    std::vector<Eigen::Index> src;
    auto add = [&](const std::string& name, ColumnRole role) {
        const Eigen::Index idx = ds.column_index(name);
        Column c = ds.columns()[static_cast<std::size_t>(idx)];
        c.role = role;
        cols.push_back(c);
        src.push_back(idx);
    };
    for (const auto& n : inputs) add(n, ColumnRole::Input);
    for (const auto& n : outputs) add(n, ColumnRole::Output);
    RowMatrix data(ds.rows(), static_cast<Eigen::Index>(src.size()));
    for (std::size_t j = 0; j < src.size(); ++j) data.col(static_cast<Eigen::Index>(j)) = ds.data().col(src[j]);
    Dataset out(std::move(cols), std::move(data));
    out.transforms = ds.transforms;
    out.provenance = ds.provenance;
    return out;
}

std::vector<std::string> names_of(const json& j) { return j.get<std::vector<std::string>>(); }

Dataset load_columns(const std::string& path, const json& cfg) {
    return select_columns(load_dataset(path), names_of(cfg.at("inputs")), names_of(cfg.at("outputs")));
}

void add_dataset(RunOutput& r, const Dataset& ds, const fs::path& csv) {
    const std::string text = dataset_to_csv(ds);
    r.files.push_back({csv, text, text, false});
    json meta = dataset_sidecar(ds);
    const std::string meta_text = meta.dump(2) + "\n";
    meta.erase("created");
    r.files.push_back({sidecar_path(csv), meta_text, meta.dump(), false});
}

void add_text(RunOutput& r, const fs::path& path, std::string content) {
    std::string hashed = content;
    r.files.push_back({path, std::move(content), std::move(hashed), false});
}

std::string model_text(const MlpModel& m) { return model_to_json(m).dump() + "\n"; }

// ---- generate --------------------------------------------------------------

json generate_defaults() {
    return {{"model", "bs"},
            {"variant", "wide"},
            {"n", 1000},
            {"unscaled", false},
            {"min_time_value", IvGenOptions{}.min_time_value},
            {"cos", cos_defaults()},
            {"out", nullptr}};
}

void generate_flags(CLI::App& app, Overrides& ov) {
    opt<std::string>(app, ov, "--model", "/model", "bs, iv or heston");
    opt<std::string>(app, ov, "--variant", "/variant", "wide or narrow (bs)");
    opt<long>(app, ov, "--n", "/n", "rows");
    flag(app, ov, "--unscaled", "/unscaled", "iv: emit V/K instead of the log time value");
    opt<double>(app, ov, "--min-time-value", "/min_time_value", "iv: drop rows below this time value");
    cos_flags(app, ov);
    opt<std::string>(app, ov, "--out", "/out", "dataset CSV path");
}

RunOutput generate_run(const json& cfg, std::ostream& out) {
    const std::string model = cfg.at("model").get<std::string>();
    const BsVariant variant = parse_bs_variant(cfg.at("variant").get<std::string>());
    const long n = cfg.at("n").get<long>();
    if (n < 1) throw DomainError("n must be >= 1");
    const std::uint64_t seed = seed_of(cfg);
    const int threads = threads_of(cfg);
    const bool unscaled = cfg.at("unscaled").get<bool>();

    Dataset ds;
    std::string stem;
    if (model == "bs") {
        ds = generate_bs_dataset(static_cast<std::size_t>(n), variant, seed, threads);
        stem = "bs_" + std::string(to_string(variant));
    } else if (model == "iv") {
        IvGenOptions o;
        o.unscaled = unscaled;
        o.min_time_value = cfg.at("min_time_value").get<double>();
        ds = generate_iv_dataset(static_cast<std::size_t>(n), seed, o, iv_space(), threads);
        stem = unscaled ? "iv_unscaled" : "iv";
    } else if (model == "heston") {
        ds = generate_heston_dataset(static_cast<std::size_t>(n), seed, cos_from(cfg.at("cos")), threads);
        stem = "heston";
    } else {
        throw DomainError("unknown model '" + model + "' (expected bs, iv or heston)");
    }
    const fs::path csv = path_or(cfg, "out", stem + "_seed" + std::to_string(seed) + ".csv");
    RunOutput r;
    add_dataset(r, ds, csv);
    out << "generated " << ds.rows() << " rows -> " << csv.string() << "\n";
    return r;
}

// ---- split -----------------------------------------------------------------

json split_defaults() {
    const SplitSpec s;
    return {{"data", nullptr},
            {"train_fraction", s.train},
            {"validation_fraction", s.validation},
            {"test_fraction", s.test},
            {"out_prefix", nullptr}};
}

void split_flags(CLI::App& app, Overrides& ov) {
    opt<std::string>(app, ov, "--data", "/data", "dataset CSV");
    opt<double>(app, ov, "--train", "/train_fraction", "training fraction");
    opt<double>(app, ov, "--validation", "/validation_fraction", "validation fraction");
    opt<double>(app, ov, "--test", "/test_fraction", "test fraction");
    opt<std::string>(app, ov, "--out-prefix", "/out_prefix", "output prefix; files <prefix>_train.csv, ...");
}

RunOutput split_run(const json& cfg, std::ostream& out) {
    const std::string data = required_path(cfg, "data");
    SplitSpec spec;
    spec.train = cfg.at("train_fraction").get<double>();
    spec.validation = cfg.at("validation_fraction").get<double>();
    spec.test = cfg.at("test_fraction").get<double>();
    spec.seed = seed_of(cfg);
    const Dataset ds = load_dataset(data);
    const SplitResult parts = split(ds, spec);
    const fs::path src(data);
    const std::string prefix =
        path_or(cfg, "out_prefix", (src.parent_path() / (src.stem().string() + "_split")).string());
    RunOutput r;
    r.inputs.push_back(data);
    auto emit = [&](Dataset part, const char* name) {
        if (part.rows() == 0) return;
        part.provenance["split"] = {{"part", name},
                                    {"source", data},
                                    {"train", spec.train},
                                    {"validation", spec.validation},
                                    {"test", spec.test},
                                    {"seed", spec.seed}};
        add_dataset(r, part, prefix + "_" + name + ".csv");
        out << name << ": " << part.rows() << " rows\n";
    };
    emit(parts.train, "train");
    emit(parts.validation, "validation");
    emit(parts.test, "test");
    return r;
}

// ---- train -----------------------------------------------------------------

json train_cmd_defaults() {
    return {{"data", nullptr},
            {"val", nullptr},
            {"inputs", json::array()},
            {"outputs", json::array()},
            {"architecture", Architecture{}.to_json()},
            {"train", train_defaults()},
            {"out", nullptr},
            {"history", nullptr}};
}

void train_cmd_flags(CLI::App& app, Overrides& ov) {
    opt<std::string>(app, ov, "--data", "/data", "training dataset CSV");
    opt<std::string>(app, ov, "--val", "/val", "validation dataset CSV");
    column_flags(app, ov);
    arch_flags(app, ov);
    train_flags(app, ov);
    opt<std::string>(app, ov, "--out", "/out", "model JSON path");
    opt<std::string>(app, ov, "--history", "/history", "history CSV path");
}

TrainConfig train_config_of(const json& cfg) {
    TrainConfig tc = TrainConfig::from_json(cfg.at("train"));
    tc.seed = seed_of(cfg);
    return tc;
}

RunOutput train_cmd_run(const json& cfg, std::ostream& out) {
    const std::string data = required_path(cfg, "data");
    const std::uint64_t seed = seed_of(cfg);
    const Dataset tr = load_columns(data, cfg);
    std::optional<Dataset> val;
    RunOutput r;
    r.inputs.push_back(data);
    if (!path_or(cfg, "val", "").empty()) {
        val = load_columns(cfg.at("val").get<std::string>(), cfg);
        r.inputs.push_back(cfg.at("val").get<std::string>());
    }
    const Architecture arch = Architecture::from_json(cfg.at("architecture"));
    const TrainConfig tc = train_config_of(cfg);
    MlpModel model = arch.build(static_cast<Eigen::Index>(tr.input_names().size()),
                                static_cast<Eigen::Index>(tr.output_names().size()), seed);
    TrainResult res = train(std::move(model), tr, val ? &*val : nullptr, tc);
    const fs::path model_path = path_or(cfg, "out", "model_seed" + std::to_string(seed) + ".json");
    const fs::path history = path_or(cfg, "history", with_suffix(model_path, ".history.csv").string());
    add_text(r, model_path, model_text(res.model));
    add_text(r, history, res.history.to_csv());
    out << "trained " << res.history.train_loss.size() << " epochs, final train loss "
        << res.history.train_loss.back() << ", val loss " << res.history.val_loss.back() << " -> "
        << model_path.string() << "\n";
    return r;
}

// ---- eval ------------------------------------------------------------------

json eval_defaults() {
    return {{"model", nullptr},
            {"data", nullptr},
            {"inputs", json::array()},
            {"outputs", json::array()},
            {"out", nullptr}};
}

void eval_flags(CLI::App& app, Overrides& ov) {
    opt<std::string>(app, ov, "--model", "/model", "model JSON");
    opt<std::string>(app, ov, "--data", "/data", "test dataset CSV");
    column_flags(app, ov);
    opt<std::string>(app, ov, "--out", "/out", "metrics JSON path");
}

RunOutput eval_run(const json& cfg, std::ostream& out) {
    const std::string model_path = required_path(cfg, "model");
    const std::string data = required_path(cfg, "data");
    const MlpModel model = load_model(model_path);
    auto inputs = names_of(cfg.at("inputs"));
    auto outputs = names_of(cfg.at("outputs"));
    // Default to the columns the model was trained on.
    if (inputs.empty() && model.training_meta.contains("inputs")) inputs = names_of(model.training_meta["inputs"]);
    if (outputs.empty() && model.training_meta.contains("outputs")) {
        outputs = names_of(model.training_meta["outputs"]);
    }
    const Dataset ds = select_columns(load_dataset(data), inputs, outputs);
    const MetricsReport m = evaluate(model, ds);
    json report = m.to_json();
    report["model"] = model_path;
    report["data"] = data;
    const fs::path path = path_or(cfg, "out", "eval_seed" + std::to_string(seed_of(cfg)) + ".json");
    RunOutput r;
    r.inputs = {model_path, data};
    add_text(r, path, report.dump(2) + "\n");
    out << "mse " << m.mse << " rmse " << m.rmse << " mae " << m.mae << " r2 " << m.r2 << "\n";
    return r;
}

// ---- bench-iv --------------------------------------------------------------

json bench_defaults() {
    return {{"n", 20000},
            {"methods", {"brent", "bisection", "newton", "secant"}},
            {"model", nullptr},
            {"sigma_low", 0.01},
            {"sigma_high", 0.99},
            {"ann_batches", {1, 4096}},
            {"timed", true},
            {"out", nullptr}};
}

void bench_flags(CLI::App& app, Overrides& ov) {
    opt<long>(app, ov, "--n", "/n", "options in the suite");
    list_opt(app, ov, "--methods", "/methods", "comma-separated: brent, bisection, newton, secant, ann");
    opt<std::string>(app, ov, "--model", "/model", "IV-ANN model JSON (needed for ann)");
    opt<double>(app, ov, "--sigma-low", "/sigma_low", "lowest true volatility");
    opt<double>(app, ov, "--sigma-high", "/sigma_high", "highest true volatility");
    number_list_opt(app, ov, "--ann-batches", "/ann_batches", "comma-separated ANN batch sizes");
    opt<bool>(app, ov, "--timed", "/timed", "measure timings (true/false)");
    opt<std::string>(app, ov, "--out", "/out", "report CSV path");
}

RunOutput bench_run(const json& cfg, std::ostream& out) {
    const long n = cfg.at("n").get<long>();
    if (n < 1) throw DomainError("n must be >= 1");
    const auto methods = names_of(cfg.at("methods"));
    if (methods.empty()) throw DomainError("methods: need at least one");
    const bool want_ann = std::find(methods.begin(), methods.end(), "ann") != methods.end();
    std::optional<MlpModel> model;
    RunOutput r;
    if (want_ann) {
        const std::string p = path_or(cfg, "model", "");
        if (p.empty()) throw DomainError("method 'ann' needs --model");
        model = load_model(p);
        r.inputs.push_back(p);
    }
    std::vector<int> batches;
    for (const auto& b : cfg.at("ann_batches")) {
        const double v = b.get<double>();
        if (!(v >= 1.0) || v != static_cast<int>(v)) throw DomainError("ann_batches: positive integers expected");
        batches.push_back(static_cast<int>(v));
    }
    const BenchSuite suite = make_bench_suite(static_cast<std::size_t>(n), seed_of(cfg),
                                              cfg.at("sigma_low").get<double>(), cfg.at("sigma_high").get<double>());
    const BenchReport rep =
        bench_iv_methods(suite, methods, model ? &*model : nullptr, {}, batches, cfg.at("timed").get<bool>());
    const fs::path path = path_or(cfg, "out", "bench_iv_seed" + std::to_string(seed_of(cfg)) + ".csv");
    r.files.push_back({path, rep.to_csv(), rep.to_csv_untimed(), true});
    if (!rep.ann_batches.empty()) {
        std::string batch_list;
        for (const auto& a : rep.ann_batches) batch_list += std::to_string(a.batch) + "\n";
        r.files.push_back({with_suffix(path, ".amortization.csv"), rep.amortization_csv(), batch_list, true});
    }
    out << rep.to_csv();
    return r;
}

// ---- size-study ------------------------------------------------------------

json size_defaults() {
    return {{"data", nullptr},
            {"test", nullptr},
            {"inputs", json::array()},
            {"outputs", json::array()},
            {"factors", kSizeStudyFactors},
            {"repeats", 3},
            {"base", kSizeStudyBase},
            {"architecture", Architecture{}.to_json()},
            {"train", train_defaults()},
            {"out", nullptr}};
}

void size_flags(CLI::App& app, Overrides& ov) {
    opt<std::string>(app, ov, "--data", "/data", "shuffled training pool CSV");
    opt<std::string>(app, ov, "--test", "/test", "test dataset CSV");
    column_flags(app, ov);
    number_list_opt(app, ov, "--factors", "/factors", "comma-separated size factors");
    opt<int>(app, ov, "--repeats", "/repeats", "seeds per factor");
    opt<long>(app, ov, "--base", "/base", "rows at factor 1");
    arch_flags(app, ov);
    train_flags(app, ov);
    opt<std::string>(app, ov, "--out", "/out", "study CSV path");
}

RunOutput size_run(const json& cfg, std::ostream& out) {
    const std::string data = required_path(cfg, "data");
    const std::string test = required_path(cfg, "test");
    const long base = cfg.at("base").get<long>();
    if (base < 1) throw DomainError("base must be >= 1");
    const SizeStudyResult res = data_size_study(
        load_columns(data, cfg), load_columns(test, cfg), cfg.at("factors").get<std::vector<double>>(),
        cfg.at("repeats").get<int>(), Architecture::from_json(cfg.at("architecture")), train_config_of(cfg),
        static_cast<std::size_t>(base), threads_of(cfg));
    const fs::path path = path_or(cfg, "out", "size_study_seed" + std::to_string(seed_of(cfg)) + ".csv");
    RunOutput r;
    r.inputs = {data, test};
    add_text(r, path, res.to_csv());
    out << res.to_csv() << "monotone within pooled std: " << (res.monotone_within_pooled_std() ? "yes" : "no")
        << ", variance shrinks: " << (res.variance_shrinks() ? "yes" : "no") << "\n";
    return r;
}

// ---- lr-range --------------------------------------------------------------

json lr_defaults() {
    const LrRangeConfig c;
    return {{"data", nullptr},
            {"inputs", json::array()},
            {"outputs", json::array()},
            {"architecture", Architecture{}.to_json()},
            {"train", train_defaults()},
            {"lr_start", c.lr_start},
            {"lr_end", c.lr_end},
            {"steps", c.steps},
            {"smoothing", c.smoothing},
            {"divergence_factor", c.divergence_factor},
            {"out", nullptr}};
}

void lr_flags(CLI::App& app, Overrides& ov) {
    opt<std::string>(app, ov, "--data", "/data", "training dataset CSV");
    column_flags(app, ov);
    arch_flags(app, ov);
    train_flags(app, ov);
    opt<double>(app, ov, "--lr-start", "/lr_start", "first learning rate");
    opt<double>(app, ov, "--lr-end", "/lr_end", "last learning rate");
    opt<int>(app, ov, "--steps", "/steps", "ramp length in mini-batches");
    opt<std::string>(app, ov, "--out", "/out", "ramp CSV path");
}

RunOutput lr_run(const json& cfg, std::ostream& out) {
    const std::string data = required_path(cfg, "data");
    const Dataset ds = load_columns(data, cfg);
    LrRangeConfig rc;
    rc.lr_start = cfg.at("lr_start").get<double>();
    rc.lr_end = cfg.at("lr_end").get<double>();
    rc.steps = cfg.at("steps").get<int>();
    rc.smoothing = cfg.at("smoothing").get<double>();
    rc.divergence_factor = cfg.at("divergence_factor").get<double>();
    const Architecture arch = Architecture::from_json(cfg.at("architecture"));
    MlpModel model = arch.build(static_cast<Eigen::Index>(ds.input_names().size()),
                                static_cast<Eigen::Index>(ds.output_names().size()), seed_of(cfg));
    const LrRangeResult res = lr_range_test(std::move(model), ds, train_config_of(cfg), rc);
    const fs::path path = path_or(cfg, "out", "lr_range_seed" + std::to_string(seed_of(cfg)) + ".csv");
    RunOutput r;
    r.inputs.push_back(data);
    add_text(r, path, res.to_csv());
    add_text(r, with_suffix(path, ".summary.json"), res.summary_json().dump(2) + "\n");
    out << res.summary_json().dump(2) << "\n";
    return r;
}

// ---- search ----------------------------------------------------------------

json names_json(const auto& values) {
    json arr = json::array();
    for (const auto& v : values) arr.push_back(std::string(to_string(v)));
    return arr;
}

json search_defaults() {
    const SearchSpace s;
    json t = train_defaults();
    t["epochs"] = 20;
    return {{"data", nullptr},
            {"inputs", json::array()},
            {"outputs", json::array()},
            {"trials", 20},
            {"k", 3},
            {"include_reference", true},
            {"space",
             {{"activations", names_json(s.activations)},
              {"dropout_low", s.dropout_low},
              {"dropout_high", s.dropout_high},
              {"neurons_low", s.neurons_low},
              {"neurons_high", s.neurons_high},
              {"inits", names_json(s.inits)},
              {"optimizers", names_json(s.optimizers)},
              {"batch_low", s.batch_low},
              {"batch_high", s.batch_high},
              {"hidden_layers", s.hidden_layers}}},
            {"train", t},
            {"out", nullptr}};
}

void search_flags(CLI::App& app, Overrides& ov) {
    opt<std::string>(app, ov, "--data", "/data", "training dataset CSV");
    column_flags(app, ov);
    opt<int>(app, ov, "--trials", "/trials", "sampled candidates");
    opt<int>(app, ov, "--k", "/k", "cross-validation folds");
    opt<int>(app, ov, "--epochs", "/train/epochs", "epochs per fold");
    opt<bool>(app, ov, "--include-reference", "/include_reference", "also score the reference network");
    opt<std::string>(app, ov, "--out", "/out", "search JSON path");
}

SearchSpace space_from(const json& j) {
    SearchSpace s;
    s.activations.clear();
    for (const auto& a : j.at("activations")) s.activations.push_back(parse_activation(a.get<std::string>()));
    s.inits.clear();
    for (const auto& a : j.at("inits")) s.inits.push_back(parse_init_scheme(a.get<std::string>()));
    s.optimizers.clear();
    for (const auto& a : j.at("optimizers")) s.optimizers.push_back(parse_optimizer(a.get<std::string>()));
    s.dropout_low = j.at("dropout_low").get<double>();
    s.dropout_high = j.at("dropout_high").get<double>();
    s.neurons_low = j.at("neurons_low").get<Eigen::Index>();
    s.neurons_high = j.at("neurons_high").get<Eigen::Index>();
    s.batch_low = j.at("batch_low").get<Eigen::Index>();
    s.batch_high = j.at("batch_high").get<Eigen::Index>();
    s.hidden_layers = j.at("hidden_layers").get<int>();
    s.validate();
    return s;
}

RunOutput search_run(const json& cfg, std::ostream& out) {
    const std::string data = required_path(cfg, "data");
    const Dataset ds = load_columns(data, cfg);
    const TrainConfig base = train_config_of(cfg);
    std::vector<Candidate> extra;
    if (cfg.at("include_reference").get<bool>()) extra.push_back({Architecture{}, base});
    const SearchResult res = random_search(space_from(cfg.at("space")), cfg.at("trials").get<int>(), ds,
                                           cfg.at("k").get<int>(), base, seed_of(cfg), threads_of(cfg), extra);
    const fs::path path = path_or(cfg, "out", "search_seed" + std::to_string(seed_of(cfg)) + ".json");
    RunOutput r;
    r.inputs.push_back(data);
    const json j = res.to_json();
    add_text(r, path, j.dump(2) + "\n");
    out << "top-5 consensus: " << j["top5_consensus"].dump() << "\n";
    return r;
}

// ---- surface ---------------------------------------------------------------

json surface_defaults() {
    const SurfaceSpec s;
    return {{"model", nullptr},
            {"heston",
             {{"kappa", s.params.kappa},
              {"nu_bar", s.params.nu_bar},
              {"gamma", s.params.gamma},
              {"rho", s.params.rho},
              {"nu0", s.params.nu0},
              {"rate", s.rate}}},
            {"nm", 13},
            {"nt", 6},
            {"m_low", 0.7},
            {"m_high", 1.3},
            {"tau_low", 0.5},
            {"tau_high", 1.0},
            {"cos", cos_defaults()},
            {"out", nullptr}};
}

// "rho=-0.05,kappa=1.5,nubar=0.1" -> per-key overrides of /heston.
void heston_option(CLI::App& app, Overrides& ov) {
    app.add_option_function<std::string>(
        "--heston",
        [&ov](const std::string& v) {
            for (const auto& item : split_list(v)) {
                const auto eq = item.find('=');
                if (eq == std::string::npos) throw DomainError("--heston: expected key=value, got '" + item + "'");
                std::string key = item.substr(0, eq);
                if (key == "nubar") key = "nu_bar";
                if (key == "r") key = "rate";
                static const std::vector<std::string> known{"kappa", "nu_bar", "gamma", "rho", "nu0", "rate"};
                if (std::find(known.begin(), known.end(), key) == known.end()) {
                    throw DomainError("--heston: unknown parameter '" + key + "'");
                }
                const std::string value = item.substr(eq + 1);
                try {
                    std::size_t used = 0;
                    const double d = std::stod(value, &used);
                    if (used != value.size()) throw std::invalid_argument(value);
                    ov.emplace_back("/heston/" + key, d);
                } catch (const std::logic_error&) {
                    throw DomainError("--heston: '" + value + "' is not a number");
                }
            }
        },
        "key=value list: kappa, nubar, gamma, rho, nu0, r");
}

void surface_flags(CLI::App& app, Overrides& ov) {
    opt<std::string>(app, ov, "--model", "/model", "IV-ANN model JSON");
    heston_option(app, ov);
    opt<int>(app, ov, "--nm", "/nm", "moneyness grid points");
    opt<int>(app, ov, "--nt", "/nt", "maturity grid points");
    cos_flags(app, ov);
    opt<std::string>(app, ov, "--out", "/out", "surface CSV path");
}

std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 1) throw DomainError("surface grid: need at least one point per axis");
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1));
    return v;
}

RunOutput surface_run(const json& cfg, std::ostream& out) {
    const std::string model_path = required_path(cfg, "model");
    const MlpModel model = load_model(model_path);
    const json& h = cfg.at("heston");
    SurfaceSpec spec;
    spec.params.kappa = h.at("kappa").get<double>();
    spec.params.nu_bar = h.at("nu_bar").get<double>();
    spec.params.gamma = h.at("gamma").get<double>();
    spec.params.rho = h.at("rho").get<double>();
    spec.params.nu0 = h.at("nu0").get<double>();
    spec.params.validate();
    spec.rate = h.at("rate").get<double>();
    spec.moneyness = linspace(cfg.at("m_low").get<double>(), cfg.at("m_high").get<double>(), cfg.at("nm").get<int>());
    spec.tau = linspace(cfg.at("tau_low").get<double>(), cfg.at("tau_high").get<double>(), cfg.at("nt").get<int>());
    const SurfaceResult res = iv_surface(model, spec, cos_from(cfg.at("cos")));
    const fs::path path = path_or(cfg, "out", "surface_seed" + std::to_string(seed_of(cfg)) + ".csv");
    RunOutput r;
    r.inputs.push_back(model_path);
    add_text(r, path, res.to_csv());
    out << "max |iv_ann - iv_truth| " << res.max_abs_deviation << ", missing " << res.missing
        << ", truth smile: " << (res.truth_has_smile() ? "yes" : "no") << "\n";
    return r;
}

// ---- chain -----------------------------------------------------------------

json chain_defaults() {
    return {{"heston_model", nullptr},
            {"iv_model", nullptr},
            {"case", "both"},
            {"n", 10000},
            {"use_cos_prices", false},
            {"cos", cos_defaults()},
            {"out", nullptr}};
}

void chain_flags(CLI::App& app, Overrides& ov) {
    opt<std::string>(app, ov, "--heston-model", "/heston_model", "Heston-ANN model JSON");
    opt<std::string>(app, ov, "--iv-model", "/iv_model", "IV-ANN model JSON");
    opt<std::string>(app, ov, "--case", "/case", "1, 2 or both");
    opt<long>(app, ov, "--n", "/n", "evaluation grid points per case");
    flag(app, ov, "--use-cos-prices", "/use_cos_prices", "feed COS prices to the IV-ANN");
    cos_flags(app, ov);
    opt<std::string>(app, ov, "--out", "/out", "chain JSON path");
}

RunOutput chain_run(const json& cfg, std::ostream& out) {
    const std::string hp = required_path(cfg, "heston_model");
    const std::string ip = required_path(cfg, "iv_model");
    const std::string which = cfg.at("case").get<std::string>();
    std::vector<ChainCase> cases;
    if (which == "1" || which == "both") cases.push_back(chain_case1());
    if (which == "2" || which == "both") cases.push_back(chain_case2());
    if (cases.empty()) throw DomainError("case: expected 1, 2 or both, got '" + which + "'");
    const long n = cfg.at("n").get<long>();
    if (n < 1) throw DomainError("n must be >= 1");
    const MlpModel heston = load_model(hp);
    const MlpModel iv = load_model(ip);
    const CosConfig cos = cos_from(cfg.at("cos"));
    json results = json::array();
    for (const auto& c : cases) {
        const Dataset grid = chain_grid(c, static_cast<std::size_t>(n), seed_of(cfg));
        const ChainResult res =
            heston_iv_chain(heston, iv, grid, cos, cfg.at("use_cos_prices").get<bool>(), threads_of(cfg));
        results.push_back(res.to_json());
        out << c.name << ": rmse " << res.metrics.rmse << " over " << res.metrics.n << " points\n";
    }
    const fs::path path = path_or(cfg, "out", "chain_seed" + std::to_string(seed_of(cfg)) + ".json");
    RunOutput r;
    r.inputs = {hp, ip};
    add_text(r, path, json{{"cases", results}}.dump(2) + "\n");
    return r;
}

// ---- registry, manifests, replay --------------------------------------------

const std::vector<Command>& commands() {
    static const std::vector<Command> cmds{
        {"generate", "Generate a Latin-hypercube dataset (bs, iv, heston)", generate_defaults, generate_flags,
         generate_run},
        {"split", "Shuffle and partition a dataset", split_defaults, split_flags, split_run},
        {"train", "Train a network on a dataset", train_cmd_defaults, train_cmd_flags, train_cmd_run},
        {"eval", "Score a model on a dataset", eval_defaults, eval_flags, eval_run},
        {"bench-iv", "Benchmark implied-volatility solvers and the IV-ANN", bench_defaults, bench_flags,
         bench_run},
        {"size-study", "Test error versus training-set size", size_defaults, size_flags, size_run},
        {"lr-range", "Learning-rate range test", lr_defaults, lr_flags, lr_run},
        {"search", "Random hyperparameter search with k-fold cross-validation", search_defaults, search_flags,
         search_run},
        {"surface", "Implied-volatility surface of a Heston model", surface_defaults, surface_flags, surface_run},
        {"chain", "Heston-ANN -> IV-ANN chained inference", chain_defaults, chain_flags, chain_run},
    };
    return cmds;
}

const Command& find_command(const std::string& name) {
    for (const auto& c : commands()) {
        if (name == c.name) return c;
    }
    throw FormatError("manifest names unknown command '" + name + "'");
}

json file_entry(const fs::path& p, const std::string& hash) { return {{"path", p.string()}, {"fnv1a64", hash}}; }

json output_hashes(const RunOutput& r) {
    json outs = json::array();
    for (const auto& f : r.files) {
        json e = file_entry(f.path, hash_text(f.hashed));
        e["timed"] = f.timed;
        outs.push_back(e);
    }
    return outs;
}

// Writes every output and then the manifest; nothing is written before the
// whole command has succeeded.
json commit(const Command& c, const json& cfg, const RunOutput& r) {
    if (r.files.empty()) throw Error("command produced no output");
    json inputs = json::array();
    for (const auto& p : r.inputs) inputs.push_back(file_entry(p, hash_text(read_file(p))));
    for (const auto& f : r.files) write_file_atomic(f.path, f.content);
    json m = {{"tool", "pricer"},
              {"tool_version", kToolVersion},
              {"command", c.name},
              {"seed", cfg.at("seed")},
              {"config", cfg},
              {"inputs", inputs},
              {"outputs", output_hashes(r)},
              {"timestamp", utc_now()}};
    write_file_atomic(manifest_path(r.files.front().path), m.dump(2) + "\n");
    return m;
}

int replay(const std::string& manifest_file, std::optional<int> threads, bool verify, std::ostream& out,
           std::ostream& err) {
    json m;
    try {
        m = json::parse(read_file(manifest_file));
    } catch (const json::exception& e) {
        throw FormatError("manifest '" + manifest_file + "': " + e.what());
    }
    if (!m.contains("command") || !m.contains("config")) {
        throw FormatError("manifest '" + manifest_file + "': missing command or config");
    }
    const Command& c = find_command(m["command"].get<std::string>());
    json cfg = m["config"];
    if (threads) cfg["threads"] = *threads;
    normalize(cfg);
    const RunOutput r = c.run(cfg, out);
    const json now = commit(c, cfg, r);
    if (!verify) return kExitOk;
    std::size_t mismatches = 0;
    for (const auto& before : m.value("outputs", json::array())) {
        const auto it = std::find_if(now["outputs"].begin(), now["outputs"].end(),
                                     [&](const json& e) { return e["path"] == before["path"]; });
        const bool same = it != now["outputs"].end() && (*it)["fnv1a64"] == before["fnv1a64"];
        out << (same ? "match    " : "MISMATCH ") << before["path"].get<std::string>() << "\n";
        if (!same) ++mismatches;
    }
    if (mismatches > 0) {
        err << "replay: " << mismatches << " output(s) differ from the manifest\n";
        return kExitNumeric;
    }
    return kExitOk;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const NonFiniteLoss& e) {
        err << "error: non-finite loss at step " << e.step() << ": " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const DomainError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeMismatch& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const EmptyInput& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& primary_output) {
    return with_suffix(primary_output, ".manifest.json");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() -> int {
        CLI::App app{"Option pricing with neural-network surrogates"};
        app.require_subcommand(1);
        app.set_version_flag("--version", kToolVersion);

        Overrides ov;
        std::string config_path;
        std::vector<std::pair<CLI::App*, const Command*>> subs;
        for (const auto& c : commands()) {
            CLI::App* sub = app.add_subcommand(c.name, c.help);
            sub->add_option("--config", config_path, "JSON config file; flags override it");
            opt<std::uint64_t>(*sub, ov, "--seed", "/seed", "seed (default 0)");
            opt<int>(*sub, ov, "--threads", "/threads", "worker cap (default: PRICER_THREADS, else 1)");
            c.flags(*sub, ov);
            subs.emplace_back(sub, &c);
        }
        std::string manifest_file;
        std::optional<int> replay_threads;
        bool verify = false;
        CLI::App* rep = app.add_subcommand("replay", "Re-run a command from its manifest");
        rep->add_option("--manifest", manifest_file, "manifest JSON")->required();
        rep->add_option_function<int>("--threads", [&](int t) { replay_threads = t; }, "worker cap");
        rep->add_flag("--verify", verify, "compare output hashes with the manifest");

        std::vector<const char*> argv{"pricer"};
        for (const auto& a : args) argv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? kExitOk : kExitConfig;
        }

        if (rep->parsed()) return replay(manifest_file, replay_threads, verify, out, err);
        for (const auto& [sub, c] : subs) {
            if (!sub->parsed()) continue;
            const json cfg = resolve(*c, config_path, ov);
            const RunOutput r = c->run(cfg, out);
            commit(*c, cfg, r);
            return kExitOk;
        }
        return kExitConfig;
    });
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace pricer
