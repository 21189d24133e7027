// End-to-end acceptance run. One PASS / FAIL line per criterion; exit status
// 1 if any criterion fails. Pass criterion numbers to run a subset.
//
// Heavy artifacts (the trained BS, IV and Heston networks) are built once and
// shared by the criteria that need them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pricer/black_scholes.hpp"
#include "pricer/cli.hpp"
#include "pricer/cos_heston.hpp"
#include "pricer/dataset.hpp"
#include "pricer/experiments.hpp"
#include "pricer/generators.hpp"
#include "pricer/implied_vol.hpp"
#include "pricer/mlp.hpp"
#include "pricer/sampling.hpp"
#include "pricer/training.hpp"

using namespace pricer;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

void progress(const std::string& msg) {
    std::fprintf(stderr, "  .. %s\n", msg.c_str());
    std::fflush(stderr);
}

// Discounted lognormal payoff integral, Gauss-Kronrod on unit-normal patches.
double quadrature_call(double s0, double k, double tau, double r, double sigma) {
    const double sd = sigma * std::sqrt(tau);
    const double mu = (r - 0.5 * sigma * sigma) * tau;
    const double z0 = (std::log(k / s0) - mu) / sd;
    auto f = [&](double z) {
        return (s0 * std::exp(mu + sd * z) - k) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    };
    const double hi = std::max(z0, 0.0) + 14.0;
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    double sum = 0.0;
    for (double a = z0; a < hi; a += 0.5) sum += GK::integrate(f, a, std::min(a + 0.5, hi), 8, 1e-14);
    return std::exp(-r * tau) * sum;
}

EuropeanOption call(double m, double tau, double r) {
    EuropeanOption o;
    o.moneyness = m;
    o.tau = tau;
    o.rate = r;
    o.strike = 1.0;
    return o;
}

// ---------------------------------------------------------------------------
// Shared artifacts

constexpr int kThreads = 1;

// The scaled BS-ANN: 4 x 100 ReLU, Adam, batch 1024, 1e-3 -> 1e-5, 200 epochs,
// 100k wide rows.
struct BsArtifacts {
    MlpModel model;
    double train_seconds = 0.0;
};

const BsArtifacts& bs_artifacts() {
    static std::optional<BsArtifacts> cache;
    if (!cache) {
        progress("training the BS-ANN (100k wide rows, 200 epochs)");
        const auto t0 = Clock::now();
        const Dataset data = generate_bs_dataset(100000, BsVariant::Wide, 1, kThreads);
        Architecture arch;
        arch.hidden_layers = 4;
        arch.neurons = 100;
        TrainConfig cfg;
        cfg.epochs = 200;
        cfg.batch_size = 1024;
        cfg.schedule = LrSchedule::exponential(1e-3, 1e-5, 0);
        cfg.validation_fraction = 0.0;
        cfg.seed = 2;
        BsArtifacts a;
        a.model = train(arch.build(4, 1, 3), data, nullptr, cfg).model;
        a.train_seconds = seconds_since(t0);
        cache = std::move(a);
    }
    return *cache;
}

constexpr std::size_t kIvRows = 200000;
constexpr int kIvEpochs = 200;

TrainConfig iv_train_config() {
    TrainConfig cfg;
    cfg.epochs = kIvEpochs;
    cfg.batch_size = 256;
    cfg.schedule = LrSchedule::exponential(1e-3, 1e-5, 0);
    cfg.validation_fraction = 0.0;
    cfg.seed = 12;
    return cfg;
}

Architecture small_arch() {
    Architecture arch;
    arch.hidden_layers = 4;
    arch.neurons = 100;
    return arch;
}

// IV-ANN on {m, tau, r, log time value} or, unscaled, on {m, tau, r, V/K}.
const MlpModel& iv_model(bool unscaled) {
    static std::map<bool, MlpModel> cache;
    auto it = cache.find(unscaled);
    if (it == cache.end()) {
        progress(std::string("training the IV-ANN on ") + (unscaled ? "V/K" : "log time value"));
        IvGenOptions opt;
        opt.unscaled = unscaled;
        const Dataset data = generate_iv_dataset(kIvRows, 11, opt, iv_space(), kThreads);
        MlpModel m = train(small_arch().build(4, 1, 13), data, nullptr, iv_train_config()).model;
        it = cache.emplace(unscaled, std::move(m)).first;
    }
    return it->second;
}

const MlpModel& heston_model() {
    static std::optional<MlpModel> cache;
    if (!cache) {
        progress("generating Heston data and training the Heston-ANN");
        const Dataset data = generate_heston_dataset(100000, 21, CosConfig{}, kThreads);
        TrainConfig cfg = iv_train_config();
        cfg.seed = 22;
        cache = train(small_arch().build(8, 1, 23), data, nullptr, cfg).model;
    }
    return *cache;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome bs_oracle() {
    const RowMatrix x = lhs_sample(1000, bs_space(BsVariant::Wide), 101);
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        BsInputs in;
        in.option = call(x(i, 0), x(i, 1), x(i, 2));
        in.sigma = x(i, 3);
        const double ref = quadrature_call(x(i, 0), 1.0, x(i, 1), x(i, 2), x(i, 3));
        worst = std::max(worst, std::abs(bs_price(in).price - ref));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 5.0,
            fmt("max |bs - quadrature| = %.2e over 1000 LHS points (gate 1e-9), %.2f s (gate 5 s)", worst, secs)};
}

Outcome cos_degenerate() {
    const ParamSpace space = heston_space().with_range(col::kNu0, 0.01, 0.25);
    const RowMatrix x = lhs_sample(500, space, 102);
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double nu = x(i, 7);
        const HestonParams p{x(i, 4), nu, 1e-8, x(i, 3), nu};
        BsInputs in;
        in.option = call(x(i, 0), x(i, 1), x(i, 2));
        in.sigma = std::sqrt(nu);
        worst = std::max(worst, std::abs(cos_call_price(in.option, p).price - bs_price(in).price));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-6 && secs < 10.0,
            fmt("max |cos - bs| = %.2e over 500 points (gate 1e-6), %.2f s (gate 10 s)", worst, secs)};
}

Outcome cos_convergence() {
    const RowMatrix x = lhs_sample(100, heston_space(), 103);
    CosConfig big;
    big.n_terms = 3000;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const HestonParams p{x(i, 4), x(i, 5), x(i, 6), x(i, 3), x(i, 7)};
        const EuropeanOption o = call(x(i, 0), x(i, 1), x(i, 2));
        worst = std::max(worst, std::abs(cos_call_price(o, p).price - cos_call_price(o, p, big).price));
    }
    return {worst < 1e-8, fmt("max |V(1500) - V(3000)| = %.2e over 100 Heston-range points (gate 1e-8)", worst)};
}

Outcome iv_round_trip() {
    const BenchSuite suite = make_bench_suite(20000, 104);
    const auto t0 = Clock::now();
    const BenchReport rep = bench_iv_methods(suite, {"brent", "bisection", "newton", "secant"}, nullptr, {}, {}, false);
    const double secs = seconds_since(t0);
    bool ok = secs < 30.0;
    std::ostringstream d;
    for (const auto& r : rep.rows) {
        d << r.method << " failures " << r.failures << " max err " << fmt("%.1e", r.max_abs_error) << "; ";
        if (r.method == "brent" || r.method == "bisection") ok = ok && r.failures == 0 && r.max_abs_error <= 1e-7;
    }
    d << fmt("%.2f s (gate 30 s)", secs);
    return {ok, d.str()};
}

RowMatrix random_rows(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    RowMatrix x(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
    }
    return x;
}

Outcome gradient_check() {
    const auto t0 = Clock::now();
    Rng rng(105);
    const std::vector<Activation> smooth{Activation::Tanh, Activation::Sigmoid, Activation::ELU, Activation::Identity};
    double worst = 0.0;
    for (int net = 0; net < 20; ++net) {
        const Eigen::Index in = 1 + static_cast<Eigen::Index>(rng.index(5));
        const Eigen::Index out = 1 + static_cast<Eigen::Index>(rng.index(2));
        std::vector<Eigen::Index> sizes{in};
        std::vector<Activation> acts;
        const int hidden = 1 + static_cast<int>(rng.index(3));
        for (int h = 0; h < hidden; ++h) {
            sizes.push_back(2 + static_cast<Eigen::Index>(rng.index(8)));
            acts.push_back(smooth[rng.index(smooth.size())]);
        }
        sizes.push_back(out);
        acts.push_back(Activation::Identity);
        MlpModel m = init_mlp(sizes, acts, InitScheme::GlorotUniform, rng.next_u64());
        for (auto& l : m.layers) {
            for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias[j] = rng.uniform(-0.1, 0.1);
        }
        const RowMatrix x = random_rows(8, in, rng);
        const RowMatrix y = random_rows(8, out, rng);

        const Gradients g = backprop(m, x, y);
        const double h = 1e-6;
        double diff = 0.0, norm_bp = 0.0, norm_fd = 0.0;
        auto probe = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double up = loss_mse(forward_batch(m, x), y);
            param = keep - h;
            const double down = loss_mse(forward_batch(m, x), y);
            param = keep;
            const double fd = (up - down) / (2.0 * h);
            diff += (fd - analytic) * (fd - analytic);
            norm_bp += analytic * analytic;
            norm_fd += fd * fd;
        };
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            for (Eigen::Index i = 0; i < m.layers[l].weights.size(); ++i) {
                probe(m.layers[l].weights.data()[i], g.weights[l].data()[i]);
            }
            for (Eigen::Index i = 0; i < m.layers[l].bias.size(); ++i) probe(m.layers[l].bias[i], g.bias[l][i]);
        }
        worst = std::max(worst, std::sqrt(diff) / (std::sqrt(norm_bp) + std::sqrt(norm_fd)));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-5 && secs < 10.0,
            fmt("max relative gradient error %.2e over 20 networks (gate 1e-5), %.2f s (gate 10 s)", worst, secs)};
}

Outcome bs_training() {
    const BsArtifacts& a = bs_artifacts();
    const Dataset test = generate_bs_dataset(100000, BsVariant::Wide, 106, kThreads);
    const double mse = evaluate(a.model, test).mse;
    return {mse <= 1e-6 && a.train_seconds < 1800.0,
            fmt("wide test MSE %.3e (gate 1e-6), trained in %.0f s (target 1800 s)", mse, a.train_seconds)};
}

Outcome gradient_squash() {
    const Dataset log_test = generate_iv_dataset(20000, 107, IvGenOptions{}, iv_space(), kThreads);
    IvGenOptions raw;
    raw.unscaled = true;
    const Dataset raw_test = generate_iv_dataset(20000, 107, raw, iv_space(), kThreads);
    const double mse_log = evaluate(iv_model(false), log_test).mse;
    const double mse_raw = evaluate(iv_model(true), raw_test).mse;
    return {mse_raw >= 10.0 * mse_log,
            fmt("sigma test MSE %.3e with log time value, %.3e with V/K, ratio %.1f (gate >= 10)", mse_log, mse_raw,
                mse_raw / mse_log)};
}

Outcome size_study() {
    progress("data-size study (4 factors x 3 seeds)");
    const Dataset pool = generate_bs_dataset(kSizeStudyBase, BsVariant::Wide, 108, kThreads);
    const Dataset test = generate_bs_dataset(20000, BsVariant::Wide, 109, kThreads);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.validation_fraction = 0.0;
    cfg.seed = 110;
    const SizeStudyResult r =
        data_size_study(pool, test, {0.125, 0.25, 0.5, 1.0}, 3, small_arch(), cfg, kSizeStudyBase, kThreads);
    std::ostringstream d;
    d << "mean MSE";
    for (const auto& row : r.rows) d << fmt(" %.2e", row.mse_mean);
    d << fmt("; std %.2e -> %.2e; pooled std %.2e", r.rows.front().mse_std, r.rows.back().mse_std, r.pooled_mse_std);
    const bool mono = r.monotone_within_pooled_std();
    const bool shrink = r.variance_shrinks();
    d << (mono ? "; non-increasing" : "; NOT non-increasing") << (shrink ? ", std shrinks" : ", std does NOT shrink");
    return {mono && shrink, d.str()};
}

Outcome narrow_vs_wide() {
    const MlpModel& m = bs_artifacts().model;
    const Dataset wide = generate_bs_dataset(100000, BsVariant::Wide, 111, kThreads);
    const Dataset narrow = generate_bs_dataset(100000, BsVariant::Narrow, 112, kThreads);
    const double w = evaluate(m, wide).mse;
    const double n = evaluate(m, narrow).mse;
    return {n <= w, fmt("wide-trained net: narrow test MSE %.3e vs wide test MSE %.3e (gate narrow <= wide)", n, w)};
}

Outcome heston_chain() {
    const MlpModel& hm = heston_model();
    const MlpModel& im = iv_model(false);
    progress("chained inference on two 10k grids");
    const ChainResult c1 = heston_iv_chain(hm, im, chain_grid(chain_case1(), 10000, 113), CosConfig{}, false, kThreads);
    const ChainResult c2 = heston_iv_chain(hm, im, chain_grid(chain_case2(), 10000, 114), CosConfig{}, false, kThreads);
    const bool complete = c1.grid_points == 10000 && c2.grid_points == 10000 && c1.metrics.n > 0 && c2.metrics.n > 0;
    const bool ordered = c2.metrics.rmse <= c1.metrics.rmse;
    return {complete && ordered,
            fmt("case 1 RMSE %.3e (%zu scored, %zu + %zu excluded), case 2 RMSE %.3e (%zu scored, %zu + %zu "
                "excluded); gate case 2 <= case 1",
                c1.metrics.rmse, c1.metrics.n, c1.excluded_below_intrinsic, c1.excluded_no_truth, c2.metrics.rmse,
                c2.metrics.n, c2.excluded_below_intrinsic, c2.excluded_no_truth)};
}

Outcome smile_surface() {
    const SurfaceResult s = iv_surface(iv_model(false), SurfaceSpec::default_grid());
    const bool smile = s.truth_has_smile();
    return {smile && s.missing == 0 && s.max_abs_deviation <= 5e-3,
            fmt("ground truth %s a smile, %zu missing points, IV-ANN max deviation %.2e (gate 5e-3)",
                smile ? "shows" : "does NOT show", s.missing, s.max_abs_deviation)};
}

Outcome benchmark() {
    progress("five-method benchmark");
    const BenchSuite suite = make_bench_suite(20000, 115);
    const BenchReport rep = bench_iv_methods(suite, {"brent", "bisection", "newton", "secant", "ann"},
                                             &iv_model(false), {}, {1, 4096}, true);
    std::fprintf(stderr, "%s", rep.to_csv().c_str());
    long brent = -1, bisection = -1;
    for (const auto& r : rep.rows) {
        if (r.method == "brent") brent = r.function_evals;
        if (r.method == "bisection") bisection = r.function_evals;
    }
    double one = NAN, big = NAN;
    for (const auto& a : rep.ann_batches) {
        if (a.batch == 1) one = a.per_option_seconds;
        if (a.batch == 4096) big = a.per_option_seconds;
    }
    const bool ok = rep.rows.size() == 5 && big <= 0.5 * one && brent >= 0 && brent < bisection;
    return {ok, fmt("%zu methods; ANN per option %.2e s at batch 1, %.2e s at 4096 (gate <= half); "
                    "evals brent %ld vs bisection %ld",
                    rep.rows.size(), one, big, brent, bisection)};
}

Outcome cli_determinism() {
    const fs::path d = fs::temp_directory_path() / "pricer_acceptance_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    auto p = [&](const char* name) { return (d / name).string(); };
    const std::vector<std::vector<std::string>> runs{
        {"generate", "--model", "bs", "--n", "600", "--seed", "1", "--out", p("bs.csv")},
        {"generate", "--model", "iv", "--n", "600", "--seed", "2", "--out", p("iv.csv")},
        {"generate", "--model", "heston", "--n", "200", "--seed", "3", "--out", p("h.csv")},
        {"split", "--data", p("bs.csv"), "--train", "0.8", "--validation", "0.1", "--test", "0.1", "--seed", "4",
         "--out-prefix", p("bs")},
        {"train", "--data", p("bs_train.csv"), "--val", p("bs_validation.csv"), "--neurons", "16", "--epochs", "3",
         "--seed", "5", "--out", p("bs_model.json")},
        {"eval", "--model", p("bs_model.json"), "--data", p("bs_test.csv"), "--out", p("bs_eval.json")},
        {"train", "--data", p("iv.csv"), "--neurons", "16", "--epochs", "3", "--seed", "6", "--out",
         p("iv_model.json")},
        {"train", "--data", p("h.csv"), "--neurons", "16", "--epochs", "3", "--seed", "7", "--out", p("h_model.json")},
        {"bench-iv", "--n", "300", "--methods", "brent,bisection,newton,secant,ann", "--model", p("iv_model.json"),
         "--ann-batches", "1,64", "--out", p("bench.csv")},
        {"size-study", "--data", p("bs_train.csv"), "--test", p("bs_test.csv"), "--factors", "0.5,1", "--repeats", "2",
         "--base", "200", "--neurons", "8", "--epochs", "2", "--seed", "8", "--out", p("size.csv")},
        {"lr-range", "--data", p("bs.csv"), "--neurons", "8", "--steps", "20", "--batch-size", "64", "--seed", "9",
         "--out", p("lr.csv")},
        {"search", "--data", p("bs.csv"), "--trials", "2", "--k", "2", "--epochs", "1", "--include-reference", "false",
         "--seed", "10", "--out", p("search.json")},
        {"surface", "--model", p("iv_model.json"), "--nm", "5", "--nt", "2", "--out", p("surface.csv")},
        {"chain", "--heston-model", p("h_model.json"), "--iv-model", p("iv_model.json"), "--case", "both", "--n",
         "200", "--seed", "11", "--out", p("chain.json")},
    };
    std::set<std::string> commands;
    for (const auto& args : runs) {
        std::ostringstream out, err;
        if (const int code = run_cli(args, out, err); code != kExitOk) {
            return {false, fmt("`%s` exited %d: %s", args[0].c_str(), code, err.str().c_str())};
        }
        commands.insert(args[0]);
    }
    int manifests = 0, verified = 0;
    std::string bad;
    for (const auto& entry : fs::directory_iterator(d)) {
        const std::string name = entry.path().filename().string();
        if (name.size() < 14 || name.substr(name.size() - 14) != ".manifest.json") continue;
        ++manifests;
        std::ostringstream out, err;
        const int code = run_cli({"replay", "--manifest", entry.path().string(), "--verify"}, out, err);
        if (code == kExitOk && out.str().find("MISMATCH") == std::string::npos) {
            ++verified;
        } else {
            bad += " " + name;
        }
    }
    const bool ok = manifests == static_cast<int>(runs.size()) && verified == manifests && commands.size() == 10;
    return {ok, fmt("%zu commands, %d manifests, %d replayed with identical hashes%s%s", commands.size(), manifests,
                    verified, bad.empty() ? "" : "; mismatched:", bad.c_str())};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "BS oracle equivalence", bs_oracle},
        {2, "COS degenerate limit", cos_degenerate},
        {3, "COS self-convergence", cos_convergence},
        {4, "IV round trip", iv_round_trip},
        {5, "gradient check", gradient_check},
        {6, "scaled BS-ANN training", bs_training},
        {7, "gradient-squash efficacy", gradient_squash},
        {8, "data-size study", size_study},
        {9, "narrow vs wide test behavior", narrow_vs_wide},
        {10, "chained Heston -> IV", heston_chain},
        {11, "smile surface", smile_surface},
        {12, "benchmark harness", benchmark},
        {13, "CLI determinism", cli_determinism},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
