#include "pricer/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "pricer/errors.hpp"
#include "pricer/generators.hpp"
#include "pricer/parallel.hpp"

namespace pricer {

TimingStats time_median(const std::function<void()>& fn, int warmups, int runs) {
    if (runs < 1) throw DomainError("time_median: runs must be >= 1");
    for (int i = 0; i < warmups; ++i) fn();
    TimingStats s;
    for (int i = 0; i < runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        s.runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::vector<double> sorted = s.runs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    s.median_seconds = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    return s;
}

BenchSuite make_bench_suite(std::size_t n, std::uint64_t seed, double sigma_low, double sigma_high) {
    if (!(0.0 < sigma_low && sigma_low < sigma_high)) throw DomainError("bench suite: need 0 < sigma_low < sigma_high");
    BenchSuite suite;
    Rng rng(seed);
    EuropeanOption o;
    o.moneyness = 1.0;
    o.strike = 1.0;
    o.tau = 0.5;
    o.rate = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sigma = rng.uniform(sigma_low, sigma_high);
        suite.true_sigma.push_back(sigma);
        suite.problems.push_back({o, bs_price_extended(o, sigma)});
    }
    return suite;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_problems(const std::vector<IvProblem>& problems) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : problems) {
        const double v[5] = {p.option.moneyness, p.option.strike, p.option.tau, p.option.rate, p.target_price};
        const int side = p.option.side == OptionSide::Call ? 0 : 1;
        h = fnv1a64(v, sizeof(v), h);
        h = fnv1a64(&side, sizeof(side), h);
    }
    return h;
}

IvFeatures iv_features(const std::vector<EuropeanOption>& options, const std::vector<double>& prices) {
    if (options.size() != prices.size()) throw ShapeMismatch("iv_features: option and price counts differ");
    IvFeatures f;
    f.x.resize(static_cast<Eigen::Index>(options.size()), 4);
    f.valid.assign(options.size(), 1);
    for (std::size_t i = 0; i < options.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const EuropeanOption& o = options[i];
        const double tv = prices[i] - intrinsic_value(o);
        f.x(r, 0) = o.moneyness;
        f.x(r, 1) = o.tau;
        f.x(r, 2) = o.rate;
        if (tv > 0.0 && std::isfinite(tv)) {
            f.x(r, 3) = std::log(tv / o.strike);
        } else {
            f.x(r, 3) = 0.0;
            f.valid[i] = 0;
        }
    }
    return f;
}

namespace {

void fill_errors(BenchRow& row, const std::vector<double>& estimate, const std::vector<char>& ok,
                 const std::vector<double>& truth) {
    double abs_sum = 0.0;
    std::size_t n_ok = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!ok[i]) {
            ++row.failures;
            continue;
        }
        const double e = std::abs(estimate[i] - truth[i]);
        abs_sum += e;
        row.max_abs_error = std::max(row.max_abs_error, e);
        ++n_ok;
    }
    row.mae = n_ok ? abs_sum / static_cast<double>(n_ok) : 0.0;
    row.robust = row.failures == 0;
}

std::vector<double> ann_predict(const MlpModel& model, const std::vector<EuropeanOption>& options,
                                const std::vector<double>& prices, std::vector<char>& ok) {
    const IvFeatures f = iv_features(options, prices);
    const RowMatrix y = forward_batch(model, f.x);
    std::vector<double> out(options.size());
    ok = f.valid;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = y(static_cast<Eigen::Index>(i), 0);
        if (!std::isfinite(out[i])) ok[i] = 0;
    }
    return out;
}

}  // namespace

BenchReport bench_iv_methods(const BenchSuite& suite, const std::vector<std::string>& methods,
                             const MlpModel* iv_model, const SolverConfig& config,
                             const std::vector<int>& ann_batches, bool timed) {
    BenchReport rep;
    rep.suite_hash = hash_problems(suite.problems);
    const std::size_t n = suite.problems.size();
    std::vector<EuropeanOption> options;
    std::vector<double> prices;
    for (const auto& p : suite.problems) {
        options.push_back(p.option);
        prices.push_back(p.target_price);
    }

    for (const std::string& name : methods) {
        BenchRow row;
        row.method = name;
        row.n = n;
        std::vector<double> estimate(n);
        std::vector<char> ok(n, 0);
        std::function<void()> run;
        if (name == "ann") {
            if (iv_model == nullptr) throw DomainError("bench: method 'ann' needs an IV model");
            run = [&] { estimate = ann_predict(*iv_model, options, prices, ok); };
        } else {
            const IvMethod method = parse_iv_method(name);
            run = [&, method] {
                const auto results = solve_iv_batch(suite.problems, method, config, 1);
                row.function_evals = 0;
                row.diverged = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    estimate[i] = results[i].sigma_star;
                    ok[i] = results[i].converged();
                    row.function_evals += results[i].function_evals;
                    row.diverged += results[i].diverged ? 1 : 0;
                }
            };
        }
        if (timed) {
            row.total_seconds = time_median(run).median_seconds;
        } else {
            run();
        }
        row.per_option_seconds = n ? row.total_seconds / static_cast<double>(n) : 0.0;
        fill_errors(row, estimate, ok, suite.true_sigma);
        rep.rows.push_back(row);
    }

    if (iv_model != nullptr && timed && !ann_batches.empty() && n > 0) {
        const int largest = *std::max_element(ann_batches.begin(), ann_batches.end());
        const std::size_t m = static_cast<std::size_t>(largest) * 2;
        std::vector<EuropeanOption> o2;
        std::vector<double> p2;
        for (std::size_t i = 0; i < m; ++i) {
            o2.push_back(options[i % n]);
            p2.push_back(prices[i % n]);
        }
        const RowMatrix x = iv_features(o2, p2).x;
        for (int b : ann_batches) {
            if (b < 1) throw DomainError("bench: batch sizes must be >= 1");
            const auto stats = time_median([&] {
                for (std::size_t start = 0; start < m; start += static_cast<std::size_t>(b)) {
                    const auto rows = static_cast<Eigen::Index>(std::min<std::size_t>(b, m - start));
                    const RowMatrix block = x.middleRows(static_cast<Eigen::Index>(start), rows);
                    const RowMatrix y = forward_batch(*iv_model, block);
                    if (!std::isfinite(y(0, 0))) throw NumericalOverflow("bench: non-finite ANN output");
                }
            });
            rep.ann_batches.push_back({b, stats.median_seconds / static_cast<double>(m)});
        }
    }
    return rep;
}

std::string BenchReport::to_csv() const {
    std::ostringstream out;
    out.precision(10);
    out << "method,n,total_seconds,per_option_seconds,failures,diverged,mae,max_abs_error,function_evals,robust\n";
    for (const auto& r : rows) {
        out << r.method << ',' << r.n << ',' << r.total_seconds << ',' << r.per_option_seconds << ',' << r.failures
            << ',' << r.diverged << ',' << r.mae << ',' << r.max_abs_error << ',' << r.function_evals << ','
            << (r.robust ? "yes" : "no") << '\n';
    }
    return out.str();
}

std::string BenchReport::to_csv_untimed() const {
    std::ostringstream out;
    out.precision(10);
    out << "method,n,failures,diverged,mae,max_abs_error,function_evals,robust\n";
    for (const auto& r : rows) {
        out << r.method << ',' << r.n << ',' << r.failures << ',' << r.diverged << ',' << r.mae << ','
            << r.max_abs_error << ',' << r.function_evals << ',' << (r.robust ? "yes" : "no") << '\n';
    }
    return out.str();
}

std::string BenchReport::amortization_csv() const {
    std::ostringstream out;
    out.precision(10);
    out << "batch,per_option_seconds\n";
    for (const auto& a : ann_batches) out << a.batch << ',' << a.per_option_seconds << '\n';
    return out.str();
}

ChainCase chain_case1() { return {"case1", 0.3, 1.1, 0.7, 1.3}; }
ChainCase chain_case2() { return {"case2", 0.4, 1.0, 0.75, 1.25}; }

Dataset chain_grid(const ChainCase& c, std::size_t n, std::uint64_t seed) {
    const ParamSpace space =
        heston_space().with_range(col::kTau, c.tau_low, c.tau_high).with_range(col::kMoneyness, c.m_low, c.m_high);
    std::vector<Column> cols;
    for (const auto& d : space.dims) cols.push_back({d.name, ColumnRole::Input, d.low, d.high});
    Dataset ds(std::move(cols), lhs_sample(n, space, seed));
    ds.provenance = {{"generator", "chain-grid"}, {"case", c.name}, {"seed", seed}};
    return ds;
}

nlohmann::json ChainResult::to_json() const {
    return {{"case", case_name},
            {"grid_points", grid_points},
            {"evaluated", metrics.n},
            {"excluded_below_intrinsic", excluded_below_intrinsic},
            {"excluded_no_truth", excluded_no_truth},
            {"metrics", metrics.to_json()}};
}

ChainResult heston_iv_chain(const MlpModel& heston_model, const MlpModel& iv_model, const Dataset& grid,
                            const CosConfig& cos, bool use_cos_prices, int threads) {
    const std::size_t n = static_cast<std::size_t>(grid.rows());
    if (n == 0) throw EmptyInput("heston_iv_chain: empty grid");
    std::vector<EuropeanOption> options(n);
    std::vector<double> cos_price(n), truth(n);
    std::vector<char> has_truth(n, 0);
    parallel_for(n, threads, [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        options[i] = option_from_row(grid, r);
        cos_price[i] = cos_call_price(options[i], heston_from_row(grid, r), cos).price;
        const IvResult iv = brent_iv({options[i], cos_price[i]});
        has_truth[i] = iv.converged();
        truth[i] = iv.sigma_star;
    });

    std::vector<double> first_stage = cos_price;
    if (!use_cos_prices) {
        RowMatrix x(grid.rows(), heston_model.input_size());
        const auto names = heston_space().dims;
        if (static_cast<Eigen::Index>(names.size()) != heston_model.input_size()) {
            throw ShapeMismatch("heston_iv_chain: Heston model input width does not match the Heston inputs");
        }
        for (std::size_t c = 0; c < names.size(); ++c) {
            x.col(static_cast<Eigen::Index>(c)) = grid.data().col(grid.column_index(names[c].name));
        }
        const RowMatrix p = forward_batch(heston_model, x);
        for (std::size_t i = 0; i < n; ++i) first_stage[i] = p(static_cast<Eigen::Index>(i), 0);
    }

    std::vector<char> ok;
    const std::vector<double> sigma = ann_predict(iv_model, options, first_stage, ok);

    ChainResult res;
    res.grid_points = n;
    std::vector<double> pred_used, truth_used;
    for (std::size_t i = 0; i < n; ++i) {
        if (!has_truth[i]) {
            ++res.excluded_no_truth;
            continue;
        }
        if (!ok[i]) {
            ++res.excluded_below_intrinsic;
            continue;
        }
        pred_used.push_back(sigma[i]);
        truth_used.push_back(truth[i]);
    }
    res.predicted = pred_used;
    res.truth = truth_used;
    res.metrics = compute_metrics(pred_used, truth_used);
    return res;
}

SurfaceSpec SurfaceSpec::default_grid(int nm, int nt) {
    if (nm < 1 || nt < 1) throw DomainError("surface grid: need at least one point per axis");
    SurfaceSpec s;
    for (int i = 0; i < nm; ++i) s.moneyness.push_back(nm == 1 ? 1.0 : 0.7 + 0.6 * i / (nm - 1));
    for (int i = 0; i < nt; ++i) s.tau.push_back(nt == 1 ? 0.75 : 0.5 + 0.5 * i / (nt - 1));
    return s;
}

SurfaceResult iv_surface(const MlpModel& iv_model, const SurfaceSpec& spec, const CosConfig& cos) {
    if (spec.moneyness.empty() || spec.tau.empty()) throw EmptyInput("iv_surface: empty grid");
    SurfaceResult res;
    res.spec = spec;
    std::vector<EuropeanOption> options;
    std::vector<double> prices, truth;
    std::vector<char> has_truth;
    for (double tau : spec.tau) {
        for (double m : spec.moneyness) {
            EuropeanOption o;
            o.moneyness = m;
            o.tau = tau;
            o.rate = spec.rate;
            const double p = cos_call_price(o, spec.params, cos).price;
            const IvResult iv = brent_iv({o, p});
            options.push_back(o);
            prices.push_back(p);
            truth.push_back(iv.sigma_star);
            has_truth.push_back(iv.converged());
        }
    }
    std::vector<char> ok;
    const std::vector<double> ann = ann_predict(iv_model, options, prices, ok);
    const std::size_t nm = spec.moneyness.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t t = 0; t < spec.tau.size(); ++t) {
        std::vector<double> row_ann, row_truth;
        for (std::size_t j = 0; j < nm; ++j) {
            const std::size_t i = t * nm + j;
            row_ann.push_back(ok[i] ? ann[i] : nan);
            row_truth.push_back(has_truth[i] ? truth[i] : nan);
            if (!has_truth[i] || !ok[i]) {
                ++res.missing;
                continue;
            }
            res.max_abs_deviation = std::max(res.max_abs_deviation, std::abs(ann[i] - truth[i]));
        }
        res.iv_ann.push_back(std::move(row_ann));
        res.iv_truth.push_back(std::move(row_truth));
    }
    return res;
}

std::string SurfaceResult::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "tau,moneyness,iv_ann,iv_brent,abs_diff\n";
    for (std::size_t t = 0; t < spec.tau.size(); ++t) {
        for (std::size_t j = 0; j < spec.moneyness.size(); ++j) {
            const double a = iv_ann[t][j];
            const double b = iv_truth[t][j];
            out << spec.tau[t] << ',' << spec.moneyness[j] << ',';
            if (std::isfinite(a)) out << a;
            out << ',';
            if (std::isfinite(b)) out << b;
            out << ',';
            if (std::isfinite(a) && std::isfinite(b)) out << std::abs(a - b);
            out << '\n';
        }
    }
    return out.str();
}

bool SurfaceResult::truth_has_smile() const {
    const auto& m = spec.moneyness;
    if (m.size() < 3) return false;
    std::size_t mid = 0;
    for (std::size_t j = 1; j < m.size(); ++j) {
        if (std::abs(m[j] - 1.0) < std::abs(m[mid] - 1.0)) mid = j;
    }
    if (mid == 0 || mid + 1 == m.size()) return false;
    for (const auto& row : iv_truth) {
        if (!(row.front() > row[mid] && row.back() > row[mid])) return false;
    }
    return true;
}

}  // namespace pricer
