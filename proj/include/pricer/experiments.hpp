#pragma once

// Solver benchmark, chained Heston -> implied-volatility inference and the
// implied-volatility surface experiment.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pricer/cos_heston.hpp"
#include "pricer/dataset.hpp"
#include "pricer/implied_vol.hpp"
#include "pricer/mlp.hpp"
#include "pricer/training.hpp"

namespace pricer {

struct TimingStats {
    double median_seconds = 0.0;
    std::vector<double> runs;
};

inline constexpr int kTimingWarmups = 3;
inline constexpr int kTimingRuns = 5;

// Monotonic clock; warm-up runs discarded, median of the measured runs.
TimingStats time_median(const std::function<void()>& fn, int warmups = kTimingWarmups, int runs = kTimingRuns);

struct BenchSuite {
    std::vector<IvProblem> problems;
    std::vector<double> true_sigma;
};

// n calls with r = 0, tau = 0.5, K = S0 = 1 and true sigma uniform on
// [sigma_low, sigma_high] (seeded), priced with Black-Scholes.
BenchSuite make_bench_suite(std::size_t n, std::uint64_t seed, double sigma_low = 0.01, double sigma_high = 0.99);

struct BenchRow {
    std::string method;
    std::size_t n = 0;
    double total_seconds = 0.0;
    double per_option_seconds = 0.0;
    std::size_t failures = 0;
    std::size_t diverged = 0;
    double mae = 0.0;  // over converged rows, vs true sigma
    double max_abs_error = 0.0;
    long function_evals = 0;  // solvers only
    bool robust = false;      // zero failures on the suite
};

struct AnnAmortization {
    int batch = 0;
    double per_option_seconds = 0.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::vector<AnnAmortization> ann_batches;  // empty without a model
    std::uint64_t suite_hash = 0;               // FNV-1a of the problem list

    std::string to_csv() const;
    // Same content without the timing columns.
    std::string to_csv_untimed() const;
    std::string amortization_csv() const;
};

// Methods: "brent", "bisection", "newton", "secant", "ann". The ANN needs
// `iv_model` (inputs moneyness, tau, rate, log_time_value).
BenchReport bench_iv_methods(const BenchSuite& suite, const std::vector<std::string>& methods,
                             const MlpModel* iv_model, const SolverConfig& config = {},
                             const std::vector<int>& ann_batches = {1, 4096}, bool timed = true);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_problems(const std::vector<IvProblem>& problems);

// IV-network inputs {m, tau, r, log(time value / K)} for call prices.
// Rows whose time value is not positive are flagged invalid.
struct IvFeatures {
    RowMatrix x;
    std::vector<char> valid;
};
IvFeatures iv_features(const std::vector<EuropeanOption>& options, const std::vector<double>& prices);

struct ChainCase {
    std::string name;
    double tau_low, tau_high;
    double m_low, m_high;
};

ChainCase chain_case1();  // tau in [0.3, 1.1], m in [0.7, 1.3]
ChainCase chain_case2();  // tau in [0.4, 1.0], m in [0.75, 1.25]

// LHS over the Heston input space with tau / m restricted to the case.
Dataset chain_grid(const ChainCase& c, std::size_t n, std::uint64_t seed);

struct ChainResult {
    std::string case_name;
    std::vector<double> predicted;
    std::vector<double> truth;
    MetricsReport metrics;
    std::size_t grid_points = 0;
    std::size_t excluded_below_intrinsic = 0;  // Heston-ANN price below intrinsic
    std::size_t excluded_no_truth = 0;         // COS + Brent had no implied vol

    nlohmann::json to_json() const;
};

// Ground truth: COS price, then Brent. Prediction: Heston-ANN price, then the
// log time value, then the IV-ANN. With use_cos_prices the IV-ANN is fed the
// COS prices instead (perfect first stage).
ChainResult heston_iv_chain(const MlpModel& heston_model, const MlpModel& iv_model, const Dataset& grid,
                            const CosConfig& cos = {}, bool use_cos_prices = false, int threads = 1);

struct SurfaceSpec {
    HestonParams params{1.5, 0.1, 0.3, -0.05, 0.1};
    double rate = 0.02;
    std::vector<double> moneyness;
    std::vector<double> tau;

    // m in [0.7, 1.3], tau in [0.5, 1.0] on an nm x nt grid.
    static SurfaceSpec default_grid(int nm = 13, int nt = 6);
};

struct SurfaceResult {
    SurfaceSpec spec;
    // [tau index][m index]
    std::vector<std::vector<double>> iv_ann;
    std::vector<std::vector<double>> iv_truth;
    double max_abs_deviation = 0.0;
    std::size_t missing = 0;  // grid points without a ground-truth vol

    std::string to_csv() const;
    // For every tau, the truth at the smallest and largest m exceeds the
    // truth at the grid point nearest m = 1.
    bool truth_has_smile() const;
};

// COS prices on the grid; IV-ANN vols versus Brent vols of the same prices.
SurfaceResult iv_surface(const MlpModel& iv_model, const SurfaceSpec& spec, const CosConfig& cos = {});

}  // namespace pricer
