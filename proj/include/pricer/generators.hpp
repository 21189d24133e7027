#pragma once

// Training-data generators for the three learning tasks: Black-Scholes
// prices, implied volatilities and Heston prices.

#include <cstdint>
#include <string_view>

#include "pricer/cos_heston.hpp"
#include "pricer/dataset.hpp"
#include "pricer/market.hpp"
#include "pricer/sampling.hpp"

namespace pricer {

namespace col {
inline constexpr const char* kMoneyness = "moneyness";
inline constexpr const char* kTau = "tau";
inline constexpr const char* kRate = "rate";
inline constexpr const char* kSigma = "sigma";
inline constexpr const char* kPrice = "price";  // V/K
inline constexpr const char* kLogTimeValue = "log_time_value";  // log(time value / K)
inline constexpr const char* kRho = "rho";
inline constexpr const char* kKappa = "kappa";
inline constexpr const char* kNuBar = "nu_bar";
inline constexpr const char* kGamma = "gamma";
inline constexpr const char* kNu0 = "nu0";
}  // namespace col

inline constexpr const char* kLogTimeValueTransform = "log-time-value";

enum class BsVariant { Wide, Narrow };

std::string_view to_string(BsVariant v);
BsVariant parse_bs_variant(std::string_view name);  // throws DomainError

ParamSpace bs_space(BsVariant variant);
// m, tau, r, sigma for the implied-volatility task.
ParamSpace iv_space();
// m, tau, r, rho, kappa, nu_bar, gamma, nu0.
ParamSpace heston_space();

// Inputs {moneyness, tau, rate, sigma}, output price = V/K of a call, K = 1.
Dataset generate_bs_dataset(std::size_t n, const ParamSpace& space, std::uint64_t seed,
                            int threads = 1);
Dataset generate_bs_dataset(std::size_t n, BsVariant variant, std::uint64_t seed, int threads = 1);

struct IvGenOptions {
    // Emit {m, tau, r, V/K} instead of {m, tau, r, log(time value / K)}.
    bool unscaled = false;
    // Rows whose time value falls below this are dropped.
    double min_time_value = 1e-7;
};

// Forward generation: sample sigma, price, drop tiny time values, emit sigma
// as the output. Exactly n rows are returned.
Dataset generate_iv_dataset(std::size_t n, std::uint64_t seed, const IvGenOptions& options = {},
                            const ParamSpace& space = iv_space(), int threads = 1);

// Inputs per heston_space(), output price = V/K of a call from COS. Rows the
// engine could not price inside the no-arbitrage band are rejected and their
// count stored in the provenance. Throws NumericalOverflow naming the row.
Dataset generate_heston_dataset(std::size_t n, std::uint64_t seed, const CosConfig& cos = {},
                                int threads = 1, const ParamSpace& space = heston_space());

// IV-network feature for a call price: log(time value / K). Throws
// BoundsViolation when the time value is not positive.
double log_time_value(const EuropeanOption& option, double price);

// Builds the contract / model parameters of one dataset row.
EuropeanOption option_from_row(const Dataset& ds, Eigen::Index row);
HestonParams heston_from_row(const Dataset& ds, Eigen::Index row);

}  // namespace pricer
