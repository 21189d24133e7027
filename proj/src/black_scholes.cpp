#include "pricer/black_scholes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pricer {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_pdf(double x) {
    constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

BsSolution bs_price(const BsInputs& inputs) {
    inputs.validate();
    const EuropeanOption& opt = inputs.option;
    const double spot = opt.spot();
    const double vol_sqrt_t = inputs.sigma * std::sqrt(opt.tau);

    BsSolution sol;
    sol.d1 = (std::log(opt.moneyness) + (opt.rate + 0.5 * inputs.sigma * inputs.sigma) * opt.tau) /
             vol_sqrt_t;
    sol.d2 = sol.d1 - vol_sqrt_t;
    sol.vega = spot * norm_pdf(sol.d1) * std::sqrt(opt.tau);

    const double call = spot * norm_cdf(sol.d1) - opt.discounted_strike() * norm_cdf(sol.d2);
    // Rounding can push a deep OTM call a hair below zero or a deep ITM call
    // a hair below its intrinsic value; the exact value is inside the band.
    const EuropeanOption as_call = opt.with_side(OptionSide::Call);
    const double call_clamped =
        std::clamp(call, lower_price_bound(as_call), upper_price_bound(as_call));
    if (opt.side == OptionSide::Call) {
        sol.price = call_clamped;
    } else {
        sol.price = std::max(call_clamped - spot + opt.discounted_strike(), 0.0);
    }
    return sol;
}

double bs_vega(const BsInputs& inputs) { return bs_price(inputs).vega; }

}  // namespace pricer
