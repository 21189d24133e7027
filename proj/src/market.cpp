#include "pricer/market.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pricer/errors.hpp"

namespace pricer {

std::string_view to_string(OptionSide side) {
    return side == OptionSide::Call ? "call" : "put";
}

double EuropeanOption::discount() const { return std::exp(-rate * tau); }

double EuropeanOption::discounted_strike() const { return strike * discount(); }

void EuropeanOption::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw DomainError("option: tau must be positive and finite");
    }
    if (!(strike > 0.0) || !std::isfinite(strike)) {
        throw DomainError("option: strike must be positive and finite");
    }
    if (!(moneyness > 0.0) || !std::isfinite(moneyness)) {
        throw DomainError("option: moneyness must be positive and finite");
    }
    if (!(rate >= 0.0) || !std::isfinite(rate)) {
        throw DomainError("option: rate must be non-negative and finite");
    }
}

void BsInputs::validate() const {
    option.validate();
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError("black-scholes: sigma must be positive and finite");
    }
}

void HestonParams::validate() const {
    auto bad = [](double v) { return !std::isfinite(v); };
    if (bad(kappa) || bad(nu_bar) || bad(gamma) || bad(rho) || bad(nu0)) {
        throw DomainError("heston: parameters must be finite");
    }
    if (kappa < 0.0) throw DomainError("heston: kappa must be >= 0");
    if (nu_bar < 0.0) throw DomainError("heston: nu_bar must be >= 0");
    if (gamma < 0.0) throw DomainError("heston: gamma must be >= 0");
    if (!(nu0 > 0.0)) throw DomainError("heston: nu0 must be > 0");
    if (rho < -1.0 || rho > 1.0) throw DomainError("heston: rho must lie in [-1, 1]");
}

double lower_price_bound(const EuropeanOption& option) { return intrinsic_value(option); }

double upper_price_bound(const EuropeanOption& option) {
    return option.side == OptionSide::Call ? option.spot() : option.discounted_strike();
}

double intrinsic_value(const EuropeanOption& option) {
    const double forward_gap = option.spot() - option.discounted_strike();
    return option.side == OptionSide::Call ? std::max(forward_gap, 0.0)
                                           : std::max(-forward_gap, 0.0);
}

double time_value(const EuropeanOption& option, double price) {
    const double tv = price - intrinsic_value(option);
    if (tv < 0.0) {
        if (tv >= -kTimeValueTolerance) return 0.0;
        std::ostringstream msg;
        msg << "time_value: price " << price << " is below intrinsic value by " << -tv;
        throw BoundsViolation(msg.str());
    }
    return tv;
}

double put_call_parity(double price, const EuropeanOption& option) {
    const double forward_gap = option.spot() - option.discounted_strike();
    const double other = option.side == OptionSide::Call ? price - forward_gap : price + forward_gap;
    if (other < 0.0) {
        if (other >= -kTimeValueTolerance) return 0.0;
        std::ostringstream msg;
        msg << "put_call_parity: " << to_string(option.side) << " price " << price
            << " implies a negative " << (option.side == OptionSide::Call ? "put" : "call")
            << " price " << other;
        throw BoundsViolation(msg.str());
    }
    return other;
}

}  // namespace pricer
