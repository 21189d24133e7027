#pragma once

// Contract and model parameter bundles shared by every engine, plus the
// payoff-side helpers (intrinsic value, time value, put-call parity).

#include <string_view>

namespace pricer {

enum class OptionSide { Call, Put };

std::string_view to_string(OptionSide side);

// European option expressed in moneyness m = S0/K. All engines accept any
// strike; the dataset generators fix K = 1 so prices come out as V/K.
struct EuropeanOption {
    double moneyness = 1.0;
    double strike = 1.0;
    double tau = 1.0;   // years to maturity
    double rate = 0.0;  // continuously compounded, per year
    OptionSide side = OptionSide::Call;

    double spot() const { return moneyness * strike; }
    double discount() const;            // e^{-r tau}
    double discounted_strike() const;   // K e^{-r tau}

    // Throws DomainError unless tau > 0, K > 0, m > 0 and r is finite and >= 0.
    void validate() const;

    EuropeanOption with_side(OptionSide s) const {
        EuropeanOption o = *this;
        o.side = s;
        return o;
    }
};

struct BsInputs {
    EuropeanOption option;
    double sigma = 0.2;

    void validate() const;
};

struct HestonParams {
    double kappa = 1.0;   // mean reversion speed
    double nu_bar = 0.04; // long-term variance
    double gamma = 0.3;   // volatility of variance
    double rho = -0.5;
    double nu0 = 0.04;    // initial variance

    void validate() const;
    bool feller_satisfied() const { return 2.0 * kappa * nu_bar >= gamma * gamma; }
};

// A priced contract. `clamp` records how far the raw engine output had to be
// moved to land inside the no-arbitrage band (0 for closed-form prices).
struct PricePoint {
    EuropeanOption option;
    double price = 0.0;
    double clamp = 0.0;

    double scaled_price() const { return price / option.strike; }
};

inline constexpr double kTimeValueTolerance = 1e-12;

// No-arbitrage band [lower, upper] for the option's side:
//   call: [max(S0 - K e^{-r tau}, 0), S0]
//   put:  [max(K e^{-r tau} - S0, 0), K e^{-r tau}]
double lower_price_bound(const EuropeanOption& option);
double upper_price_bound(const EuropeanOption& option);

// max(S0 - K e^{-r tau}, 0) for calls, max(K e^{-r tau} - S0, 0) for puts.
double intrinsic_value(const EuropeanOption& option);

// price - intrinsic. Values less than kTimeValueTolerance below zero are
// clamped to 0; anything lower throws BoundsViolation.
double time_value(const EuropeanOption& option, double price);

// Converts a price of `option.side` into the price of the opposite side via
// C - P = S0 - K e^{-r tau}. Throws BoundsViolation if the result is negative
// by more than kTimeValueTolerance.
double put_call_parity(double price, const EuropeanOption& option);

}  // namespace pricer
