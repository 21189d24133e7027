#pragma once

// Heston European pricing with the Fourier-cosine (COS) expansion.

#include <complex>
#include <utility>

#include "pricer/market.hpp"

namespace pricer {

struct CosConfig {
    int n_terms = 1500;          // N_COS
    double trunc_width = 50.0;   // L_COS
    // Calls with moneyness below this are priced as put + parity.
    double otm_threshold = 0.85;
    // Calls are also rerouted through the put when e^{b} (b the upper end of
    // the log-price interval) exceeds this; the call payoff coefficients grow
    // like e^{b} and cancellation swamps the price otherwise.
    double max_call_coefficient_scale = 1e4;

    void validate() const;
};

// Evaluation context for the characteristic function of log(S_T / S_0).
struct HestonChf {
    double tau = 1.0;
    double rate = 0.0;
    HestonParams params;

    void validate() const;
};

// phi(u) = E[exp(i u log(S_T/S_0))] in the "little trap" form. Written so that
// gamma -> 0 and kappa -> 0 are evaluated without dividing by gamma^2.
// Throws NumericalOverflow if the result is not finite.
std::complex<double> heston_chf(double u, const HestonChf& ctx);

// First two cumulants of log(S_T/S_0).
double heston_cumulant1(const HestonChf& ctx);
double heston_cumulant2(const HestonChf& ctx);

// [a, b] = c1 -/+ L sqrt(|c2|) for the log-return; the fourth cumulant is
// dropped. Throws DomainError if the interval is empty.
std::pair<double, double> cos_truncation_bounds(const HestonChf& ctx, const CosConfig& cfg);

// Direct COS sums with no rerouting or clamping. Exposed for diagnostics.
double cos_raw_call(const EuropeanOption& option, const HestonParams& params, const CosConfig& cfg);
double cos_raw_put(const EuropeanOption& option, const HestonParams& params, const CosConfig& cfg);

// Call price; deep OTM or ill-conditioned calls come from the put via parity.
// Throws DomainError for puts, NumericalOverflow on chf overflow and
// BoundsViolation if the raw sum is negative by more than 1e-10.
PricePoint cos_call_price(const EuropeanOption& option, const HestonParams& params,
                          const CosConfig& cfg = {});

PricePoint cos_put_price(const EuropeanOption& option, const HestonParams& params,
                         const CosConfig& cfg = {});

// Dispatches on option.side.
PricePoint cos_price(const EuropeanOption& option, const HestonParams& params,
                     const CosConfig& cfg = {});

}  // namespace pricer
