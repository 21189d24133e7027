#pragma once

#include "pricer/market.hpp"

namespace pricer {

struct BsSolution {
    double price = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double vega = 0.0;  // dV/dsigma, same for calls and puts
};

// Standard normal CDF via erfc; relative error near machine precision in both tails.
double norm_cdf(double x);
double norm_pdf(double x);

// Closed-form European price. Calls use S N(d1) - K e^{-r tau} N(d2) with
// d1 = (log(S/K) + (r + sigma^2/2) tau) / (sigma sqrt(tau)); puts go through
// put-call parity. Throws DomainError for sigma, tau, S0 or K <= 0.
BsSolution bs_price(const BsInputs& inputs);

// S0 phi(d1) sqrt(tau).
double bs_vega(const BsInputs& inputs);

}  // namespace pricer
