#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pricer/black_scholes.hpp"
#include "pricer/errors.hpp"

using namespace pricer;

namespace {

BsInputs inputs(double m, double tau, double r, double sigma, OptionSide side = OptionSide::Call) {
    BsInputs in;
    in.option.moneyness = m;
    in.option.tau = tau;
    in.option.rate = r;
    in.option.side = side;
    in.sigma = sigma;
    return in;
}

// Discounted expectation of the call payoff under the lognormal law,
// integrated over the standard normal variable z.
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
    // Piecewise so every patch sees a smooth, moderately varying integrand.
    const double width = 0.5;
    for (double a = z0; a < hi; a += width) sum += GK::integrate(f, a, std::min(a + width, hi), 8, 1e-14);
    return std::exp(-r * tau) * sum;
}

}  // namespace

TEST_CASE("normal distribution") {
    CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-16));
    CHECK(norm_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-14));
    CHECK(norm_cdf(-10.0) == doctest::Approx(7.619853024160527e-24).epsilon(1e-12));
    CHECK(norm_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));
}

TEST_CASE("ATM reference price") {
    const auto s = bs_price(inputs(1.0, 1.0, 0.0, 0.2));
    CHECK(s.price == doctest::Approx(quadrature_call(1.0, 1.0, 1.0, 0.0, 0.2)).epsilon(1e-10));
    CHECK(s.price == doctest::Approx(0.0796556745).epsilon(1e-9));
    // Textbook value S = K = 100, r = 5%, sigma = 20%, one year.
    BsInputs in = inputs(1.0, 1.0, 0.05, 0.2);
    in.option.strike = 100.0;
    CHECK(bs_price(in).price == doctest::Approx(10.450583572185565).epsilon(1e-12));
}

TEST_CASE("matches the quadrature oracle across moneyness and maturity") {
    for (double m : {0.4, 0.7, 1.0, 1.3, 1.6}) {
        for (double tau : {0.2, 0.6, 1.1}) {
            for (double sigma : {0.05, 0.3, 1.0}) {
                const double ref = quadrature_call(m, 1.0, tau, 0.05, sigma);
                CHECK(std::abs(bs_price(inputs(m, tau, 0.05, sigma)).price - ref) < 1e-10);
            }
        }
    }
}

TEST_CASE("small volatility collapses to intrinsic") {
    CHECK(bs_price(inputs(1.6, 0.5, 0.0, 1e-8)).price == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(bs_price(inputs(0.6, 0.5, 0.0, 1e-8)).price == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
}

TEST_CASE("put-call parity holds for the closed form") {
    for (double m : {0.5, 1.0, 1.5}) {
        const auto c = bs_price(inputs(m, 0.8, 0.07, 0.35));
        const auto p = bs_price(inputs(m, 0.8, 0.07, 0.35, OptionSide::Put));
        CHECK(c.price - p.price == doctest::Approx(m - std::exp(-0.07 * 0.8)).epsilon(1e-13));
        CHECK(c.vega == doctest::Approx(p.vega));
    }
}

TEST_CASE("vega against central differences") {
    const double h = 1e-6;
    for (double sigma : {0.05, 0.2, 0.7}) {
        for (double m : {0.8, 1.0, 1.25}) {
            const auto in = inputs(m, 0.75, 0.03, sigma);
            const double fd =
                (bs_price(inputs(m, 0.75, 0.03, sigma + h)).price - bs_price(inputs(m, 0.75, 0.03, sigma - h)).price) /
                (2.0 * h);
            CHECK(bs_vega(in) == doctest::Approx(fd).epsilon(1e-7));
        }
    }
    CHECK(bs_vega(inputs(1.0, 1.0, 0.0, 0.2)) == doctest::Approx(0.396953).epsilon(1e-6));
    CHECK(bs_vega(inputs(1.0, 1.0, 0.0, 200.0)) < 1e-100);
}

TEST_CASE("wide range prices stay within the no-arbitrage band") {
    // The nominal (0, 0.9) output range is exceeded only in the m = 1.6,
    // sigma = 1, tau = 1.1 corner (about 0.917).
    double top = 0.0;
    for (double m : {0.4, 1.0, 1.6}) {
        for (double sigma : {0.01, 1.0}) {
            const double v = bs_price(inputs(m, 1.1, 0.1, sigma)).price;
            CHECK(v >= 0.0);
            CHECK(v < m);
            top = std::max(top, v);
        }
    }
    CHECK(top < 0.92);
}

TEST_CASE("domain errors") {
    CHECK_THROWS_AS(bs_price(inputs(1.0, 1.0, 0.0, 0.0)), DomainError);
    CHECK_THROWS_AS(bs_price(inputs(1.0, 1.0, 0.0, -0.1)), DomainError);
    CHECK_THROWS_AS(bs_price(inputs(1.0, 0.0, 0.0, 0.2)), DomainError);
    CHECK_THROWS_AS(bs_price(inputs(-1.0, 1.0, 0.0, 0.2)), DomainError);
}
