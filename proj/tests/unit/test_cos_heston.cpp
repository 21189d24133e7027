#include <doctest.h>

#include <cmath>
#include <complex>

#include "pricer/black_scholes.hpp"
#include "pricer/cos_heston.hpp"
#include "pricer/errors.hpp"
#include "pricer/generators.hpp"
#include "pricer/sampling.hpp"

using namespace pricer;

namespace {

EuropeanOption option(double m, double tau, double r, double k = 1.0) {
    EuropeanOption o;
    o.moneyness = m;
    o.tau = tau;
    o.rate = r;
    o.strike = k;
    return o;
}

HestonChf ctx(double tau, double r, const HestonParams& p) {
    HestonChf c;
    c.tau = tau;
    c.rate = r;
    c.params = p;
    return c;
}

const HestonParams kReferenceHeston{1.5768, 0.0398, 0.5751, -0.5711, 0.0175};

}  // namespace

TEST_CASE("characteristic function at zero") {
    for (const auto& p : {kReferenceHeston, HestonParams{0.0, 0.2, 0.4, -0.9, 0.3}}) {
        const auto v = heston_chf(0.0, ctx(0.7, 0.03, p));
        CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(std::abs(v.imag()) < 1e-15);
    }
}

TEST_CASE("degenerate variance gives the Gaussian characteristic function") {
    const double s2 = 0.09, tau = 0.8, r = 0.04;
    const auto c = ctx(tau, r, HestonParams{0.0, s2, 1e-8, 0.0, s2});
    for (double u : {0.3, 1.0, 5.0, 20.0}) {
        const std::complex<double> i(0.0, 1.0);
        const auto bs = std::exp(i * u * (r - 0.5 * s2) * tau - 0.5 * u * u * s2 * tau);
        CHECK(std::abs(heston_chf(u, c) - bs) < 1e-8);
    }
}

TEST_CASE("cumulants agree with finite differences of the log characteristic function") {
    const double h = 1e-3;
    for (const auto& p : {kReferenceHeston, HestonParams{0.5, 0.3, 0.2, -0.3, 0.1}, HestonParams{1e-9, 0.1, 0.4, -0.8, 0.2}}) {
        const auto c = ctx(1.2, 0.05, p);
        const auto lp = std::log(heston_chf(h, c));
        const auto lm = std::log(heston_chf(-h, c));
        const double c1 = (lp.imag() - lm.imag()) / (2.0 * h);
        const double c2 = -(lp.real() + lm.real()) / (h * h);
        CHECK(heston_cumulant1(c) == doctest::Approx(c1).epsilon(1e-6));
        CHECK(heston_cumulant2(c) == doctest::Approx(c2).epsilon(1e-5));
    }
}

TEST_CASE("truncation interval of the degenerate case") {
    const auto c = ctx(1.0, 0.0, HestonParams{0.5, 0.04, 1e-8, 0.0, 0.04});
    const auto [a, b] = cos_truncation_bounds(c, CosConfig{});
    CHECK(a == doctest::Approx(-10.02).epsilon(1e-6));
    CHECK(b == doctest::Approx(9.98).epsilon(1e-6));
}

TEST_CASE("truncation interval is finite over the Heston training ranges") {
    const ParamSpace space = heston_space();
    const RowMatrix x = lhs_sample(10000, space, 11);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        HestonParams p{x(i, 4), x(i, 5), x(i, 6), x(i, 3), x(i, 7)};
        const auto [a, b] = cos_truncation_bounds(ctx(x(i, 1), x(i, 2), p), CosConfig{});
        REQUIRE(std::isfinite(a));
        REQUIRE(std::isfinite(b));
        REQUIRE(a < b);
    }
}

TEST_CASE("published Heston reference price") {
    // S0 = K = 100, T = 1, r = 0. The literature quotes 5.785155450; a
    // 30-digit Lewis-formula integral of the same characteristic function
    // gives 5.7851554343762, which is the value frozen here.
    const auto pp = cos_call_price(option(1.0, 1.0, 0.0, 100.0), kReferenceHeston);
    CHECK(std::abs(pp.price - 5.7851554343762) < 1e-9);
    CHECK(std::abs(pp.price - 5.785155450) < 1e-7);
    CHECK(pp.clamp == 0.0);
}

TEST_CASE("degenerate Heston equals Black-Scholes") {
    BsInputs in;
    in.option = option(1.0, 1.0, 0.0);
    in.sigma = 0.2;
    const double bs = bs_price(in).price;
    const auto pp = cos_call_price(in.option, HestonParams{0.5, 0.04, 1e-8, 0.0, 0.04});
    CHECK(std::abs(pp.price - bs) < 1e-6);
    CHECK(bs == doctest::Approx(0.079656).epsilon(1e-5));
}

TEST_CASE("N = 1500 is converged") {
    CosConfig big;
    big.n_terms = 3000;
    for (double m : {0.6, 0.9, 1.0, 1.2, 1.4}) {
        for (const auto& p : {kReferenceHeston, HestonParams{0.2, 0.45, 0.45, -0.9, 0.05}}) {
            const auto o = option(m, 0.3, 0.05);
            CHECK(std::abs(cos_call_price(o, p).price - cos_call_price(o, p, big).price) < 1e-8);
        }
    }
}

TEST_CASE("call and put are parity-consistent") {
    for (double m : {0.6, 0.85, 1.0, 1.3}) {
        const auto o = option(m, 0.9, 0.04);
        const double c = cos_call_price(o, kReferenceHeston).price;
        const double p = cos_put_price(o.with_side(OptionSide::Put), kReferenceHeston).price;
        CHECK(c - p == doctest::Approx(m - std::exp(-0.04 * 0.9)).epsilon(1e-10));
        CHECK(cos_price(o, kReferenceHeston).price == doctest::Approx(c));
    }
}

TEST_CASE("deep in-the-money put tends to the discounted strike minus spot") {
    const auto o = option(1e-3, 1.0, 0.05).with_side(OptionSide::Put);
    const double p = cos_put_price(o, kReferenceHeston).price;
    CHECK(p == doctest::Approx(std::exp(-0.05) - 1e-3).epsilon(1e-8));
}

TEST_CASE("prices stay inside the no-arbitrage band over the training ranges") {
    const RowMatrix x = lhs_sample(300, heston_space(), 3);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        HestonParams p{x(i, 4), x(i, 5), x(i, 6), x(i, 3), x(i, 7)};
        const auto o = option(x(i, 0), x(i, 1), x(i, 2));
        try {
            const auto pp = cos_call_price(o, p);
            CHECK(pp.price >= lower_price_bound(o));
            CHECK(pp.price <= upper_price_bound(o));
            CHECK(pp.price < 0.67);
        } catch (const BoundsViolation&) {
            // Rejected rows are counted by the generator.
        }
    }
}

TEST_CASE("configuration errors") {
    CosConfig bad;
    bad.n_terms = 4;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    CHECK_THROWS_AS(cos_call_price(option(1.0, 1.0, 0.0).with_side(OptionSide::Put), kReferenceHeston), DomainError);
}
