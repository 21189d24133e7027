#include <doctest.h>

#include <cmath>

#include "pricer/errors.hpp"
#include "pricer/market.hpp"

using namespace pricer;

namespace {
EuropeanOption call(double m, double r, double tau) {
    EuropeanOption o;
    o.moneyness = m;
    o.rate = r;
    o.tau = tau;
    return o;
}
}  // namespace

TEST_CASE("intrinsic value of calls") {
    CHECK(intrinsic_value(call(1.2, 0.0, 0.5)) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(intrinsic_value(call(0.8, 0.05, 1.0)) == 0.0);
    CHECK(intrinsic_value(call(1.0, 0.05, 1.0)) == doctest::Approx(-std::expm1(-0.05)).epsilon(1e-14));
    CHECK(intrinsic_value(call(1.0, 0.05, 1.0)) == doctest::Approx(0.048771).epsilon(1e-5));
}

TEST_CASE("time value") {
    CHECK(time_value(call(0.8, 0.0, 1.0), 0.03) == doctest::Approx(0.03));
    CHECK(time_value(call(1.2, 0.0, 1.0), 0.25) == doctest::Approx(0.05));
    const auto itm = call(1.2, 0.0, 1.0);
    CHECK_THROWS_AS(time_value(itm, intrinsic_value(itm) - 1e-6), BoundsViolation);
    // A hair below intrinsic is rounding noise.
    CHECK(time_value(itm, intrinsic_value(itm) - 1e-13) == 0.0);
}

TEST_CASE("put-call parity") {
    CHECK(put_call_parity(0.079656, call(1.0, 0.0, 1.0)) == doctest::Approx(0.079656));
    CHECK(put_call_parity(0.2, call(1.2, 0.0, 1.0)) == doctest::Approx(0.0).epsilon(1e-15));
    // Large rates shrink the strike term; a call worth S0 leaves a worthless put.
    CHECK(put_call_parity(1.0, call(1.0, 50.0, 1.0)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(put_call_parity(0.1, call(1.2, 0.0, 1.0)), BoundsViolation);

    auto put = call(0.9, 0.03, 0.7).with_side(OptionSide::Put);
    const double p = 0.12;
    const double c = put_call_parity(p, put);
    CHECK(put_call_parity(c, put.with_side(OptionSide::Call)) == doctest::Approx(p).epsilon(1e-14));
}

TEST_CASE("price bounds") {
    const auto c = call(1.1, 0.05, 2.0);
    CHECK(lower_price_bound(c) == doctest::Approx(1.1 - std::exp(-0.1)));
    CHECK(upper_price_bound(c) == doctest::Approx(1.1));
    const auto p = c.with_side(OptionSide::Put);
    CHECK(lower_price_bound(p) == 0.0);
    CHECK(upper_price_bound(p) == doctest::Approx(std::exp(-0.1)));
}

TEST_CASE("contract validation") {
    CHECK_THROWS_AS(call(1.0, 0.0, 0.0).validate(), DomainError);
    CHECK_THROWS_AS(call(0.0, 0.0, 1.0).validate(), DomainError);
    CHECK_THROWS_AS(call(1.0, -0.01, 1.0).validate(), DomainError);
    CHECK_THROWS_AS(call(1.0, std::nan(""), 1.0).validate(), DomainError);
    auto o = call(1.0, 0.0, 1.0);
    o.strike = -1.0;
    CHECK_THROWS_AS(o.validate(), DomainError);
    CHECK_NOTHROW(call(1.0, 0.0, 1.0).validate());
}

TEST_CASE("Heston parameter checks") {
    HestonParams h{1.5, 0.1, 0.3, -0.05, 0.1};
    CHECK_NOTHROW(h.validate());
    CHECK(h.feller_satisfied());
    h.gamma = 2.0;
    CHECK_FALSE(h.feller_satisfied());
    h.rho = -1.5;
    CHECK_THROWS_AS(h.validate(), DomainError);
}
