#include <doctest.h>

#include <cmath>
#include <vector>

#include "pricer/black_scholes.hpp"
#include "pricer/errors.hpp"
#include "pricer/implied_vol.hpp"

using namespace pricer;

namespace {

IvProblem problem(double m, double tau, double r, double sigma) {
    IvProblem p;
    p.option.moneyness = m;
    p.option.tau = tau;
    p.option.rate = r;
    p.target_price = bs_price(BsInputs{p.option, sigma}).price;
    return p;
}

}  // namespace

TEST_CASE("round trip for every method at the money") {
    const auto p = problem(1.0, 0.5, 0.0, 0.3);
    for (IvMethod m : {IvMethod::Bisection, IvMethod::Newton, IvMethod::Secant, IvMethod::Brent}) {
        const auto r = solve_iv(p, m);
        CHECK(r.converged());
        CHECK(r.sigma_star == doctest::Approx(0.3).epsilon(1e-8));
    }
}

TEST_CASE("bisection iteration count") {
    const auto r = bisection_iv(problem(1.0, 0.5, 0.0, 0.3));
    CHECK(r.converged());
    CHECK(r.iterations <= 28);
}

TEST_CASE("Newton converges quickly at the money") {
    const auto r = newton_iv(problem(1.0, 0.5, 0.0, 0.3));
    CHECK(r.converged());
    CHECK(r.iterations <= 8);
}

TEST_CASE("Newton started at the root takes no step") {
    SolverConfig cfg;
    const auto r = newton_iv(problem(1.0, 0.5, 0.0, cfg.initial_guess), cfg);
    CHECK(r.converged());
    CHECK(r.iterations == 0);
}

TEST_CASE("Newton is not robust deep out of the money") {
    const auto r = newton_iv(problem(0.5, 0.2, 0.0, 0.05));
    CHECK_FALSE(r.converged());
    CHECK((r.status == IvStatus::VegaTooSmall || r.status == IvStatus::MaxIterExceeded || r.diverged));
}

TEST_CASE("secant fails on a flat objective") {
    // Deep in the money with a tiny time value: g is flat in sigma.
    const auto r = secant_iv(problem(1.6, 0.2, 0.05, 0.02));
    CHECK_FALSE(r.converged());
}

TEST_CASE("prices outside the no-arbitrage band") {
    auto p = problem(1.2, 1.0, 0.0, 0.3);
    p.target_price = intrinsic_value(p.option) - 0.01;
    for (IvMethod m : {IvMethod::Bisection, IvMethod::Newton, IvMethod::Secant, IvMethod::Brent}) {
        CHECK(solve_iv(p, m).status == IvStatus::PriceOutOfBounds);
    }
    p.target_price = p.option.spot() + 0.01;
    CHECK(brent_iv(p).status == IvStatus::PriceOutOfBounds);
}

TEST_CASE("Brent recovers the benchmark grid") {
    long brent_evals = 0;
    long bisection_evals = 0;
    for (int i = 0; i <= 98; ++i) {
        const double sigma = 0.01 + 0.01 * i;
        const auto p = problem(1.0, 0.5, 0.0, sigma);
        const auto b = brent_iv(p);
        const auto s = bisection_iv(p);
        CHECK(b.converged());
        CHECK(std::abs(b.sigma_star - sigma) < 1e-8);
        CHECK(std::abs(s.sigma_star - sigma) < 1e-8);
        brent_evals += b.function_evals;
        bisection_evals += s.function_evals;
    }
    CHECK(brent_evals < bisection_evals);
}

TEST_CASE("round trip over the narrow contract ranges") {
    int n = 0;
    for (double m : {0.5, 0.8, 1.0, 1.2, 1.5}) {
        for (double tau : {0.3, 0.95}) {
            for (double sigma : {0.02, 0.1, 0.4, 1.0}) {
                const auto p = problem(m, tau, 0.05, sigma);
                // Round trip is only meaningful when the price carries sigma.
                if (p.target_price - intrinsic_value(p.option) < 1e-12) continue;
                const auto r = brent_iv(p);
                CHECK(r.converged());
                CHECK(std::abs(r.sigma_star - sigma) < 1e-7);
                ++n;
            }
        }
    }
    CHECK(n >= 25);
}

TEST_CASE("extended price below zero volatility") {
    EuropeanOption o;
    o.moneyness = 1.3;
    CHECK(bs_price_extended(o, 0.0) == doctest::Approx(intrinsic_value(o)));
    CHECK(bs_price_extended(o, -0.5) == doctest::Approx(intrinsic_value(o)));
    CHECK(bs_price_extended(o, 0.2) == doctest::Approx(bs_price(BsInputs{o, 0.2}).price));
}

TEST_CASE("batch solving keeps order and records failures") {
    std::vector<IvProblem> ps{problem(1.0, 0.5, 0.0, 0.2), problem(1.0, 0.5, 0.0, 0.4), problem(1.0, 0.5, 0.0, 0.6)};
    ps[1].target_price = -1.0;
    const auto rs = solve_iv_batch(ps, IvMethod::Brent);
    REQUIRE(rs.size() == 3);
    CHECK(rs[0].converged());
    CHECK(rs[1].status == IvStatus::PriceOutOfBounds);
    CHECK(rs[2].sigma_star == doctest::Approx(0.6).epsilon(1e-8));
    CHECK(solve_iv_batch({}, IvMethod::Brent).empty());
    const auto threaded = solve_iv_batch(ps, IvMethod::Brent, {}, 3);
    CHECK(threaded[2].sigma_star == rs[2].sigma_star);
}

TEST_CASE("solver configuration") {
    SolverConfig c;
    c.lo = 1.0;
    c.hi = 0.5;
    CHECK_THROWS_AS(c.validate(), DomainError);
    CHECK(parse_iv_method("brent") == IvMethod::Brent);
    CHECK_THROWS_AS(parse_iv_method("halley"), DomainError);
}

TEST_CASE("bracketing hook sees shrinking brackets") {
    SolverConfig c;
    std::vector<double> widths;
    c.on_bracket = [&](double lo, double hi, double, double) { widths.push_back(hi - lo); };
    bisection_iv(problem(1.0, 0.5, 0.0, 0.25), c);
    REQUIRE(widths.size() > 5);
    for (std::size_t i = 1; i < widths.size(); ++i) CHECK(widths[i] <= widths[i - 1]);
}

TEST_CASE("generic roots") {
    using namespace roots;
    const Tolerances tol{1e-12, 0.0, 200};
    auto cubic = [](double x) { return x * x * x - 2.0 * x - 5.0; };
    const double root = 2.0945514815423265;
    CHECK(brent(cubic, 2.0, 3.0, tol).x == doctest::Approx(root).epsilon(1e-12));
    CHECK(bisection(cubic, 2.0, 3.0, tol).x == doctest::Approx(root).epsilon(1e-11));
    CHECK(brent(cubic, 3.0, 4.0, tol).status == RootStatus::NoBracket);

    auto affine = [](double x) { return 3.0 * x - 1.2; };
    const auto s = secant(affine, 0.0, 1.0, tol, -10.0, 10.0);
    CHECK(s.status == RootStatus::Converged);
    CHECK(s.x == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(s.iterations <= 2);

    auto nf = [](double x) { return std::make_pair(x * x - 2.0, 2.0 * x); };
    CHECK(newton(nf, 1.0, tol, 1e-12, 0.0, 10.0).x == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    auto flat = [](double x) { return std::make_pair(x - 1.0, 0.0); };
    CHECK(newton(flat, 3.0, tol, 1e-12, 0.0, 10.0).status == RootStatus::SmallDerivative);
}

TEST_CASE("interpolation step") {
    using namespace roots;
    // Inverse quadratic through three points of x = f^2 + 1 reproduces x(0) = 1.
    auto x_of = [](double f) { return f * f + 1.0; };
    const auto c = interpolation_step(x_of(0.5), x_of(-0.7), x_of(1.1), 0.5, -0.7, 1.1);
    CHECK(c.kind == StepKind::InverseQuadratic);
    CHECK(c.x == doctest::Approx(1.0).epsilon(1e-12));
    // Two identical iterants fall back to the secant through the others.
    const auto s = interpolation_step(2.0, 2.0, 0.0, 1.0, 1.0, -1.0);
    CHECK(s.kind == StepKind::Secant);
    CHECK(s.x == doctest::Approx(1.0).epsilon(1e-14));
}
