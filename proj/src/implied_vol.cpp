#include "pricer/implied_vol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pricer/black_scholes.hpp"
#include "pricer/errors.hpp"
#include "pricer/parallel.hpp"

namespace pricer {

std::string_view to_string(IvStatus status) {
    switch (status) {
        case IvStatus::Converged: return "converged";
        case IvStatus::NoBracket: return "no_bracket";
        case IvStatus::VegaTooSmall: return "vega_too_small";
        case IvStatus::MaxIterExceeded: return "max_iter_exceeded";
        case IvStatus::PriceOutOfBounds: return "price_out_of_bounds";
    }
    return "unknown";
}

std::string_view to_string(IvMethod method) {
    switch (method) {
        case IvMethod::Bisection: return "bisection";
        case IvMethod::Newton: return "newton";
        case IvMethod::Secant: return "secant";
        case IvMethod::Brent: return "brent";
    }
    return "unknown";
}

IvMethod parse_iv_method(std::string_view name) {
    if (name == "bisection") return IvMethod::Bisection;
    if (name == "newton") return IvMethod::Newton;
    if (name == "secant") return IvMethod::Secant;
    if (name == "brent") return IvMethod::Brent;
    throw DomainError("unknown implied-volatility method: " + std::string(name));
}

void SolverConfig::validate() const {
    if (!(lo < hi)) throw DomainError("solver config: bracket requires lo < hi");
    if (!(abs_tol > 0.0) || !(residual_tol > 0.0)) {
        throw DomainError("solver config: tolerances must be positive");
    }
    if (max_iter < 1) throw DomainError("solver config: max_iter must be >= 1");
}

namespace roots {

Candidate interpolation_step(double x0, double x1, double x2, double f0, double f1, double f2) {
    const bool distinct = x0 != x1 && x1 != x2 && x0 != x2 && f0 != f1 && f1 != f2 && f0 != f2;
    if (distinct) {
        const double x = x0 * f1 * f2 / ((f0 - f1) * (f0 - f2)) +
                         x1 * f2 * f0 / ((f1 - f2) * (f1 - f0)) +
                         x2 * f1 * f0 / ((f2 - f1) * (f2 - f0));
        return {x, StepKind::InverseQuadratic};
    }
    // x0 == x1: secant through the two older points; otherwise through the two newest.
    const bool newest_repeated = x0 == x1 || f0 == f1;
    const double xa = newest_repeated ? x1 : x0;
    const double fa = newest_repeated ? f1 : f0;
    const double xb = newest_repeated ? x2 : x1;
    const double fb = newest_repeated ? f2 : f1;
    return {xa - fa * (xa - xb) / (fa - fb), StepKind::Secant};
}

RootResult bisection(const Function& f, double lo, double hi, const Tolerances& tol,
                     const BracketHook& hook) {
    RootResult res;
    double f_lo = f(lo);
    double f_hi = f(hi);
    res.evals = 2;
    if (f_lo * f_hi > 0.0) {
        res.status = RootStatus::NoBracket;
        return res;
    }
    if (hook) hook(lo, hi, f_lo, f_hi);
    if (std::abs(f_lo) <= tol.f_tol || std::abs(f_hi) <= tol.f_tol) {
        res.x = std::abs(f_lo) <= std::abs(f_hi) ? lo : hi;
        res.status = RootStatus::Converged;
        return res;
    }
    while (hi - lo > tol.x_tol) {
        if (res.iterations >= tol.max_iter) {
            res.x = 0.5 * (lo + hi);
            res.status = RootStatus::MaxIter;
            return res;
        }
        const double mid = 0.5 * (lo + hi);
        const double f_mid = f(mid);
        ++res.evals;
        ++res.iterations;
        ++res.trace.bisection;
        if (std::abs(f_mid) <= tol.f_tol) {
            res.x = mid;
            res.status = RootStatus::Converged;
            return res;
        }
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
        if (hook) hook(lo, hi, f_lo, f_hi);
    }
    res.x = 0.5 * (lo + hi);
    res.status = RootStatus::Converged;
    return res;
}

RootResult brent(const Function& f, double lo, double hi, const Tolerances& tol,
                 const BracketHook& hook) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    RootResult res;

    // b: best estimate, c: contrapoint (f(b), f(c) of opposite sign),
    // a: previous b.
    double a = lo, b = hi;
    double fa = f(a), fb = f(b);
    res.evals = 2;
    if (fa * fb > 0.0) {
        res.status = RootStatus::NoBracket;
        return res;
    }
    double c = a, fc = fa;
    double d = b - a, e = d;

    for (;;) {
        if ((fb > 0.0) == (fc > 0.0) && fb != 0.0 && fc != 0.0) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b, b = c, c = a;
            fa = fb, fb = fc, fc = fa;
        }
        if (hook) hook(std::min(b, c), std::max(b, c), b < c ? fb : fc, b < c ? fc : fb);

        const double tol1 = 2.0 * eps * std::abs(b) + 0.5 * tol.x_tol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0 || std::abs(fb) <= tol.f_tol) {
            res.x = b;
            res.status = RootStatus::Converged;
            return res;
        }
        if (res.iterations >= tol.max_iter) {
            res.x = b;
            res.status = RootStatus::MaxIter;
            return res;
        }

        bool interpolated = false;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            // a == c means only two distinct points are known; interpolation_step
            // then falls back to the secant through (b, a).
            const Candidate cand = interpolation_step(b, a, c, fb, fa, fc);
            const double step = cand.x - b;
            const bool toward_c = (step > 0.0) == (xm > 0.0);
            if (std::isfinite(cand.x) && toward_c && std::abs(step) < 1.5 * std::abs(xm) - 0.5 * tol1 &&
                std::abs(step) < 0.5 * std::abs(e)) {
                e = d;
                d = step;
                interpolated = true;
                if (cand.kind == StepKind::InverseQuadratic) {
                    ++res.trace.inverse_quadratic;
                } else {
                    ++res.trace.secant;
                }
            }
        }
        if (!interpolated) {
            d = xm;
            e = d;
            ++res.trace.bisection;
        }
        a = b;
        fa = fb;
        b += std::abs(d) > tol1 ? d : std::copysign(tol1, xm);
        fb = f(b);
        ++res.evals;
        ++res.iterations;
    }
}

RootResult secant(const Function& f, double x0, double x1, const Tolerances& tol, double x_min,
                  double x_max) {
    RootResult res;
    double f0 = f(x0);
    double f1 = f(x1);
    res.evals = 2;
    if (std::abs(f0) <= tol.f_tol) {
        res.x = x0;
        res.status = RootStatus::Converged;
        return res;
    }
    for (;;) {
        if (std::abs(f1) <= tol.f_tol) {
            res.x = x1;
            res.status = RootStatus::Converged;
            return res;
        }
        if (res.iterations >= tol.max_iter) {
            res.x = x1;
            res.status = RootStatus::MaxIter;
            return res;
        }
        const double denom = f1 - f0;
        if (std::abs(denom) < 1e-14) {
            res.x = x1;
            res.status = RootStatus::Stalled;
            return res;
        }
        const double x2 = x1 - f1 * (x1 - x0) / denom;
        ++res.iterations;
        ++res.trace.secant;
        if (!(x2 > x_min && x2 <= x_max)) {
            res.x = x2;
            res.status = RootStatus::Diverged;
            return res;
        }
        if (std::abs(x2 - x1) <= tol.x_tol) {
            res.x = x2;
            res.status = RootStatus::Converged;
            return res;
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f(x1);
        ++res.evals;
    }
}

RootResult newton(const FunctionWithDerivative& f, double x0, const Tolerances& tol,
                  double min_slope, double x_min, double x_max) {
    RootResult res;
    double x = x0;
    for (;;) {
        const auto [fx, dfx] = f(x);
        ++res.evals;
        if (std::abs(fx) <= tol.f_tol) {
            res.x = x;
            res.status = RootStatus::Converged;
            return res;
        }
        if (std::abs(dfx) < min_slope) {
            res.x = x;
            res.status = RootStatus::SmallDerivative;
            return res;
        }
        if (res.iterations >= tol.max_iter) {
            res.x = x;
            res.status = RootStatus::MaxIter;
            return res;
        }
        const double next = x - fx / dfx;
        ++res.iterations;
        if (!(next > x_min && next <= x_max)) {
            res.x = next;
            res.status = RootStatus::Diverged;
            return res;
        }
        if (std::abs(next - x) <= tol.x_tol) {
            res.x = next;
            res.status = RootStatus::Converged;
            return res;
        }
        x = next;
    }
}

}  // namespace roots

double bs_price_extended(const EuropeanOption& option, double sigma) {
    if (sigma <= 0.0) return intrinsic_value(option);
    return bs_price({option, sigma}).price;
}

namespace {

// Shared pre-check: the target must lie strictly inside the attainable band.
bool price_in_band(const IvProblem& p) {
    const double v = p.target_price;
    return std::isfinite(v) && v > lower_price_bound(p.option) && v < upper_price_bound(p.option);
}

roots::Tolerances tolerances_for(const IvProblem& p, const SolverConfig& cfg) {
    roots::Tolerances tol;
    tol.x_tol = cfg.abs_tol;
    tol.f_tol = cfg.residual_tol * (p.target_price - intrinsic_value(p.option));
    tol.max_iter = cfg.max_iter;
    return tol;
}

IvResult to_iv_result(const roots::RootResult& r) {
    IvResult out;
    out.sigma_star = r.x;
    out.iterations = r.iterations;
    out.function_evals = r.evals;
    switch (r.status) {
        case roots::RootStatus::Converged: out.status = IvStatus::Converged; break;
        case roots::RootStatus::NoBracket: out.status = IvStatus::NoBracket; break;
        case roots::RootStatus::SmallDerivative: out.status = IvStatus::VegaTooSmall; break;
        case roots::RootStatus::Diverged:
            out.status = IvStatus::MaxIterExceeded;
            out.diverged = true;
            break;
        case roots::RootStatus::MaxIter:
        case roots::RootStatus::Stalled: out.status = IvStatus::MaxIterExceeded; break;
    }
    return out;
}

IvResult out_of_bounds() {
    IvResult r;
    r.status = IvStatus::PriceOutOfBounds;
    r.sigma_star = std::numeric_limits<double>::quiet_NaN();
    return r;
}

}  // namespace

IvResult bisection_iv(const IvProblem& problem, const SolverConfig& config) {
    config.validate();
    if (!price_in_band(problem)) return out_of_bounds();
    const auto g = [&](double s) { return bs_price_extended(problem.option, s) - problem.target_price; };
    return to_iv_result(
        roots::bisection(g, config.lo, config.hi, tolerances_for(problem, config), config.on_bracket));
}

IvResult brent_iv(const IvProblem& problem, const SolverConfig& config) {
    config.validate();
    if (!price_in_band(problem)) return out_of_bounds();
    const auto g = [&](double s) { return bs_price_extended(problem.option, s) - problem.target_price; };
    return to_iv_result(
        roots::brent(g, config.lo, config.hi, tolerances_for(problem, config), config.on_bracket));
}

IvResult secant_iv(const IvProblem& problem, const SolverConfig& config) {
    config.validate();
    if (!price_in_band(problem)) return out_of_bounds();
    const auto g = [&](double s) { return bs_price_extended(problem.option, s) - problem.target_price; };
    return to_iv_result(roots::secant(g, config.initial_guess,
                                      config.initial_guess + config.secant_offset,
                                      tolerances_for(problem, config), 0.0, config.max_sigma));
}

IvResult newton_iv(const IvProblem& problem, const SolverConfig& config) {
    config.validate();
    if (!(config.initial_guess > 0.0)) throw DomainError("newton_iv: initial guess must be > 0");
    if (!price_in_band(problem)) return out_of_bounds();
    const auto g = [&](double s) {
        const BsSolution sol = bs_price({problem.option, s});
        return std::pair{sol.price - problem.target_price, sol.vega};
    };
    return to_iv_result(roots::newton(g, config.initial_guess, tolerances_for(problem, config),
                                      config.min_vega, 0.0, config.max_sigma));
}

IvResult solve_iv(const IvProblem& problem, IvMethod method, const SolverConfig& config) {
    switch (method) {
        case IvMethod::Bisection: return bisection_iv(problem, config);
        case IvMethod::Newton: return newton_iv(problem, config);
        case IvMethod::Secant: return secant_iv(problem, config);
        case IvMethod::Brent: return brent_iv(problem, config);
    }
    throw DomainError("solve_iv: unknown method");
}

std::vector<IvResult> solve_iv_batch(std::span<const IvProblem> problems, IvMethod method,
                                     const SolverConfig& config, int threads) {
    std::vector<IvResult> out(problems.size());
    parallel_for(problems.size(), threads, [&](std::size_t i) {
        try {
            out[i] = solve_iv(problems[i], method, config);
        } catch (const DomainError&) {
            out[i] = out_of_bounds();
        }
    });
    return out;
}

}  // namespace pricer
