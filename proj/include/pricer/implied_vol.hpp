#pragma once

// Black-Scholes implied volatility: g(sigma) = BS(sigma) - V_mkt = 0.

#include <functional>
#include <utility>
#include <span>
#include <string_view>
#include <vector>

#include "pricer/market.hpp"

namespace pricer {

struct IvProblem {
    EuropeanOption option;
    double target_price = 0.0;
};

enum class IvStatus { Converged, NoBracket, VegaTooSmall, MaxIterExceeded, PriceOutOfBounds };

std::string_view to_string(IvStatus status);

enum class IvMethod { Bisection, Newton, Secant, Brent };

std::string_view to_string(IvMethod method);
IvMethod parse_iv_method(std::string_view name);  // throws DomainError

// Observer for bracketing methods: called after every update with the current
// bracket and g at both ends.
using BracketHook = std::function<void(double lo, double hi, double g_lo, double g_hi)>;

struct SolverConfig {
    double lo = 0.0;
    double hi = 1.1;
    double initial_guess = 0.5;
    double secant_offset = 0.1;  // second secant starting point is initial_guess + offset
    double abs_tol = 1e-8;       // on sigma (bracket width or step size)
    // On |g|, relative to the target's time value V_mkt - intrinsic. An
    // absolute tolerance lets deep OTM problems "converge" at the wrong sigma
    // because every candidate price is numerically ~0.
    double residual_tol = 1e-10;
    int max_iter = 200;
    double min_vega = 1e-10;
    double max_sigma = 10.0;  // Newton/secant iterates outside (0, max_sigma] diverged
    BracketHook on_bracket;

    void validate() const;
};

struct IvResult {
    double sigma_star = 0.0;
    int iterations = 0;
    int function_evals = 0;
    IvStatus status = IvStatus::MaxIterExceeded;
    bool diverged = false;  // Newton/secant iterate escaped (0, max_sigma]

    bool converged() const { return status == IvStatus::Converged; }
};

// Price as a function of sigma, extended continuously to sigma <= 0 by the
// intrinsic value so the default bracket [0, 1.1] is usable.
double bs_price_extended(const EuropeanOption& option, double sigma);

IvResult bisection_iv(const IvProblem& problem, const SolverConfig& config = {});
IvResult newton_iv(const IvProblem& problem, const SolverConfig& config = {});
IvResult secant_iv(const IvProblem& problem, const SolverConfig& config = {});
IvResult brent_iv(const IvProblem& problem, const SolverConfig& config = {});
IvResult solve_iv(const IvProblem& problem, IvMethod method, const SolverConfig& config = {});

// Element-wise solve; failures are recorded per element. `threads` <= 1 runs
// serially; results are in input order either way.
std::vector<IvResult> solve_iv_batch(std::span<const IvProblem> problems, IvMethod method,
                                     const SolverConfig& config = {}, int threads = 1);

// Generic scalar root finders behind the IV solvers.
namespace roots {

enum class StepKind { InverseQuadratic, Secant, Bisection };

struct Candidate {
    double x = 0.0;
    StepKind kind = StepKind::Secant;
};

// Interpolation step from the three most recent iterants (x0 newest).
// Inverse quadratic interpolation through (f_i, x_i) when the three points
// are distinct; when two coincide, the secant through the remaining two.
Candidate interpolation_step(double x0, double x1, double x2, double f0, double f1, double f2);

enum class RootStatus { Converged, NoBracket, MaxIter, Diverged, Stalled, SmallDerivative };

struct BrentTrace {
    int inverse_quadratic = 0;
    int secant = 0;
    int bisection = 0;
};

struct RootResult {
    double x = 0.0;
    int iterations = 0;
    int evals = 0;
    RootStatus status = RootStatus::MaxIter;
    BrentTrace trace;
};

struct Tolerances {
    double x_tol = 1e-8;
    double f_tol = 0.0;
    int max_iter = 200;
};

using Function = std::function<double(double)>;
// Returns (f(x), f'(x)).
using FunctionWithDerivative = std::function<std::pair<double, double>(double)>;

RootResult bisection(const Function& f, double lo, double hi, const Tolerances& tol,
                     const BracketHook& hook = {});
RootResult brent(const Function& f, double lo, double hi, const Tolerances& tol,
                 const BracketHook& hook = {});
// Iterates leaving (x_min, x_max] end with Diverged; |f(x_k) - f(x_{k-1})|
// below 1e-14 ends with Stalled.
RootResult secant(const Function& f, double x0, double x1, const Tolerances& tol, double x_min,
                  double x_max);
// |f'| below min_slope ends with SmallDerivative.
RootResult newton(const FunctionWithDerivative& f, double x0, const Tolerances& tol,
                  double min_slope, double x_min, double x_max);

}  // namespace roots

}  // namespace pricer
