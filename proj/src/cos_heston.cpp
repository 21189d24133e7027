#include "pricer/cos_heston.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pricer/errors.hpp"

namespace pricer {
namespace {

using cplx = std::complex<double>;

constexpr double kNegativeTolerance = 1e-10;

cplx expm1c(cplx z) {
    if (std::abs(z) < 1e-5) return z * (1.0 + z * (0.5 + z / 6.0));
    return std::exp(z) - 1.0;
}

// log(1 + w) / w
cplx log1p_ratio(cplx w) {
    if (std::abs(w) < 1e-5) return 1.0 - w * (0.5 - w / 3.0);
    return std::log(1.0 + w) / w;
}

enum class Payoff { Call, Put };

// Sum_{k}' Re(phi(u_k) e^{-i u_k a}) U_k on the log-price interval [x+a, x+b].
double cos_sum(const EuropeanOption& option, const HestonParams& params, const CosConfig& cfg,
               Payoff payoff) {
    cfg.validate();
    const HestonChf ctx{option.tau, option.rate, params};
    ctx.validate();
    const auto [a, b] = cos_truncation_bounds(ctx, cfg);

    const double x = std::log(option.moneyness);
    const double lo = x + a;
    const double hi = x + b;
    const double width = hi - lo;
    if (!(lo < 0.0 && hi > 0.0)) {
        std::ostringstream msg;
        msg << "cos: truncation interval [" << lo << ", " << hi << "] does not contain the strike";
        throw DomainError(msg.str());
    }

    // The payoff is supported on [0, hi] (call) or [lo, 0] (put). Both chi and
    // psi only need trig evaluated at the strike; the interval ends give
    // cos = +/-1, sin = 0.
    const double theta0 = std::numbers::pi * (0.0 - lo) / width;
    const double e_hi = std::exp(hi);
    const double e_lo = std::exp(lo);

    double sum = 0.0;
    for (int k = 0; k < cfg.n_terms; ++k) {
        const double u = k * std::numbers::pi / width;
        const double c0 = std::cos(k * theta0);
        const double s0 = std::sin(k * theta0);
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;  // cos(k pi)
        const double denom = 1.0 + u * u;

        double chi = 0.0;
        double psi = 0.0;
        if (payoff == Payoff::Call) {
            // chi_k(0, hi), psi_k(0, hi)
            chi = (sign * e_hi - c0 - u * s0) / denom;
            psi = k == 0 ? hi : -s0 / u;
        } else {
            // chi_k(lo, 0), psi_k(lo, 0)
            chi = (c0 + u * s0 - e_lo) / denom;
            psi = k == 0 ? -lo : s0 / u;
        }
        const double coeff = payoff == Payoff::Call ? (chi - psi) : (psi - chi);

        const cplx phi = (k == 0) ? cplx(1.0, 0.0) : heston_chf(u, ctx);
        const double term = (phi * std::polar(1.0, -u * a)).real() * coeff;
        sum += (k == 0) ? 0.5 * term : term;
    }
    return option.discount() * (2.0 / width) * option.strike * sum;
}

void check_negative(double raw, const char* what) {
    if (raw < -kNegativeTolerance) {
        std::ostringstream msg;
        msg << what << ": COS sum is negative (" << raw << ")";
        throw BoundsViolation(msg.str());
    }
}

PricePoint clamp_into_band(const EuropeanOption& option, double raw) {
    PricePoint pp;
    pp.option = option;
    pp.price = std::clamp(raw, lower_price_bound(option), upper_price_bound(option));
    pp.clamp = std::abs(pp.price - raw);
    return pp;
}

}  // namespace

void CosConfig::validate() const {
    if (n_terms < 16) throw DomainError("cos: n_terms must be >= 16");
    if (!(trunc_width > 0.0)) throw DomainError("cos: trunc_width must be > 0");
}

void HestonChf::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("heston chf: tau must be > 0");
    if (!std::isfinite(rate)) throw DomainError("heston chf: rate must be finite");
    params.validate();
}

std::complex<double> heston_chf(double u, const HestonChf& ctx) {
    if (u == 0.0) return {1.0, 0.0};
    const HestonParams& p = ctx.params;
    const cplx i(0.0, 1.0);
    const double tau = ctx.tau;

    const cplx xi = p.kappa - p.rho * p.gamma * i * u;
    const cplx iu_u2(u * u, u);  // u^2 + i u
    const cplx d = std::sqrt(xi * xi + p.gamma * p.gamma * iu_u2);
    const cplx xi_plus_d = xi + d;
    if (std::abs(xi_plus_d) == 0.0) {
        // kappa = gamma = 0: variance frozen at nu0.
        const cplx expo = i * u * ctx.rate * tau - 0.5 * p.nu0 * tau * iu_u2;
        return std::exp(expo);
    }

    // (xi - d) / gamma^2 without the cancellation in xi - d.
    const cplx a_coef = -iu_u2 / xi_plus_d;
    const cplx g = p.gamma * p.gamma * a_coef / xi_plus_d;  // (xi - d)/(xi + d)
    const cplx e = std::exp(-d * tau);
    const cplx one_minus_e = -expm1c(-d * tau);
    const cplx one_minus_ge = 1.0 - g * e;
    const cplx one_minus_g = 1.0 - g;

    const cplx var_term = a_coef * one_minus_e / one_minus_ge;
    // log((1 - g e) / (1 - g)) / gamma^2 = (w / gamma^2) * log1p(w)/w
    const cplx w_over_g2 = a_coef / xi_plus_d * one_minus_e / one_minus_g;
    const cplx w = g * one_minus_e / one_minus_g;
    const cplx mean_term = p.kappa * p.nu_bar * (a_coef * tau - 2.0 * w_over_g2 * log1p_ratio(w));

    const cplx expo = i * u * ctx.rate * tau + mean_term + p.nu0 * var_term;
    if (!std::isfinite(expo.real()) || !std::isfinite(expo.imag()) || expo.real() > 700.0) {
        std::ostringstream msg;
        msg << "heston chf: exponent overflow at u=" << u;
        throw NumericalOverflow(msg.str());
    }
    const cplx phi = std::exp(expo);
    if (!std::isfinite(phi.real()) || !std::isfinite(phi.imag())) {
        throw NumericalOverflow("heston chf: non-finite value");
    }
    return phi;
}

double heston_cumulant1(const HestonChf& ctx) {
    const HestonParams& p = ctx.params;
    const double kt = p.kappa * ctx.tau;
    // (1 - e^{-kappa tau}) / kappa
    const double decay = kt > 0.0 ? -std::expm1(-kt) / p.kappa : ctx.tau;
    return ctx.rate * ctx.tau + decay * (p.nu_bar - p.nu0) / 2.0 - p.nu_bar * ctx.tau / 2.0;
}

double heston_cumulant2(const HestonChf& ctx) {
    const HestonParams& p = ctx.params;
    const double k = p.kappa;
    const double t = ctx.tau;
    const double g = p.gamma;
    const double rho = p.rho;
    const double vb = p.nu_bar;
    const double v0 = p.nu0;

    if (k * t < 1e-2) {
        // Taylor expansion in kappa; the closed form divides by kappa^3.
        const double g2 = g * g;
        const double t2 = t * t;
        const double gr = g * rho;
        const double c0 = v0 * t - gr * v0 * t2 / 2.0 + g2 * v0 * t2 * t / 12.0;
        const double c1 = t2 * ((vb - v0) / 2.0 + gr * t * (v0 / 3.0 - vb / 6.0) + g2 * t2 * (vb / 48.0 - v0 / 12.0));
        const double c2 = t2 * t *
                          ((v0 - vb) / 6.0 + gr * t * (vb / 12.0 - v0 / 8.0) +
                           g2 * t2 * (11.0 * v0 / 240.0 - vb / 60.0));
        const double c3 = t2 * t2 *
                          ((vb - v0) / 24.0 + gr * t * (v0 / 30.0 - vb / 40.0) +
                           g2 * t2 * (11.0 * vb / 1440.0 - 13.0 * v0 / 720.0));
        return c0 + k * (c1 + k * (c2 + k * c3));
    }

    // Variance of -I/2 + rho*M + sqrt(1-rho^2)*N with I the integrated
    // variance and M = (v_T - v0 - kappa*nubar*tau + kappa*I) / gamma.
    const double e1 = std::exp(-k * t);
    const double e2 = std::exp(-2.0 * k * t);
    const double om = -std::expm1(-k * t);
    const double g2 = g * g;
    const double kt = k * t;
    const double from_v0 = 2 * g2 * (1 - e2) - 4 * g2 * kt * e1 + 8 * g * rho * k * kt * e1 - 8 * g * rho * k * om +
                           8 * k * k * om;
    const double from_vb = g2 * (2 * kt + 4 * kt * e1 - 5 + 4 * e1 + e2) - 8 * g * rho * k * kt * (1 + e1) +
                           16 * g * rho * k * om + 8 * k * k * (kt - om);
    const double num = v0 * from_v0 + vb * from_vb;
    return num / (8.0 * k * k * k);
}

std::pair<double, double> cos_truncation_bounds(const HestonChf& ctx, const CosConfig& cfg) {
    const double c1 = heston_cumulant1(ctx);
    const double c2 = heston_cumulant2(ctx);
    const double half = cfg.trunc_width * std::sqrt(std::abs(c2));
    const double a = c1 - half;
    const double b = c1 + half;
    if (!(b > a) || !std::isfinite(a) || !std::isfinite(b)) {
        throw DomainError("cos: degenerate truncation interval");
    }
    return {a, b};
}

double cos_raw_call(const EuropeanOption& option, const HestonParams& params, const CosConfig& cfg) {
    option.validate();
    return cos_sum(option, params, cfg, Payoff::Call);
}

double cos_raw_put(const EuropeanOption& option, const HestonParams& params, const CosConfig& cfg) {
    option.validate();
    return cos_sum(option, params, cfg, Payoff::Put);
}

PricePoint cos_put_price(const EuropeanOption& option, const HestonParams& params,
                         const CosConfig& cfg) {
    if (option.side != OptionSide::Put) throw DomainError("cos_put_price: option is not a put");
    const double raw = cos_raw_put(option, params, cfg);
    check_negative(raw, "cos_put_price");
    return clamp_into_band(option, raw);
}

PricePoint cos_call_price(const EuropeanOption& option, const HestonParams& params,
                          const CosConfig& cfg) {
    if (option.side != OptionSide::Call) {
        throw DomainError("cos_call_price: option is not a call (use cos_put_price)");
    }
    option.validate();
    cfg.validate();

    const HestonChf ctx{option.tau, option.rate, params};
    ctx.validate();
    const double upper_log_price = std::log(option.moneyness) + cos_truncation_bounds(ctx, cfg).second;
    const bool reroute = option.moneyness < cfg.otm_threshold ||
                         std::exp(upper_log_price) > cfg.max_call_coefficient_scale;

    if (!reroute) {
        const double raw = cos_raw_call(option, params, cfg);
        check_negative(raw, "cos_call_price");
        return clamp_into_band(option, raw);
    }

    const EuropeanOption put = option.with_side(OptionSide::Put);
    const PricePoint put_pp = cos_put_price(put, params, cfg);
    const double raw_call = put_pp.price + option.spot() - option.discounted_strike();
    PricePoint pp = clamp_into_band(option, raw_call);
    pp.clamp += put_pp.clamp;
    return pp;
}

PricePoint cos_price(const EuropeanOption& option, const HestonParams& params, const CosConfig& cfg) {
    return option.side == OptionSide::Call ? cos_call_price(option, params, cfg)
                                           : cos_put_price(option, params, cfg);
}

}  // namespace pricer
