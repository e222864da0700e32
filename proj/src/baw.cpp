#include "amopt/baw.hpp"

#include <algorithm>
#include <cmath>

#include "amopt/analytic.hpp"
#include "amopt/normal.hpp"

namespace amopt {

namespace {

struct BawEnv {
    double strike, r, b, sigma, tau;
    double carry_disc;  // e^{(b-r) tau} = e^{-q tau}
    double q_root;      // characteristic root (q2 for calls, q1 for puts)
};

double d1_of(const BawEnv& e, double s) {
    return (std::log(s / e.strike) + (e.b + 0.5 * e.sigma * e.sigma) * e.tau) /
           (e.sigma * std::sqrt(e.tau));
}

// Smooth-pasting residual and derivative at candidate critical price s.
double call_resid(const BawEnv& e, double s, double* deriv) {
    const double d1 = d1_of(e, s);
    const double nd1 = norm_cdf(d1);
    const double euro = euro_call(s, e.tau, e.strike, e.r, e.sigma, e.r - e.b);
    const double hedge = 1.0 - e.carry_disc * nd1;
    if (deriv) {
        *deriv = 1.0 - e.carry_disc * nd1 - hedge / e.q_root +
                 e.carry_disc * norm_pdf(d1) /
                     (e.sigma * std::sqrt(e.tau) * e.q_root);
    }
    return s - e.strike - euro - hedge * s / e.q_root;
}

double put_resid(const BawEnv& e, double s, double* deriv) {
    const double d1 = d1_of(e, s);
    const double nd1m = norm_cdf(-d1);
    const double euro = euro_put(s, e.tau, e.strike, e.r, e.sigma, e.r - e.b);
    const double hedge = 1.0 - e.carry_disc * nd1m;
    if (deriv) {
        const double dp = -e.carry_disc * nd1m;
        const double dterm = (hedge + e.carry_disc * norm_pdf(d1) /
                                          (e.sigma * std::sqrt(e.tau))) /
                             e.q_root;
        *deriv = dp - dterm + 1.0;
    }
    return euro - hedge * s / e.q_root - (e.strike - s);
}

using Resid = double (*)(const BawEnv&, double, double*);

double solve_critical(const BawEnv& e, Resid resid, double seed, double lo,
                      double hi) {
    double s = std::clamp(seed, lo, hi);
    for (int it = 0; it < 200; ++it) {
        double deriv = 0.0;
        const double f = resid(e, s, &deriv);
        if (std::abs(f) < 1e-8 * e.strike) return s;
        if (deriv == 0.0 || !std::isfinite(deriv)) break;
        double step = f / deriv;
        double s_new = s - step;
        // damp until the candidate stays inside the bracket
        int halvings = 0;
        while ((s_new <= lo || s_new >= hi) && halvings < 60) {
            step *= 0.5;
            s_new = s - step;
            ++halvings;
        }
        if (halvings >= 60) break;
        if (std::abs(s_new - s) < 1e-12 * e.strike) return s_new;
        s = s_new;
    }
    // bracketing bisection fallback
    double flo = resid(e, lo, nullptr);
    double fhi = resid(e, hi, nullptr);
    if (flo * fhi > 0.0)
        throw NumericsError("baw_price: critical price not bracketed");
    double a = lo, bb = hi;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + bb);
        const double fm = resid(e, mid, nullptr);
        if (std::abs(fm) < 1e-8 * e.strike || bb - a < 1e-12 * e.strike)
            return mid;
        if (flo * fm <= 0.0) {
            bb = mid;
        } else {
            a = mid;
            flo = fm;
        }
    }
    throw NumericsError("baw_price: critical price iteration failed");
}

}  // namespace

double baw_price(const MarketParams& params, const OptionContract& contract,
                 double s0, double tau) {
    if (contract.n_assets != 1 ||
        (contract.kind != PayoffKind::PutVanilla &&
         contract.kind != PayoffKind::CallVanilla))
        throw ValidationError("baw_price: vanilla single-asset options only");
    if (!(tau > 0.0)) throw ValidationError("baw_price: tau must be > 0");

    const bool is_call = contract.kind == PayoffKind::CallVanilla;
    const double r = params.r, q = params.q[0], sigma = params.sigma[0];
    const double strike = contract.strike;

    if (is_call && q <= 1e-12)  // no dividend: early exercise is never optimal
        return euro_call(s0, tau, strike, r, sigma, q);
    if (!is_call && r <= 1e-12)  // zero rate: put premium vanishes
        return euro_put(s0, tau, strike, r, sigma, q);

    BawEnv e;
    e.strike = strike;
    e.r = r;
    e.b = r - q;
    e.sigma = sigma;
    e.tau = tau;
    e.carry_disc = std::exp(-q * tau);

    const double m2r = 2.0 * r / (sigma * sigma);
    const double n2b = 2.0 * e.b / (sigma * sigma);
    const double kfac = -std::expm1(-r * tau);
    const double k = m2r / kfac;
    const double disc_root = std::sqrt((n2b - 1.0) * (n2b - 1.0) + 4.0 * k);
    const double disc_perp = std::sqrt((n2b - 1.0) * (n2b - 1.0) + 4.0 * m2r);

    if (is_call) {
        e.q_root = 0.5 * (-(n2b - 1.0) + disc_root);
        const double q2_inf = 0.5 * (-(n2b - 1.0) + disc_perp);
        const double seed = strike * q2_inf / (q2_inf - 1.0);
        const double s_star = solve_critical(e, call_resid, seed,
                                             strike * (1.0 + 1e-9),
                                             strike * 1e6);
        if (s0 >= s_star) return s0 - strike;
        const double d1 = d1_of(e, s_star);
        const double a2 =
            s_star / e.q_root * (1.0 - e.carry_disc * norm_cdf(d1));
        const double euro = euro_call(s0, tau, strike, r, sigma, q);
        return std::max(euro + a2 * std::pow(s0 / s_star, e.q_root),
                        s0 - strike);
    }

    e.q_root = 0.5 * (-(n2b - 1.0) - disc_root);
    const double q1_inf = 0.5 * (-(n2b - 1.0) - disc_perp);
    const double seed = strike * q1_inf / (q1_inf - 1.0);
    const double s_star =
        solve_critical(e, put_resid, seed, strike * 1e-6,
                       strike * (1.0 - 1e-9));
    if (s0 <= s_star) return strike - s0;
    const double d1 = d1_of(e, s_star);
    const double a1 =
        -s_star / e.q_root * (1.0 - e.carry_disc * norm_cdf(-d1));
    const double euro = euro_put(s0, tau, strike, r, sigma, q);
    return std::max(euro + a1 * std::pow(s0 / s_star, e.q_root),
                    strike - s0);
}

}  // namespace amopt
