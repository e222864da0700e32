#ifndef AMOPT_ANALYTIC_HPP
#define AMOPT_ANALYTIC_HPP

#include <cmath>
#include <utility>

#include "amopt/jet.hpp"
#include "amopt/normal.hpp"
#include "amopt/types.hpp"

namespace amopt {

/// Price floor used inside logarithms; training domains touch s = 0.
inline constexpr double kLogFloorRel = 1e-12;

template <class S>
S floor_at(const S& x, double lo) {
    if (value_of(x) >= lo) return x;
    S z = x;
    z = z * 0.0;  // zero value and derivative channels
    z = z + lo;
    return z;
}

/// tau -> 0 convention for N(d): sign(ln(s/K)) branch, 1/2 at s = K.
inline double terminal_cdf_branch(double s, double k) {
    if (s > k) return 1.0;
    if (s < k) return 0.0;
    return 0.5;
}

/// The d1/d2/d0 arguments of the normal CDF for the dividend-adjusted
/// Black-Scholes-Merton formulas; d2 = d1 - sigma*sqrt(tau), d0 = (d1+d2)/2.
template <class S>
struct DFamily {
    S d1, d2, d0;
};

template <class S>
DFamily<S> dfamily(const S& s, const S& tau, double strike, double r, double q,
                   double sigma) {
    using std::log;
    using std::sqrt;
    const S s_safe = floor_at(s, kLogFloorRel * strike);
    const S vol_sqrt_tau = sigma * sqrt(tau);
    const S log_m = log(s_safe * (1.0 / strike));
    DFamily<S> d;
    d.d1 = (log_m + (r - q + 0.5 * sigma * sigma) * tau) / vol_sqrt_tau;
    d.d2 = d.d1 - vol_sqrt_tau;
    d.d0 = 0.5 * (d.d1 + d.d2);
    return d;
}

/// European put with continuous dividend yield (Merton form); the paper's
/// q = 0 put is the special case.
template <class S>
S euro_put(const S& s, const S& tau, double strike, double r, double sigma,
           double q) {
    using std::exp;
    if (value_of(tau) <= 0.0) {
        const double nd = terminal_cdf_branch(strike, value_of(s));
        return nd * (strike - s);
    }
    const auto d = dfamily(s, tau, strike, r, q, sigma);
    return strike * exp(-r * tau) * norm_cdf(-d.d2) -
           s * exp(-q * tau) * norm_cdf(-d.d1);
}

/// European call with continuous dividend yield.
template <class S>
S euro_call(const S& s, const S& tau, double strike, double r, double sigma,
            double q) {
    using std::exp;
    if (value_of(tau) <= 0.0) {
        const double nd = terminal_cdf_branch(value_of(s), strike);
        return nd * (s - strike);
    }
    const auto d = dfamily(s, tau, strike, r, q, sigma);
    return s * exp(-q * tau) * norm_cdf(d.d1) -
           strike * exp(-r * tau) * norm_cdf(d.d2);
}

/// European call on the maximum of two dividend-paying assets (three-term
/// bivariate-CDF formula). sigma12 = 0 degenerates to a single driver.
template <class S>
S euro_call_on_max(const S& s1, const S& s2, const S& tau, double strike,
                   double r, double sigma1, double sigma2, double q1,
                   double q2, double rho) {
    using std::exp;
    using std::log;
    using std::sqrt;
    if (value_of(tau) <= 0.0) {
        const S m = value_of(s1) >= value_of(s2) ? s1 : s2;
        const double nd = terminal_cdf_branch(value_of(m), strike);
        return nd * (m - strike);
    }
    const double s12_sq = sigma1 * sigma1 - 2.0 * rho * sigma1 * sigma2 +
                          sigma2 * sigma2;
    if (s12_sq <= 1e-14 * (sigma1 * sigma1 + sigma2 * sigma2)) {
        // Perfectly co-monotone assets: the larger forward drives the payoff.
        const double w1 = value_of(s1) * std::exp(-q1 * value_of(tau));
        const double w2 = value_of(s2) * std::exp(-q2 * value_of(tau));
        return w1 >= w2 ? euro_call(s1, tau, strike, r, sigma1, q1)
                        : euro_call(s2, tau, strike, r, sigma2, q2);
    }
    const double sigma12 = std::sqrt(s12_sq);
    const double rho1 = (sigma1 - rho * sigma2) / sigma12;
    const double rho2 = (sigma2 - rho * sigma1) / sigma12;

    const S sqrt_tau = sqrt(tau);
    const S s1_safe = floor_at(s1, kLogFloorRel * strike);
    const S s2_safe = floor_at(s2, kLogFloorRel * strike);

    auto dk = [&](const S& s, double sigma, double q) {
        // d1/d2 against the strike
        const S log_m = log(s * (1.0 / strike));
        DFamily<S> d;
        d.d1 = (log_m + (r - q + 0.5 * sigma * sigma) * tau) /
               (sigma * sqrt_tau);
        d.d2 = d.d1 - sigma * sqrt_tau;
        return d;
    };
    auto dx = [&](const S& si, const S& sj, double qi, double qj) {
        // d1'/d2' between the assets with volatility sigma12
        const S log_m = log(si / sj);
        DFamily<S> d;
        d.d1 = (log_m + (qj - qi + 0.5 * s12_sq) * tau) / (sigma12 * sqrt_tau);
        d.d2 = d.d1 - sigma12 * sqrt_tau;
        return d;
    };

    const auto da = dk(s1_safe, sigma1, q1);
    const auto db = dk(s2_safe, sigma2, q2);
    const auto dab = dx(s1_safe, s2_safe, q1, q2);
    const auto dba = dx(s2_safe, s1_safe, q2, q1);

    return s1 * exp(-q1 * tau) * bivariate_normal_cdf(da.d1, dab.d1, rho1) +
           s2 * exp(-q2 * tau) * bivariate_normal_cdf(db.d1, dba.d1, rho2) -
           strike * exp(-r * tau) *
               (1.0 - bivariate_normal_cdf(-da.d2, -db.d2, rho));
}

/// Effective (volatility, dividend) of the geometric mean of the n assets:
/// sigma_I^2 = (1/n^2) sum rho_ij sigma_i sigma_j,
/// q_I = (1/n) sum (q_i + sigma_i^2/2) - sigma_I^2/2.
std::pair<double, double> geometric_reduction(const MarketParams& params,
                                              int n);

/// Geometric mean lifted through the scalar type (zero floor inside logs).
template <class S>
S geometric_mean_price(const S* s, int n, double strike) {
    using std::exp;
    using std::log;
    S acc = log(floor_at(s[0], kLogFloorRel * strike));
    for (int i = 1; i < n; ++i)
        acc = acc + log(floor_at(s[i], kLogFloorRel * strike));
    return exp(acc * (1.0 / n));
}

// MarketParams front-ends (single evaluation, double precision). Negative
// tau throws; n mismatches throw.
double european_put(const MarketParams& params, double strike, double s,
                    double tau);
double european_call_div(const MarketParams& params, double strike, double s,
                         double tau);
double european_call_no_div(const MarketParams& params, double strike,
                            double s, double tau);
double european_call_on_max(const MarketParams& params, double strike,
                            double s1, double s2, double tau);

/// European price of a supported contract at time to maturity tau.
double european_price(const MarketParams& params, const OptionContract& contract,
                      const VectorXd& s, double tau);

}  // namespace amopt

#endif  // AMOPT_ANALYTIC_HPP
