#ifndef AMOPT_TERMINAL_HPP
#define AMOPT_TERMINAL_HPP

#include <string>

#include "amopt/analytic.hpp"
#include "amopt/types.hpp"

namespace amopt {

enum class G1Kind { TimeToMaturity };

/// The exact terminal functions paired with each experiment. Every kind
/// satisfies g2(s, T) = payoff(s) to machine precision; the Taylor kinds
/// additionally carry the sqrt(tau) singularity of the European value.
enum class G2Kind {
    EuroCallSqrt,     // 1/2 (s - K + sqrt(s^2 + K^2 - 2 s K e^{-r tau}))
    PutV1,            // N(d0~) (K e^{-r tau} - s)
    PutV1V2,          // PutV1 + second Taylor term
    PutExactVe,       // European put value itself
    CallDivTaylor,    // dividend call, first-order Taylor pair
    GeoMeanPutTaylor, // geometric-mean put via the (sigma_I, q_I) reduction
    MaxCallExactVe,   // European call-on-max value itself
};

std::string to_string(G2Kind kind);
G2Kind g2_kind_from_string(const std::string& name);

struct TerminalPair {
    G1Kind g1 = G1Kind::TimeToMaturity;
    G2Kind g2 = G2Kind::PutV1V2;
    OptionContract contract;
    MarketParams params;
};

/// Checks g2/contract compatibility; returns a message or empty string.
std::string terminal_pair_check(const TerminalPair& pair);

template <class S>
S g1_eval(const TerminalPair& pair, const S& t) {
    if (value_of(t) > pair.contract.maturity + 1e-12)
        throw ValidationError("g1_eval: t beyond maturity");
    switch (pair.g1) {
        case G1Kind::TimeToMaturity:
            return pair.contract.maturity - t;
    }
    throw ValidationError("g1_eval: unknown kind");
}

namespace detail {

// First-order Taylor pair of the put/call European value around d0. The
// put uses the paper's q = 0 tilde-d family; the call carries the dividend.
template <class S>
S put_taylor(const S& s, const S& tau, double strike, double r, double sigma,
             bool with_second_term) {
    using std::exp;
    using std::log;
    using std::sqrt;
    if (value_of(tau) <= 0.0) {
        const double nd = terminal_cdf_branch(strike, value_of(s));
        return nd * (strike - s);
    }
    const S sqrt_tau = sqrt(tau);
    const S s_safe = floor_at(s, kLogFloorRel * strike);
    const S d0 = (log(s_safe * (1.0 / strike)) + r * tau) * (-1.0) /
                 (sigma * sqrt_tau);
    const S disc_k = strike * exp(-r * tau);
    S v = norm_cdf(d0) * (disc_k - s);
    if (with_second_term) {
        constexpr double inv_2_sqrt_2pi = 0.19947114020071633897;
        v = v + (sigma * inv_2_sqrt_2pi) * sqrt_tau * exp(-0.5 * d0 * d0) *
                    (disc_k + s);
    }
    return v;
}

template <class S>
S call_div_taylor(const S& s, const S& tau, double strike, double r,
                  double sigma, double q) {
    using std::exp;
    using std::log;
    using std::sqrt;
    if (value_of(tau) <= 0.0) {
        const double nd = terminal_cdf_branch(value_of(s), strike);
        return nd * (s - strike);
    }
    const S sqrt_tau = sqrt(tau);
    const S s_safe = floor_at(s, kLogFloorRel * strike);
    const S d0 = (log(s_safe * (1.0 / strike)) + (r - q) * tau) /
                 (sigma * sqrt_tau);
    const S fwd = s * exp(-q * tau);
    const S disc_k = strike * exp(-r * tau);
    constexpr double inv_2_sqrt_2pi = 0.19947114020071633897;
    return norm_cdf(d0) * (fwd - disc_k) +
           (sigma * inv_2_sqrt_2pi) * sqrt_tau * exp(-0.5 * d0 * d0) *
               (fwd + disc_k);
}

template <class S>
S geo_mean_put_taylor(const S* s, int n, const S& tau, double strike,
                      double r, double sigma_i, double q_i) {
    using std::exp;
    using std::log;
    using std::sqrt;
    const S mean = geometric_mean_price(s, n, strike);
    if (value_of(tau) <= 0.0) {
        const double nd = terminal_cdf_branch(strike, value_of(mean));
        return nd * (strike - mean);
    }
    const S sqrt_tau = sqrt(tau);
    const S mean_safe = floor_at(mean, kLogFloorRel * strike);
    const S d0 = (log(mean_safe * (1.0 / strike)) + (r - q_i) * tau) * (-1.0) /
                 (sigma_i * sqrt_tau);
    const S disc_k = strike * exp(-r * tau);
    constexpr double inv_2_sqrt_2pi = 0.19947114020071633897;
    return norm_cdf(d0) * (disc_k - mean * exp(-q_i * tau)) +
           (sigma_i * inv_2_sqrt_2pi) * sqrt_tau * exp(-0.5 * d0 * d0) *
               (disc_k + mean);
}

template <class S>
S euro_call_sqrt(const S& s, const S& tau, double strike, double r) {
    using std::exp;
    using std::sqrt;
    if (value_of(tau) <= 0.0) {
        const double nd = terminal_cdf_branch(value_of(s), strike);
        return nd * (s - strike);
    }
    const S root =
        sqrt(s * s + strike * strike - (2.0 * strike) * s * exp(-r * tau));
    return 0.5 * (s - strike + root);
}

}  // namespace detail

/// Evaluates g2 at (s, t); the scalar type carries the input derivatives.
template <class S>
S g2_eval(const TerminalPair& pair, const S* s, int n, const S& t) {
    const auto& c = pair.contract;
    const auto& m = pair.params;
    const S tau = c.maturity - t;
    switch (pair.g2) {
        case G2Kind::EuroCallSqrt:
            return detail::euro_call_sqrt(s[0], tau, c.strike, m.r);
        case G2Kind::PutV1:
            return detail::put_taylor(s[0], tau, c.strike, m.r, m.sigma[0],
                                      false);
        case G2Kind::PutV1V2:
            return detail::put_taylor(s[0], tau, c.strike, m.r, m.sigma[0],
                                      true);
        case G2Kind::PutExactVe:
            return euro_put(s[0], tau, c.strike, m.r, m.sigma[0], m.q[0]);
        case G2Kind::CallDivTaylor:
            return detail::call_div_taylor(s[0], tau, c.strike, m.r,
                                           m.sigma[0], m.q[0]);
        case G2Kind::GeoMeanPutTaylor: {
            const auto [sigma_i, q_i] = geometric_reduction(m, n);
            return detail::geo_mean_put_taylor(s, n, tau, c.strike, m.r,
                                               sigma_i, q_i);
        }
        case G2Kind::MaxCallExactVe:
            return euro_call_on_max(s[0], s[1], tau, c.strike, m.r, m.sigma[0],
                                    m.sigma[1], m.q[0], m.q[1], m.rho(0, 1));
    }
    throw ValidationError("g2_eval: unknown kind");
}

}  // namespace amopt

#endif  // AMOPT_TERMINAL_HPP
