#include "amopt/fd.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace amopt {

namespace {

struct Tridiag {
    // a: sub, b: diag, c: super (a[0] and c[last] unused)
    std::vector<double> a, b, c;
};

// Plain Thomas solve, rhs overwritten with the solution.
void thomas_solve(const Tridiag& m, std::vector<double>& rhs) {
    const size_t n = rhs.size();
    std::vector<double> cp(n);
    double beta = m.b[0];
    if (beta == 0.0) throw NumericsError("fd_price: singular matrix");
    rhs[0] /= beta;
    for (size_t i = 1; i < n; ++i) {
        cp[i] = m.c[i - 1] / beta;
        beta = m.b[i] - m.a[i] * cp[i];
        if (beta == 0.0) throw NumericsError("fd_price: singular matrix");
        rhs[i] = (rhs[i] - m.a[i] * rhs[i - 1]) / beta;
    }
    for (size_t i = n - 1; i-- > 0;) rhs[i] -= cp[i + 1] * rhs[i + 1];
}

// Brennan-Schwartz projected elimination. For a put the exercise region sits
// at low s: eliminate downward from the top row, then substitute upward
// clamping against the obstacle. Mirrored for calls.
void brennan_schwartz_solve(const Tridiag& m, std::vector<double>& rhs,
                            const std::vector<double>& obstacle,
                            bool exercise_low) {
    const size_t n = rhs.size();
    std::vector<double> bb(n), dd(n);
    if (exercise_low) {
        bb[n - 1] = m.b[n - 1];
        dd[n - 1] = rhs[n - 1];
        for (size_t i = n - 1; i-- > 0;) {
            const double w = m.c[i] / bb[i + 1];
            bb[i] = m.b[i] - w * m.a[i + 1];
            dd[i] = rhs[i] - w * dd[i + 1];
        }
        rhs[0] = std::max(dd[0] / bb[0], obstacle[0]);
        for (size_t i = 1; i < n; ++i)
            rhs[i] = std::max((dd[i] - m.a[i] * rhs[i - 1]) / bb[i],
                              obstacle[i]);
    } else {
        bb[0] = m.b[0];
        dd[0] = rhs[0];
        for (size_t i = 1; i < n; ++i) {
            const double w = m.a[i] / bb[i - 1];
            bb[i] = m.b[i] - w * m.c[i - 1];
            dd[i] = rhs[i] - w * dd[i - 1];
        }
        rhs[n - 1] = std::max(dd[n - 1] / bb[n - 1], obstacle[n - 1]);
        for (size_t i = n - 1; i-- > 0;)
            rhs[i] = std::max((dd[i] - m.c[i] * rhs[i + 1]) / bb[i],
                              obstacle[i]);
    }
}

void psor_solve(const Tridiag& m, std::vector<double>& rhs,
                const std::vector<double>& obstacle,
                const std::vector<double>& start) {
    const size_t n = rhs.size();
    std::vector<double> x = start;
    const double omega = 1.2;
    for (int sweep = 0; sweep < 20000; ++sweep) {
        double worst = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double y = rhs[i];
            if (i > 0) y -= m.a[i] * x[i - 1];
            if (i + 1 < n) y -= m.c[i] * x[i + 1];
            y /= m.b[i];
            const double xn = std::max(x[i] + omega * (y - x[i]), obstacle[i]);
            worst = std::max(worst, std::abs(xn - x[i]));
            x[i] = xn;
        }
        if (worst < 1e-10) break;
    }
    rhs = x;
}

}  // namespace

PriceSurface fd_price(const MarketParams& params, const OptionContract& contract,
                      const FDSpec& spec, const VectorXd& s_ticks,
                      const VectorXd& t_ticks) {
    if (contract.n_assets != 1)
        throw ValidationError("fd_price: single-asset only");
    if (spec.time_steps < 1 || spec.space_nodes < 3)
        throw ValidationError("fd_price: grid too small");

    const double strike = contract.strike;
    const double maturity = contract.maturity;
    const double s_max = spec.s_max_mult * strike;
    const int m = spec.space_nodes;  // interior nodes 1..m-2
    const double ds = s_max / (m - 1);
    // the N time steps span the widest horizon the tick set asks for;
    // an all-terminal tick set degenerates to the payoff row
    const double span = maturity - t_ticks.minCoeff();
    const double dtau =
        span > 0.0 ? span / spec.time_steps : maturity / spec.time_steps;
    const bool is_put = contract.kind == PayoffKind::PutVanilla;
    const bool american = spec.style == ExerciseStyle::American;
    const double r = params.r, q = params.q[0], sigma = params.sigma[0];

    // payoff and obstacle on the grid
    std::vector<double> payoff(m);
    VectorXd s1(1);
    for (int i = 0; i < m; ++i) {
        s1[0] = i * ds;
        payoff[i] = payoff_eval(contract, s1);
    }

    // implicit system for the interior: (I - dtau A) V_new = V_old
    Tridiag sys;
    sys.a.resize(m - 2);
    sys.b.resize(m - 2);
    sys.c.resize(m - 2);
    for (int i = 1; i <= m - 2; ++i) {
        const double s = i * ds;
        const double diff = 0.5 * sigma * sigma * s * s / (ds * ds);
        const double drift = 0.5 * (r - q) * s / ds;
        const double lower = diff - drift;
        const double upper = diff + drift;
        sys.a[i - 1] = -dtau * lower;
        sys.b[i - 1] = 1.0 + dtau * (2.0 * diff + r);
        sys.c[i - 1] = -dtau * upper;
    }

    std::vector<double> v = payoff;  // values at tau = 0
    // time slices to keep: map each query t to the nearest step index
    std::vector<int> keep_at(t_ticks.size());
    for (Eigen::Index j = 0; j < t_ticks.size(); ++j)
        keep_at[j] = std::max(
            0, std::min(spec.time_steps,
                        static_cast<int>(std::lround(
                            (maturity - t_ticks[j]) / dtau))));
    std::vector<std::vector<double>> slices(t_ticks.size());
    for (Eigen::Index j = 0; j < t_ticks.size(); ++j)
        if (keep_at[j] == 0) slices[j] = v;

    std::vector<double> rhs(m - 2), obstacle(m - 2);
    for (int i = 0; i < m - 2; ++i) obstacle[i] = payoff[i + 1];

    for (int step = 1; step <= spec.time_steps; ++step) {
        const double tau = step * dtau;
        // Dirichlet boundaries; American values clamp to intrinsic
        double v_lo, v_hi;
        if (is_put) {
            v_lo = strike * std::exp(-r * tau);
            v_hi = 0.0;
            if (american) v_lo = std::max(v_lo, payoff.front());
        } else {
            v_lo = 0.0;
            v_hi = s_max * std::exp(-q * tau) - strike * std::exp(-r * tau);
            if (american) v_hi = std::max(v_hi, payoff.back());
        }
        for (int i = 0; i < m - 2; ++i) rhs[i] = v[i + 1];
        rhs[0] -= sys.a[0] * v_lo;
        rhs[m - 3] -= sys.c[m - 3] * v_hi;

        if (!american) {
            thomas_solve(sys, rhs);
        } else if (spec.scheme == FdScheme::BrennanSchwartz) {
            brennan_schwartz_solve(sys, rhs, obstacle, is_put);
        } else {
            std::vector<double> start(v.begin() + 1, v.end() - 1);
            psor_solve(sys, rhs, obstacle, start);
        }
        v[0] = v_lo;
        v[m - 1] = v_hi;
        for (int i = 0; i < m - 2; ++i) v[i + 1] = rhs[i];
        if (american)
            for (int i = 0; i < m; ++i) v[i] = std::max(v[i], payoff[i]);

        for (Eigen::Index j = 0; j < t_ticks.size(); ++j)
            if (keep_at[j] == step) slices[j] = v;
    }

    PriceSurface surf;
    surf.s_axes = {s_ticks};
    surf.t_axis = t_ticks;
    surf.values.resize(s_ticks.size() * t_ticks.size());
    for (Eigen::Index j = 0; j < t_ticks.size(); ++j) {
        const auto& slice = slices[j];
        for (Eigen::Index i = 0; i < s_ticks.size(); ++i) {
            const double x = std::clamp(s_ticks[i] / ds, 0.0,
                                        static_cast<double>(m - 1));
            const int i0 = std::min(static_cast<int>(x), m - 2);
            const double f = x - i0;
            surf.at(i, j) = (1.0 - f) * slice[i0] + f * slice[i0 + 1];
        }
    }
    return surf;
}

double fd_price_at(const MarketParams& params, const OptionContract& contract,
                   const FDSpec& spec, double s0, double tau) {
    VectorXd s_ticks(1), t_ticks(1);
    s_ticks << s0;
    t_ticks << contract.maturity - tau;
    return fd_price(params, contract, spec, s_ticks, t_ticks).values[0];
}

}  // namespace amopt
