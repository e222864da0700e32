#include "amopt/lattice.hpp"

#include <cmath>
#include <functional>
#include <thread>
#include <vector>

#include "amopt/analytic.hpp"

namespace amopt {

namespace {

struct CrrCoeffs {
    double u, d, p, disc, dt;
};

CrrCoeffs crr_coeffs(const MarketParams& params, double tau, int steps) {
    CrrCoeffs c;
    c.dt = tau / steps;
    c.u = std::exp(params.sigma[0] * std::sqrt(c.dt));
    c.d = 1.0 / c.u;
    const double growth = std::exp((params.r - params.q[0]) * c.dt);
    c.p = (growth - c.d) / (c.u - c.d);
    c.disc = std::exp(-params.r * c.dt);
    if (!(c.p > 0.0 && c.p < 1.0))
        throw NumericsError(
            "bt_price_1d: risk-neutral probability outside (0,1); increase N");
    return c;
}

// Backward induction storing center-node values at the requested
// steps-from-maturity; slot k of `record` receives the slice value at s0.
void crr_induct(const MarketParams& params, const OptionContract& contract,
                const LatticeSpec& spec, double s0, int steps, double tau,
                const std::vector<int>& record_at, std::vector<double>& record) {
    const CrrCoeffs c = crr_coeffs(params, tau, steps);
    const bool american = spec.style == ExerciseStyle::American;
    VectorXd s1(1);

    std::vector<double> value(steps + 1), spot(steps + 1);
    for (int j = 0; j <= steps; ++j) {
        spot[j] = s0 * std::pow(c.u, 2 * j - steps);
        s1[0] = spot[j];
        value[j] = payoff_eval(contract, s1);
    }
    auto record_slice = [&](int k) {
        for (size_t idx = 0; idx < record_at.size(); ++idx) {
            if (record_at[idx] != k) continue;
            if (k % 2 == 0) {
                record[idx] = value[k / 2];
            } else {
                // s0 is between the two center nodes; log-linear blend
                record[idx] = 0.5 * (value[k / 2] + value[k / 2 + 1]);
            }
        }
    };
    record_slice(steps);
    for (int k = steps - 1; k >= 0; --k) {
        for (int j = 0; j <= k; ++j) {
            spot[j] *= c.u;  // node (k, j) spot = s0 u^(2j - k)
            double cont = c.disc * (c.p * value[j + 1] + (1.0 - c.p) * value[j]);
            if (american) {
                s1[0] = spot[j];
                cont = std::max(cont, payoff_eval(contract, s1));
            }
            value[j] = cont;
        }
        record_slice(k);
    }
}

void run_parallel(int jobs, int threads, const std::function<void(int)>& fn) {
    threads = threads > 0 ? threads
                          : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, jobs));
    if (threads == 1) {
        for (int i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&, w]() {
            for (int i = w; i < jobs; i += threads) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

double bt_price_1d(const MarketParams& params, const OptionContract& contract,
                   const LatticeSpec& spec, double s0, double tau) {
    if (!(tau > 0.0)) throw ValidationError("bt_price_1d: tau must be > 0");
    if (contract.n_assets != 1)
        throw ValidationError("bt_price_1d: single-asset only");
    const int steps = spec.steps;  // N steps span the queried horizon
    std::vector<int> record_at{0};
    std::vector<double> record(1, 0.0);
    crr_induct(params, contract, spec, s0, steps, tau, record_at, record);
    return record[0];
}

PriceSurface bt_surface_1d(const MarketParams& params,
                           const OptionContract& contract,
                           const LatticeSpec& spec, const VectorXd& s_ticks,
                           const VectorXd& t_ticks, int threads) {
    PriceSurface surf;
    surf.s_axes = {s_ticks};
    surf.t_axis = t_ticks;
    surf.values.resize(s_ticks.size() * t_ticks.size());

    const double maturity = contract.maturity;
    // the N steps span the widest horizon requested by the tick set
    const double span = maturity - t_ticks.minCoeff();
    const double dt = span / spec.steps;
    // slice index counts from the tree root; maturity sits at max_k
    std::vector<int> from_maturity(t_ticks.size());
    int max_k = 1;
    for (Eigen::Index j = 0; j < t_ticks.size(); ++j) {
        from_maturity[j] = std::max(
            0, static_cast<int>(std::lround((maturity - t_ticks[j]) / dt)));
        max_k = std::max(max_k, from_maturity[j]);
    }
    std::vector<int> record_at(t_ticks.size());
    for (Eigen::Index j = 0; j < t_ticks.size(); ++j)
        record_at[j] = max_k - from_maturity[j];

    run_parallel(
        static_cast<int>(s_ticks.size()), threads, [&](int i) {
            std::vector<double> record(record_at.size(), 0.0);
            crr_induct(params, contract, spec, s_ticks[i], max_k,
                       max_k * dt, record_at, record);
            for (Eigen::Index j = 0; j < t_ticks.size(); ++j)
                surf.at(i, j) = record[j];
        });
    return surf;
}

namespace {

struct BegCoeffs {
    double u1, u2, puu, pud, pdu, pdd, disc, dt;
};

BegCoeffs beg_coeffs(const MarketParams& params, double tau, int steps) {
    BegCoeffs c;
    c.dt = tau / steps;
    const double sq = std::sqrt(c.dt);
    const double s1 = params.sigma[0], s2 = params.sigma[1];
    const double mu1 = params.r - params.q[0] - 0.5 * s1 * s1;
    const double mu2 = params.r - params.q[1] - 0.5 * s2 * s2;
    const double rho = params.rho(0, 1);
    c.u1 = std::exp(s1 * sq);
    c.u2 = std::exp(s2 * sq);
    const double a1 = mu1 / s1 * sq;
    const double a2 = mu2 / s2 * sq;
    c.puu = 0.25 * (1.0 + rho + a1 + a2);
    c.pud = 0.25 * (1.0 - rho + a1 - a2);
    c.pdu = 0.25 * (1.0 - rho - a1 + a2);
    c.pdd = 0.25 * (1.0 + rho - a1 - a2);
    c.disc = std::exp(-params.r * c.dt);
    for (double p : {c.puu, c.pud, c.pdu, c.pdd})
        if (!(p > 0.0 && p < 1.0))
            throw NumericsError(
                "bt_price_2d: branch probability outside (0,1); increase N");
    return c;
}

// Full BEG induction from maturity over `steps`; returns the value grid of
// slice `stop_k` (stop_k+1 x stop_k+1, indexed by up-counts) together with
// the node spots.
void beg_induct(const MarketParams& params, const OptionContract& contract,
                const LatticeSpec& spec, double s1_0, double s2_0, int steps,
                double tau, int stop_k, MatrixXd& value_out) {
    const BegCoeffs c = beg_coeffs(params, tau, steps);
    const bool american = spec.style == ExerciseStyle::American;
    VectorXd s(2);
    std::vector<double> sp1(steps + 1), sp2(steps + 1);
    for (int i = 0; i <= steps; ++i) {
        sp1[i] = s1_0 * std::pow(c.u1, 2 * i - steps);
        sp2[i] = s2_0 * std::pow(c.u2, 2 * i - steps);
    }
    MatrixXd value(steps + 1, steps + 1);
    for (int i = 0; i <= steps; ++i)
        for (int j = 0; j <= steps; ++j) {
            s[0] = sp1[i];
            s[1] = sp2[j];
            value(i, j) = payoff_eval(contract, s);
        }
    for (int k = steps - 1; k >= stop_k; --k) {
        for (int i = 0; i <= k; ++i) {
            sp1[i] *= c.u1;
            if (i == 0)
                for (int j = 0; j <= k; ++j) sp2[j] *= c.u2;
            s[0] = sp1[i];
            for (int j = 0; j <= k; ++j) {
                double cont = c.disc * (c.puu * value(i + 1, j + 1) +
                                        c.pud * value(i + 1, j) +
                                        c.pdu * value(i, j + 1) +
                                        c.pdd * value(i, j));
                if (american) {
                    s[1] = sp2[j];
                    cont = std::max(cont, payoff_eval(contract, s));
                }
                value(i, j) = cont;
            }
        }
    }
    value_out = value.topLeftCorner(stop_k + 1, stop_k + 1);
}

}  // namespace

double bt_price_2d(const MarketParams& params, const OptionContract& contract,
                   const LatticeSpec& spec, double s1, double s2, double tau) {
    if (!(tau > 0.0)) throw ValidationError("bt_price_2d: tau must be > 0");
    if (contract.n_assets != 2)
        throw ValidationError("bt_price_2d: two-asset only");
    const int steps = spec.steps;  // N steps span the queried horizon
    MatrixXd value;
    beg_induct(params, contract, spec, s1, s2, steps, tau, 0, value);
    return value(0, 0);
}

PriceSurface bt_surface_2d(const MarketParams& params,
                           const OptionContract& contract,
                           const LatticeSpec& spec, const VectorXd& s1_ticks,
                           const VectorXd& s2_ticks, const VectorXd& t_ticks,
                           int threads) {
    PriceSurface surf;
    surf.s_axes = {s1_ticks, s2_ticks};
    surf.t_axis = t_ticks;
    surf.values.resize(s1_ticks.size() * s2_ticks.size() * t_ticks.size());

    // lattice seeded at the geometric center of the query window
    const double c1 = std::sqrt(s1_ticks[0] * s1_ticks[s1_ticks.size() - 1]);
    const double c2 = std::sqrt(s2_ticks[0] * s2_ticks[s2_ticks.size() - 1]);
    const double maturity = contract.maturity;
    const double span = maturity - t_ticks.minCoeff();
    const double dt = span / spec.steps;

    run_parallel(
        static_cast<int>(t_ticks.size()), threads, [&](int jt) {
            const double tau = maturity - t_ticks[jt];
            const int k = std::max(
                0, static_cast<int>(std::lround(tau / dt)));
            VectorXd s(2);
            if (k == 0) {
                for (Eigen::Index i = 0; i < s1_ticks.size(); ++i)
                    for (Eigen::Index j = 0; j < s2_ticks.size(); ++j) {
                        s << s1_ticks[i], s2_ticks[j];
                        surf.at2(i, j, jt) = payoff_eval(contract, s);
                    }
                return;
            }
            MatrixXd slice;
            beg_induct(params, contract, spec, c1, c2, spec.steps,
                       span, spec.steps - k, slice);
            const double l1 = params.sigma[0] * std::sqrt(dt);
            const double l2 = params.sigma[1] * std::sqrt(dt);
            const int kk = spec.steps - k;  // slice index (nodes kk+1)
            for (Eigen::Index i = 0; i < s1_ticks.size(); ++i) {
                // node index of s1 on the slice: log(s/c)/ (2 l) + kk/2
                const double x1 = std::log(s1_ticks[i] / c1) / (2.0 * l1) +
                                  0.5 * kk;
                for (Eigen::Index j = 0; j < s2_ticks.size(); ++j) {
                    const double x2 = std::log(s2_ticks[j] / c2) / (2.0 * l2) +
                                      0.5 * kk;
                    if (x1 < 0.0 || x1 > kk || x2 < 0.0 || x2 > kk) {
                        // outside the lattice span: dedicated small tree at
                        // the shared step size
                        LatticeSpec local = spec;
                        local.steps = std::max(
                            20, static_cast<int>(std::lround(
                                    spec.steps * tau / span)));
                        surf.at2(i, j, jt) =
                            bt_price_2d(params, contract, local, s1_ticks[i],
                                        s2_ticks[j], tau);
                        continue;
                    }
                    const int i0 = std::min(static_cast<int>(x1), kk - 1);
                    const int j0 = std::min(static_cast<int>(x2), kk - 1);
                    const double fx = x1 - i0, fy = x2 - j0;
                    surf.at2(i, j, jt) =
                        (1 - fx) * (1 - fy) * slice(i0, j0) +
                        fx * (1 - fy) * slice(i0 + 1, j0) +
                        (1 - fx) * fy * slice(i0, j0 + 1) +
                        fx * fy * slice(i0 + 1, j0 + 1);
                }
            }
        });
    return surf;
}

double reduced_reference(const MarketParams& params,
                         const OptionContract& contract,
                         const LatticeSpec& spec, const VectorXd& s0,
                         double tau) {
    if (contract.kind != PayoffKind::PutGeometricMean)
        throw ValidationError("reduced_reference: geometric-mean puts only");
    const int n = contract.n_assets;
    const auto [sigma_i, q_i] = geometric_reduction(params, n);
    double i0 = 1.0;
    for (int i = 0; i < n; ++i) i0 *= s0[i];
    i0 = std::pow(i0, 1.0 / n);

    MarketParams reduced = MarketParams::single(params.r, sigma_i, q_i);
    OptionContract put = contract;
    put.kind = PayoffKind::PutVanilla;
    put.n_assets = 1;
    return bt_price_1d(reduced, put, spec, i0, tau);
}

}  // namespace amopt
