#include "amopt/lsm.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <thread>
#include <vector>

namespace amopt {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double unit_open(std::mt19937_64& rng) {
    // (0, 1): top 53 bits shifted away from zero
    return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// Box-Muller pair; second value cached by the caller.
void gauss_pair(std::mt19937_64& rng, double& z0, double& z1) {
    const double u1 = unit_open(rng);
    const double u2 = unit_open(rng);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    z0 = radius * std::cos(2.0 * M_PI * u2);
    z1 = radius * std::sin(2.0 * M_PI * u2);
}

struct GaussStream {
    std::mt19937_64 rng;
    double cached = 0.0;
    bool has_cached = false;
    explicit GaussStream(std::uint64_t seed) : rng(seed) {}
    double next() {
        if (has_cached) {
            has_cached = false;
            return cached;
        }
        double z0, z1;
        gauss_pair(rng, z0, z1);
        cached = z1;
        has_cached = true;
        return z0;
    }
};

int basis_size(int n, int degree) {
    return 1 + n * degree + (n > 1 ? n * (n - 1) / 2 : 0);
}

void fill_basis(const double* s, int n, int degree, double inv_k, double* row) {
    int idx = 0;
    row[idx++] = 1.0;
    for (int i = 0; i < n; ++i) {
        const double x = s[i] * inv_k;
        double p = 1.0;
        for (int d = 0; d < degree; ++d) {
            p *= x;
            row[idx++] = p;
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            row[idx++] = (s[i] * inv_k) * (s[j] * inv_k);
}

}  // namespace

LsmResult lsm_price(const MarketParams& params, const OptionContract& contract,
                    const LSMSpec& spec, const VectorXd& s0, double tau,
                    int threads) {
    if (!(tau > 0.0)) throw ValidationError("lsm_price: tau must be > 0");
    if (spec.paths < 100) throw ValidationError("lsm_price: need >= 100 paths");
    if (spec.exercise_dates < 2)
        throw ValidationError("lsm_price: need >= 2 exercise dates");
    const int n = contract.n_assets;
    const int m = spec.paths;
    const int dates = spec.exercise_dates;
    const double dt = tau / dates;
    const double disc = std::exp(-params.r * dt);

    Eigen::LLT<MatrixXd> llt(params.rho);
    if (llt.info() != Eigen::Success) {
        // semi-definite correlations get a tiny diagonal lift
        llt.compute(params.rho + 1e-12 * MatrixXd::Identity(n, n));
        if (llt.info() != Eigen::Success)
            throw NumericsError("lsm_price: correlation Cholesky failed");
    }
    const MatrixXd chol = llt.matrixL();

    VectorXd drift(n), vol_sqdt(n);
    for (int i = 0; i < n; ++i) {
        drift[i] = (params.r - params.q[i] -
                    0.5 * params.sigma[i] * params.sigma[i]) *
                   dt;
        vol_sqdt[i] = params.sigma[i] * std::sqrt(dt);
    }

    // paths[k] is n x m at exercise date k+1
    std::vector<MatrixXd> paths(dates, MatrixXd(n, m));
    constexpr int kPathBlock = 8192;
    const int n_blocks = (m + kPathBlock - 1) / kPathBlock;
    int n_threads = threads > 0
                        ? threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, n_blocks));

    auto gen_block = [&](int b) {
        const int lo = b * kPathBlock;
        const int count = std::min(kPathBlock, m - lo);
        GaussStream gs(splitmix64(spec.seed + static_cast<std::uint64_t>(b)));
        VectorXd z(n), dz(n), cur(n);
        for (int p = 0; p < count; ++p) {
            cur = s0;
            for (int k = 0; k < dates; ++k) {
                for (int i = 0; i < n; ++i) z[i] = gs.next();
                dz.noalias() = chol * z;
                for (int i = 0; i < n; ++i)
                    cur[i] *= std::exp(drift[i] + vol_sqdt[i] * dz[i]);
                paths[k].col(lo + p) = cur;
            }
        }
    };
    if (n_threads == 1) {
        for (int b = 0; b < n_blocks; ++b) gen_block(b);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_threads; ++w)
            pool.emplace_back([&, w]() {
                for (int b = w; b < n_blocks; b += n_threads) gen_block(b);
            });
        for (auto& th : pool) th.join();
    }

    // backward induction
    VectorXd value(m);
    for (int p = 0; p < m; ++p)
        value[p] = payoff_eval(contract, paths[dates - 1].col(p));

    const bool american = spec.style == ExerciseStyle::American;
    const int nb = basis_size(n, spec.basis_degree);
    const double inv_k = 1.0 / contract.strike;
    std::vector<double> row(nb);
    VectorXd payoff_k(m);

    for (int k = dates - 2; k >= 0 && american; --k) {
        value *= disc;
        std::vector<int> itm;
        itm.reserve(m);
        for (int p = 0; p < m; ++p) {
            payoff_k[p] = payoff_eval(contract, paths[k].col(p));
            if (payoff_k[p] > 0.0) itm.push_back(p);
        }
        // too few in-the-money paths: continuation is the discounted future
        if (itm.size() < static_cast<size_t>(2 * nb)) continue;
        MatrixXd x(static_cast<Eigen::Index>(itm.size()), nb);
        VectorXd y(static_cast<Eigen::Index>(itm.size()));
        for (size_t idx = 0; idx < itm.size(); ++idx) {
            fill_basis(paths[k].col(itm[idx]).data(), n, spec.basis_degree,
                       inv_k, row.data());
            for (int c = 0; c < nb; ++c) x(static_cast<Eigen::Index>(idx), c) = row[c];
            y[static_cast<Eigen::Index>(idx)] = value[itm[idx]];
        }
        const MatrixXd xtx = x.transpose() * x;
        const VectorXd xty = x.transpose() * y;
        const VectorXd beta = xtx.ldlt().solve(xty);
        for (size_t idx = 0; idx < itm.size(); ++idx) {
            const int p = itm[idx];
            const double cont = x.row(static_cast<Eigen::Index>(idx)) * beta;
            if (payoff_k[p] > cont) value[p] = payoff_k[p];
        }
    }
    if (!american) value *= std::pow(disc, dates - 1);
    value *= disc;  // discount the first step back to today

    LsmResult res;
    res.price = value.mean();
    const double var =
        (value.array() - res.price).square().sum() / (m - 1);
    res.std_error = std::sqrt(var / m);
    return res;
}

}  // namespace amopt
