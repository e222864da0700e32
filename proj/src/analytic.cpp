#include "amopt/analytic.hpp"

namespace amopt {

namespace {
void check_tau(double tau) {
    if (!(tau >= 0.0)) throw ValidationError("negative time to maturity");
}
}  // namespace

std::pair<double, double> geometric_reduction(const MarketParams& params,
                                              int n) {
    if (n < 1 || n > params.n_assets())
        throw ValidationError("geometric_reduction: bad dimension");
    double var_i = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            var_i += params.rho(i, j) * params.sigma[i] * params.sigma[j];
    var_i /= static_cast<double>(n) * static_cast<double>(n);
    double q_i = 0.0;
    for (int i = 0; i < n; ++i)
        q_i += params.q[i] + 0.5 * params.sigma[i] * params.sigma[i];
    q_i = q_i / n - 0.5 * var_i;
    return {std::sqrt(var_i), q_i};
}

double european_put(const MarketParams& params, double strike, double s,
                    double tau) {
    check_tau(tau);
    return euro_put(s, tau, strike, params.r, params.sigma[0], params.q[0]);
}

double european_call_div(const MarketParams& params, double strike, double s,
                         double tau) {
    check_tau(tau);
    return euro_call(s, tau, strike, params.r, params.sigma[0], params.q[0]);
}

double european_call_no_div(const MarketParams& params, double strike,
                            double s, double tau) {
    check_tau(tau);
    return euro_call(s, tau, strike, params.r, params.sigma[0], 0.0);
}

double european_call_on_max(const MarketParams& params, double strike,
                            double s1, double s2, double tau) {
    check_tau(tau);
    if (params.n_assets() != 2)
        throw ValidationError("european_call_on_max: needs 2 assets");
    return euro_call_on_max(s1, s2, tau, strike, params.r, params.sigma[0],
                            params.sigma[1], params.q[0], params.q[1],
                            params.rho(0, 1));
}

double european_price(const MarketParams& params,
                      const OptionContract& contract, const VectorXd& s,
                      double tau) {
    check_tau(tau);
    switch (contract.kind) {
        case PayoffKind::PutVanilla:
            return european_put(params, contract.strike, s[0], tau);
        case PayoffKind::CallVanilla:
            return european_call_div(params, contract.strike, s[0], tau);
        case PayoffKind::CallOnMax:
            return european_call_on_max(params, contract.strike, s[0], s[1],
                                        tau);
        case PayoffKind::PutGeometricMean: {
            const auto [sigma_i, q_i] =
                geometric_reduction(params, contract.n_assets);
            double i0 = geometric_mean_price(s.data(), contract.n_assets,
                                             contract.strike);
            return euro_put(i0, tau, contract.strike, params.r, sigma_i, q_i);
        }
        default:
            throw UnsupportedPayoffError("no European formula for kind " +
                                         to_string(contract.kind));
    }
}

}  // namespace amopt
