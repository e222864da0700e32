#ifndef AMOPT_LSM_HPP
#define AMOPT_LSM_HPP

#include <cstdint>

#include "amopt/types.hpp"

namespace amopt {

/// Longstaff-Schwartz least-squares Monte Carlo. Exact GBM stepping on the
/// exercise dates with Cholesky-correlated increments; regression of the
/// discounted continuation on in-the-money paths with monomials up to
/// `basis_degree` per asset (plus the s1*s2 cross term for two assets).
struct LSMSpec {
    int paths = 10000;
    int exercise_dates = 400;
    int basis_degree = 3;
    std::uint64_t seed = 0;
    ExerciseStyle style = ExerciseStyle::American;
};

struct LsmResult {
    double price = 0.0;
    double std_error = 0.0;
};

LsmResult lsm_price(const MarketParams& params, const OptionContract& contract,
                    const LSMSpec& spec, const VectorXd& s0, double tau,
                    int threads = 0);

}  // namespace amopt

#endif  // AMOPT_LSM_HPP
