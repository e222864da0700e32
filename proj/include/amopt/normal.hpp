#ifndef AMOPT_NORMAL_HPP
#define AMOPT_NORMAL_HPP

#include <Eigen/Dense>

#include "amopt/jet.hpp"

namespace amopt {

/// Standard normal density.
double norm_pdf(double x);

/// Standard normal CDF via the complementary error function. Absolute error
/// below 1e-15. NaN input throws NumericsError; +/-infinity map to 1 / 0.
double norm_cdf(double x);

/// Cumulative bivariate standard normal P(X <= x, Y <= y) with correlation
/// rho, after Genz's transformed Gauss-Legendre scheme (6/12/20 nodes chosen
/// by |rho|, separate expansion for |rho| > 0.925). |rho| > 1 throws.
double bivariate_normal_cdf(double x, double y, double rho);

/// Gauss-Legendre nodes and weights on [-1, 1], computed once per order by
/// Newton iteration on the Legendre polynomial.
struct GaussLegendre {
    Eigen::VectorXd x;
    Eigen::VectorXd w;
};
const GaussLegendre& gauss_legendre(int order);

// Jet lifts. norm_cdf needs N' = phi and N'' = -x phi; the bivariate lift
// uses the closed-form partials of N2 in (x, y).
inline Jet norm_cdf(const Jet& x) {
    const double p = norm_pdf(x.v);
    return jet_chain(x, norm_cdf(x.v), p, -x.v * p);
}

Jet bivariate_normal_cdf(const Jet& x, const Jet& y, double rho);

}  // namespace amopt

#endif  // AMOPT_NORMAL_HPP
