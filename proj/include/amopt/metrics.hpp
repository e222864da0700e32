#ifndef AMOPT_METRICS_HPP
#define AMOPT_METRICS_HPP

#include <optional>
#include <vector>

#include "amopt/types.hpp"

namespace amopt {

struct ErrorReport {
    double rel_l2 = 0.0;
    double mae = 0.0;
    Eigen::Index samples = 0;
};

/// sqrt(sum (ref - cand)^2) / sqrt(sum ref^2) on identical grids.
double rel_l2(const PriceSurface& reference, const PriceSurface& candidate);

/// max |ref - cand| on identical grids.
double mae(const PriceSurface& reference, const PriceSurface& candidate);

ErrorReport error_report(const PriceSurface& reference,
                         const PriceSurface& candidate);

/// Signed difference field reference - candidate.
PriceSurface pointwise_diff(const PriceSurface& reference,
                            const PriceSurface& candidate);

enum class BoundarySide { PutBelow, CallAbove };

/// Optimal exercise boundary per time tick; absent ticks carry no value.
struct BoundaryCurve {
    VectorXd t;
    std::vector<std::optional<double>> s_star;
    BoundarySide side = BoundarySide::PutBelow;
};

/// Extracts S*(t) from a single-asset surface: per time tick the sup (put)
/// or inf (call, scanned above the strike) of the grid prices where
/// |V - payoff| <= tolerance, refined by one bisection level between
/// adjacent ticks. Empty stopping sets record as absent.
BoundaryCurve free_boundary_1d(const PriceSurface& surface,
                               const OptionContract& contract,
                               double tolerance);

/// Two-asset call-on-max boundaries at a fixed time slice: for each s2 tick
/// the inf of s1 inside the region where asset 1 is the maximum (scanned at
/// s1 >= max(s2, K)) with |V - payoff| <= tolerance; and symmetrically for
/// S2*. Returned as two curves indexed by the opposite asset's ticks.
struct BoundaryCurve2d {
    VectorXd s2_ticks;
    std::vector<std::optional<double>> s1_star;
    VectorXd s1_ticks;
    std::vector<std::optional<double>> s2_star;
    double t = 0.0;
};

BoundaryCurve2d free_boundary_2d(const PriceSurface& surface,
                                 const OptionContract& contract,
                                 Eigen::Index t_index, double tolerance);

}  // namespace amopt

#endif  // AMOPT_METRICS_HPP
