#ifndef AMOPT_LATTICE_HPP
#define AMOPT_LATTICE_HPP

#include "amopt/types.hpp"

namespace amopt {

/// Binomial lattice resolution: N steps span the full contract maturity, so
/// a query at time-to-maturity tau uses round(N tau / T) steps of the same
/// size.
struct LatticeSpec {
    int steps = 4000;
    ExerciseStyle style = ExerciseStyle::American;
};

/// Cox-Ross-Rubinstein price of a single-asset option at spot s0 and time to
/// maturity tau. Throws when the risk-neutral probability leaves (0, 1).
double bt_price_1d(const MarketParams& params, const OptionContract& contract,
                   const LatticeSpec& spec, double s0, double tau);

/// Boyle-Evnine-Gibbs two-asset lattice price (four branches per node with
/// correlation-matched probabilities).
double bt_price_2d(const MarketParams& params, const OptionContract& contract,
                   const LatticeSpec& spec, double s1, double s2, double tau);

/// Lattice surface over (s_ticks x t_ticks): one tree per spot tick, slices
/// read at the aligned backward steps (log-linear interpolation between the
/// two center nodes when a slice is odd).
PriceSurface bt_surface_1d(const MarketParams& params,
                           const OptionContract& contract,
                           const LatticeSpec& spec, const VectorXd& s_ticks,
                           const VectorXd& t_ticks, int threads = 0);

/// Two-asset surface at the requested slices: a single lattice seeded at the
/// window center, bilinear interpolation in log-price; query points outside
/// the slice span fall back to per-point trees.
PriceSurface bt_surface_2d(const MarketParams& params,
                           const OptionContract& contract,
                           const LatticeSpec& spec, const VectorXd& s1_ticks,
                           const VectorXd& s2_ticks, const VectorXd& t_ticks,
                           int threads = 0);

/// Geometric-mean option priced on the reduced one-dimensional process
/// (I0, sigma_I, q_I) with a CRR lattice.
double reduced_reference(const MarketParams& params,
                         const OptionContract& contract,
                         const LatticeSpec& spec, const VectorXd& s0,
                         double tau);

}  // namespace amopt

#endif  // AMOPT_LATTICE_HPP
