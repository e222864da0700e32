#ifndef AMOPT_FD_HPP
#define AMOPT_FD_HPP

#include "amopt/types.hpp"

namespace amopt {

enum class FdScheme { BrennanSchwartz, Psor };

/// Implicit finite differences on a uniform price grid over [0, s_max_mult*K]
/// with early exercise enforced either by the Brennan-Schwartz projected
/// elimination or by PSOR.
struct FDSpec {
    int time_steps = 400;
    int space_nodes = 401;
    double s_max_mult = 4.0;
    FdScheme scheme = FdScheme::BrennanSchwartz;
    ExerciseStyle style = ExerciseStyle::American;
};

/// Solves the single-asset problem and interpolates the solution onto the
/// query grid (linear in s; time ticks snap to the nearest solver step).
PriceSurface fd_price(const MarketParams& params, const OptionContract& contract,
                      const FDSpec& spec, const VectorXd& s_ticks,
                      const VectorXd& t_ticks);

/// Point query convenience wrapper.
double fd_price_at(const MarketParams& params, const OptionContract& contract,
                   const FDSpec& spec, double s0, double tau);

}  // namespace amopt

#endif  // AMOPT_FD_HPP
