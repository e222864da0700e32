#ifndef AMOPT_BAW_HPP
#define AMOPT_BAW_HPP

#include "amopt/types.hpp"

namespace amopt {

/// Barone-Adesi-Whaley quadratic approximation for American vanilla options.
/// The critical price solves the smooth-pasting condition by damped Newton
/// (tolerance 1e-8, at most 200 iterations) seeded at the perpetual-option
/// critical price, with a bracketing bisection fallback.
double baw_price(const MarketParams& params, const OptionContract& contract,
                 double s0, double tau);

}  // namespace amopt

#endif  // AMOPT_BAW_HPP
