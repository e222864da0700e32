#ifndef AMOPT_TYPES_HPP
#define AMOPT_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace amopt {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct UnsupportedPayoffError : Error {
    using Error::Error;
};

struct NumericsError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

struct DivergenceError : Error {
    using Error::Error;
};

struct GridMismatchError : Error {
    using Error::Error;
};

/// Payoff catalogue. Only the first four kinds are priced by this library;
/// the remaining kinds parse from configs but are rejected by validate().
enum class PayoffKind {
    PutVanilla,
    CallVanilla,
    PutGeometricMean,
    CallOnMax,
    CallOnMin,
    PutOnMax,
    PutOnMin,
    CallGeometricMean,
    CallArithmeticMean,
    PutArithmeticMean,
};

enum class ExerciseStyle { American, European };

bool payoff_kind_supported(PayoffKind kind);
std::string to_string(PayoffKind kind);
PayoffKind payoff_kind_from_string(const std::string& name);
std::string to_string(ExerciseStyle style);
ExerciseStyle style_from_string(const std::string& name);

/// Market parameters of the n-asset Black-Scholes-Merton model: risk-free
/// rate, per-asset volatilities and continuous dividend yields, and the
/// correlation matrix of the driving Brownian motions.
struct MarketParams {
    double r = 0.0;
    VectorXd sigma;
    VectorXd q;
    MatrixXd rho;

    int n_assets() const { return static_cast<int>(sigma.size()); }

    static MarketParams single(double r, double sigma, double q = 0.0);
    static MarketParams pair(double r, double sigma1, double sigma2, double q1,
                             double q2, double corr);
};

struct OptionContract {
    PayoffKind kind = PayoffKind::PutVanilla;
    double strike = 0.0;
    double maturity = 0.0;
    int n_assets = 1;
    ExerciseStyle style = ExerciseStyle::American;
};

/// Rectangular training / evaluation window in (s, t).
struct Domain {
    VectorXd s_lo;
    VectorXd s_hi;
    double t_lo = 0.0;
    double t_hi = 0.0;

    int n_assets() const { return static_cast<int>(s_lo.size()); }
};

/// Option values tabulated on a tensor grid (per-asset price ticks x time
/// ticks). values is stored with the time index slowest and the spatial
/// multi-index row-major (last axis fastest).
struct PriceSurface {
    std::vector<VectorXd> s_axes;
    VectorXd t_axis;
    VectorXd values;

    Eigen::Index spatial_size() const {
        Eigen::Index p = 1;
        for (const auto& ax : s_axes) p *= ax.size();
        return p;
    }
    Eigen::Index size() const { return spatial_size() * t_axis.size(); }

    // 1-d surface accessors
    double& at(Eigen::Index is, Eigen::Index it) {
        return values[it * s_axes[0].size() + is];
    }
    double at(Eigen::Index is, Eigen::Index it) const {
        return values[it * s_axes[0].size() + is];
    }
    // 2-d surface accessors (axis order s1, s2)
    double& at2(Eigen::Index i1, Eigen::Index i2, Eigen::Index it) {
        const Eigen::Index n2 = s_axes[1].size();
        return values[(it * s_axes[0].size() + i1) * n2 + i2];
    }
    double at2(Eigen::Index i1, Eigen::Index i2, Eigen::Index it) const {
        const Eigen::Index n2 = s_axes[1].size();
        return values[(it * s_axes[0].size() + i1) * n2 + i2];
    }
};

/// Uniform ticks over [lo, hi] including both endpoints.
VectorXd linspace(double lo, double hi, Eigen::Index count);

/// Immediate-exercise payoff of the contract at spot vector s.
/// Throws UnsupportedPayoffError / ValidationError on bad input.
double payoff_eval(const OptionContract& contract, const VectorXd& s);

/// Checks every invariant of (params, contract) and returns one message per
/// violation; an empty report means the pair is valid. Never throws.
std::vector<std::string> validate(const MarketParams& params,
                                  const OptionContract& contract);

/// Throwing wrapper around validate().
void validate_or_throw(const MarketParams& params,
                       const OptionContract& contract);

}  // namespace amopt

#endif  // AMOPT_TYPES_HPP
