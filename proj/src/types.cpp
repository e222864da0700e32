#include "amopt/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace amopt {

bool payoff_kind_supported(PayoffKind kind) {
    switch (kind) {
        case PayoffKind::PutVanilla:
        case PayoffKind::CallVanilla:
        case PayoffKind::PutGeometricMean:
        case PayoffKind::CallOnMax:
            return true;
        default:
            return false;
    }
}

std::string to_string(PayoffKind kind) {
    switch (kind) {
        case PayoffKind::PutVanilla: return "put";
        case PayoffKind::CallVanilla: return "call";
        case PayoffKind::PutGeometricMean: return "geo_put";
        case PayoffKind::CallOnMax: return "max_call";
        case PayoffKind::CallOnMin: return "min_call";
        case PayoffKind::PutOnMax: return "max_put";
        case PayoffKind::PutOnMin: return "min_put";
        case PayoffKind::CallGeometricMean: return "geo_call";
        case PayoffKind::CallArithmeticMean: return "mean_call";
        case PayoffKind::PutArithmeticMean: return "mean_put";
    }
    return "unknown";
}

PayoffKind payoff_kind_from_string(const std::string& name) {
    if (name == "put") return PayoffKind::PutVanilla;
    if (name == "call") return PayoffKind::CallVanilla;
    if (name == "geo_put") return PayoffKind::PutGeometricMean;
    if (name == "max_call") return PayoffKind::CallOnMax;
    if (name == "min_call") return PayoffKind::CallOnMin;
    if (name == "max_put") return PayoffKind::PutOnMax;
    if (name == "min_put") return PayoffKind::PutOnMin;
    if (name == "geo_call") return PayoffKind::CallGeometricMean;
    if (name == "mean_call") return PayoffKind::CallArithmeticMean;
    if (name == "mean_put") return PayoffKind::PutArithmeticMean;
    throw ValidationError("unknown payoff kind: " + name);
}

std::string to_string(ExerciseStyle style) {
    return style == ExerciseStyle::American ? "american" : "european";
}

ExerciseStyle style_from_string(const std::string& name) {
    if (name == "american") return ExerciseStyle::American;
    if (name == "european") return ExerciseStyle::European;
    throw ValidationError("unknown exercise style: " + name);
}

MarketParams MarketParams::single(double r, double sigma, double q) {
    MarketParams p;
    p.r = r;
    p.sigma = VectorXd::Constant(1, sigma);
    p.q = VectorXd::Constant(1, q);
    p.rho = MatrixXd::Identity(1, 1);
    return p;
}

MarketParams MarketParams::pair(double r, double sigma1, double sigma2,
                                double q1, double q2, double corr) {
    MarketParams p;
    p.r = r;
    p.sigma.resize(2);
    p.sigma << sigma1, sigma2;
    p.q.resize(2);
    p.q << q1, q2;
    p.rho.resize(2, 2);
    p.rho << 1.0, corr, corr, 1.0;
    return p;
}

VectorXd linspace(double lo, double hi, Eigen::Index count) {
    VectorXd v(count);
    if (count == 1) {
        v[0] = lo;
        return v;
    }
    for (Eigen::Index i = 0; i < count; ++i)
        v[i] = lo + (hi - lo) * static_cast<double>(i) /
                        static_cast<double>(count - 1);
    v[count - 1] = hi;
    return v;
}

namespace {

double geometric_mean(const VectorXd& s) {
    // exp(mean(log s)); exact zeros force a zero mean
    double acc = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] <= 0.0) return 0.0;
        acc += std::log(s[i]);
    }
    return std::exp(acc / static_cast<double>(s.size()));
}

// Cholesky attempt with a tolerance on pivot negativity; returns the most
// negative pivot encountered (0 if clean).
double min_cholesky_pivot(const MatrixXd& a) {
    const Eigen::Index n = a.rows();
    MatrixXd l = MatrixXd::Zero(n, n);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = a(j, j) - l.row(j).head(j).squaredNorm();
        worst = std::min(worst, d);
        d = std::max(d, 0.0);
        l(j, j) = std::sqrt(d);
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double off = a(i, j) - l.row(i).head(j).dot(l.row(j).head(j));
            l(i, j) = l(j, j) > 0.0 ? off / l(j, j) : 0.0;
        }
    }
    return worst;
}

}  // namespace

double payoff_eval(const OptionContract& contract, const VectorXd& s) {
    if (s.size() != contract.n_assets)
        throw ValidationError("payoff_eval: price vector has " +
                              std::to_string(s.size()) + " entries, contract has " +
                              std::to_string(contract.n_assets) + " assets");
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (!(s[i] >= 0.0))
            throw ValidationError("payoff_eval: negative price s[" +
                                  std::to_string(i) + "]");
    const double k = contract.strike;
    switch (contract.kind) {
        case PayoffKind::PutVanilla:
            return std::max(k - s[0], 0.0);
        case PayoffKind::CallVanilla:
            return std::max(s[0] - k, 0.0);
        case PayoffKind::PutGeometricMean:
            return std::max(k - geometric_mean(s), 0.0);
        case PayoffKind::CallOnMax:
            return std::max(s.maxCoeff() - k, 0.0);
        default:
            throw UnsupportedPayoffError("payoff kind " + to_string(contract.kind) +
                                         " is enumerated but not priced");
    }
}

std::vector<std::string> validate(const MarketParams& params,
                                  const OptionContract& contract) {
    std::vector<std::string> report;
    auto add = [&report](const std::string& msg) { report.push_back(msg); };

    const int n = params.n_assets();
    if (n == 0) add("sigma is empty");
    if (params.q.size() != n) add("q length does not match sigma length");
    if (params.rho.rows() != n || params.rho.cols() != n)
        add("rho must be " + std::to_string(n) + "x" + std::to_string(n));

    for (int i = 0; i < n; ++i)
        if (!(params.sigma[i] > 0.0))
            add("volatility must be positive (sigma[" + std::to_string(i) + "])");

    if (params.rho.rows() == n && params.rho.cols() == n && n > 0) {
        for (int i = 0; i < n; ++i) {
            if (std::abs(params.rho(i, i) - 1.0) > 1e-12)
                add("rho diagonal must be 1 (rho[" + std::to_string(i) + "][" +
                    std::to_string(i) + "])");
            for (int j = 0; j < n; ++j) {
                if (std::abs(params.rho(i, j)) > 1.0 + 1e-12) {
                    add("correlation out of range (rho[" + std::to_string(i) +
                        "][" + std::to_string(j) + "])");
                }
                if (std::abs(params.rho(i, j) - params.rho(j, i)) > 1e-12) {
                    add("rho must be symmetric");
                    i = n;  // one message is enough
                    break;
                }
            }
        }
        if (report.empty()) {
            const double pivot = min_cholesky_pivot(params.rho);
            if (pivot < -1e-12)
                add("rho is not positive semi-definite (min pivot " +
                    std::to_string(pivot) + ")");
        }
    }

    if (!(contract.strike > 0.0)) add("strike must be positive");
    if (!(contract.maturity > 0.0)) add("maturity must be positive");
    if (contract.n_assets < 1) add("n_assets must be >= 1");
    if (contract.n_assets != n)
        add("contract n_assets does not match market dimension");

    if (!payoff_kind_supported(contract.kind)) {
        add("payoff kind " + to_string(contract.kind) +
            " is not supported (enumerated for config readability only)");
    } else {
        switch (contract.kind) {
            case PayoffKind::PutVanilla:
            case PayoffKind::CallVanilla:
                if (contract.n_assets != 1)
                    add("vanilla payoff requires n_assets = 1");
                break;
            case PayoffKind::CallOnMax:
                if (contract.n_assets != 2)
                    add("call-on-max requires n_assets = 2");
                break;
            default:
                break;  // geometric mean allows any n >= 1
        }
    }
    return report;
}

void validate_or_throw(const MarketParams& params,
                       const OptionContract& contract) {
    auto report = validate(params, contract);
    if (report.empty()) return;
    std::ostringstream oss;
    oss << "invalid configuration:";
    for (const auto& msg : report) oss << "\n  - " << msg;
    throw ValidationError(oss.str());
}

}  // namespace amopt
