#include "amopt/metrics.hpp"

#include <cmath>

namespace amopt {

namespace {

void check_same_grid(const PriceSurface& a, const PriceSurface& b) {
    bool ok = a.s_axes.size() == b.s_axes.size() &&
              a.t_axis.size() == b.t_axis.size() &&
              a.values.size() == b.values.size();
    if (ok)
        for (size_t i = 0; i < a.s_axes.size(); ++i)
            ok = ok && a.s_axes[i].size() == b.s_axes[i].size() &&
                 (a.s_axes[i] - b.s_axes[i]).cwiseAbs().maxCoeff() <= 1e-12;
    if (ok && a.t_axis.size() > 0)
        ok = (a.t_axis - b.t_axis).cwiseAbs().maxCoeff() <= 1e-12;
    if (!ok) throw GridMismatchError("surfaces live on different grids");
}

}  // namespace

double rel_l2(const PriceSurface& reference, const PriceSurface& candidate) {
    check_same_grid(reference, candidate);
    const double ref_norm = reference.values.norm();
    if (ref_norm == 0.0)
        throw NumericsError("rel_l2: degenerate reference (zero norm)");
    return (reference.values - candidate.values).norm() / ref_norm;
}

double mae(const PriceSurface& reference, const PriceSurface& candidate) {
    check_same_grid(reference, candidate);
    if (reference.values.size() == 0) return 0.0;
    return (reference.values - candidate.values).cwiseAbs().maxCoeff();
}

ErrorReport error_report(const PriceSurface& reference,
                         const PriceSurface& candidate) {
    ErrorReport rep;
    rep.rel_l2 = rel_l2(reference, candidate);
    rep.mae = mae(reference, candidate);
    rep.samples = reference.values.size();
    return rep;
}

PriceSurface pointwise_diff(const PriceSurface& reference,
                            const PriceSurface& candidate) {
    check_same_grid(reference, candidate);
    PriceSurface diff = reference;
    diff.values = reference.values - candidate.values;
    return diff;
}

BoundaryCurve free_boundary_1d(const PriceSurface& surface,
                               const OptionContract& contract,
                               double tolerance) {
    if (surface.s_axes.size() != 1)
        throw ValidationError("free_boundary_1d: single-asset surface only");
    const VectorXd& s = surface.s_axes[0];
    const Eigen::Index ns = s.size();
    const bool is_put = contract.kind == PayoffKind::PutVanilla ||
                        contract.kind == PayoffKind::PutGeometricMean;

    BoundaryCurve curve;
    curve.t = surface.t_axis;
    curve.side = is_put ? BoundarySide::PutBelow : BoundarySide::CallAbove;
    curve.s_star.assign(surface.t_axis.size(), std::nullopt);

    VectorXd s1(1);
    auto time_value = [&](Eigen::Index is, Eigen::Index it) {
        s1[0] = s[is];
        return surface.at(is, it) - payoff_eval(contract, s1);
    };
    auto time_value_mid = [&](Eigen::Index is, Eigen::Index it, double frac) {
        // linear interpolation of the surface between adjacent ticks
        const double sv = s[is] + frac * (s[is + 1] - s[is]);
        const double vv = surface.at(is, it) +
                          frac * (surface.at(is + 1, it) - surface.at(is, it));
        s1[0] = sv;
        return vv - payoff_eval(contract, s1);
    };

    for (Eigen::Index it = 0; it < surface.t_axis.size(); ++it) {
        if (is_put) {
            // sup of the stopping set
            Eigen::Index found = -1;
            for (Eigen::Index is = 0; is < ns; ++is)
                if (std::abs(time_value(is, it)) <= tolerance) found = is;
            if (found < 0) continue;
            double s_star = s[found];
            if (found + 1 < ns &&
                std::abs(time_value_mid(found, it, 0.5)) <= tolerance)
                s_star = 0.5 * (s[found] + s[found + 1]);
            curve.s_star[it] = s_star;
        } else {
            // inf of the stopping set above the strike
            Eigen::Index found = -1;
            for (Eigen::Index is = ns - 1; is >= 0; --is) {
                if (s[is] < contract.strike) break;
                if (std::abs(time_value(is, it)) <= tolerance) found = is;
            }
            if (found < 0) continue;
            double s_star = s[found];
            if (found > 0 && s[found - 1] >= contract.strike &&
                std::abs(time_value_mid(found - 1, it, 0.5)) <= tolerance)
                s_star = 0.5 * (s[found - 1] + s[found]);
            curve.s_star[it] = s_star;
        }
    }
    return curve;
}

BoundaryCurve2d free_boundary_2d(const PriceSurface& surface,
                                 const OptionContract& contract,
                                 Eigen::Index t_index, double tolerance) {
    if (surface.s_axes.size() != 2)
        throw ValidationError("free_boundary_2d: two-asset surface only");
    if (contract.kind != PayoffKind::CallOnMax)
        throw ValidationError("free_boundary_2d: call-on-max only");
    const VectorXd& s1 = surface.s_axes[0];
    const VectorXd& s2 = surface.s_axes[1];
    const double strike = contract.strike;

    BoundaryCurve2d curves;
    curves.t = surface.t_axis[t_index];
    curves.s2_ticks = s2;
    curves.s1_star.assign(s2.size(), std::nullopt);
    curves.s1_ticks = s1;
    curves.s2_star.assign(s1.size(), std::nullopt);

    VectorXd sp(2);
    auto tv = [&](Eigen::Index i1, Eigen::Index i2) {
        sp << s1[i1], s2[i2];
        return surface.at2(i1, i2, t_index) - payoff_eval(contract, sp);
    };

    // S1*(s2): inf over s1 >= max(s2, K) inside the asset-1 max region
    for (Eigen::Index j = 0; j < s2.size(); ++j) {
        Eigen::Index found = -1;
        for (Eigen::Index i = s1.size() - 1; i >= 0; --i) {
            if (s1[i] < s2[j] || s1[i] < strike) break;
            if (std::abs(tv(i, j)) <= tolerance) found = i;
        }
        if (found < 0) continue;
        double star = s1[found];
        if (found > 0 && s1[found - 1] >= std::max(s2[j], strike)) {
            sp << 0.5 * (s1[found - 1] + s1[found]), s2[j];
            const double vv = 0.5 * (surface.at2(found - 1, j, t_index) +
                                     surface.at2(found, j, t_index));
            if (std::abs(vv - payoff_eval(contract, sp)) <= tolerance)
                star = sp[0];
        }
        curves.s1_star[j] = star;
    }
    // S2*(s1): symmetric
    for (Eigen::Index i = 0; i < s1.size(); ++i) {
        Eigen::Index found = -1;
        for (Eigen::Index j = s2.size() - 1; j >= 0; --j) {
            if (s2[j] < s1[i] || s2[j] < strike) break;
            if (std::abs(tv(i, j)) <= tolerance) found = j;
        }
        if (found < 0) continue;
        double star = s2[found];
        if (found > 0 && s2[found - 1] >= std::max(s1[i], strike)) {
            sp << s1[i], 0.5 * (s2[found - 1] + s2[found]);
            const double vv = 0.5 * (surface.at2(i, found - 1, t_index) +
                                     surface.at2(i, found, t_index));
            if (std::abs(vv - payoff_eval(contract, sp)) <= tolerance)
                star = sp[1];
        }
        curves.s2_star[i] = star;
    }
    return curves;
}

}  // namespace amopt
