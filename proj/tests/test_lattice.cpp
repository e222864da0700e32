#include <doctest.h>

#include <cmath>

#include "amopt/analytic.hpp"
#include "amopt/lattice.hpp"
#include "oracles.hpp"

using namespace amopt;

namespace {
const MarketParams kTable5 = MarketParams::single(0.02, 0.25, 0.0);
const OptionContract kPut{PayoffKind::PutVanilla, 100.0, 1.0, 1,
                          ExerciseStyle::American};
}  // namespace

TEST_CASE("CRR matches the Table 5 reference cells") {
    LatticeSpec ref{4000, ExerciseStyle::American};
    CHECK(std::abs(bt_price_1d(kTable5, kPut, ref, 100.0, 0.25) - 4.759) <
          1e-3);
    CHECK(std::abs(bt_price_1d(kTable5, kPut, ref, 80.0, 0.5) - 20.306) <
          1e-3);
    CHECK(std::abs(bt_price_1d(kTable5, kPut, ref, 110.0, 0.75) - 4.435) <
          1e-3);
    LatticeSpec coarse{400, ExerciseStyle::American};
    CHECK(std::abs(bt_price_1d(kTable5, kPut, coarse, 100.0, 0.25) - 4.757) <
          1e-3);
}

TEST_CASE("one-step European tree by hand") {
    // N chosen so tau covers exactly one step: u = e^{0.2}, p from the
    // risk-neutral drift, discounted expectation of the two leaves
    MarketParams p = MarketParams::single(0.05, 0.2, 0.0);
    OptionContract call{PayoffKind::CallVanilla, 100.0, 1.0, 1,
                        ExerciseStyle::European};
    LatticeSpec spec{1, ExerciseStyle::European};
    const double u = std::exp(0.2), d = 1.0 / u;
    const double prob = (std::exp(0.05) - d) / (u - d);
    const double expect =
        std::exp(-0.05) * (prob * (100.0 * u - 100.0) + (1 - prob) * 0.0);
    CHECK(bt_price_1d(p, call, spec, 100.0, 1.0) ==
          doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("CRR rejects probability outside (0,1)") {
    // huge drift relative to volatility at one step forces p > 1
    MarketParams p = MarketParams::single(3.0, 0.05, 0.0);
    LatticeSpec spec{1, ExerciseStyle::American};
    CHECK_THROWS_AS(bt_price_1d(p, kPut, spec, 100.0, 1.0), NumericsError);
    CHECK_THROWS_AS(bt_price_1d(kTable5, kPut, spec, 100.0, -0.5),
                    ValidationError);
}

TEST_CASE("American dominates European and intrinsic on the lattice") {
    LatticeSpec amer{400, ExerciseStyle::American};
    LatticeSpec euro{400, ExerciseStyle::European};
    for (double s : {60.0, 85.0, 100.0, 120.0, 150.0})
        for (double tau : {0.1, 0.5, 1.0}) {
            const double va = bt_price_1d(kTable5, kPut, amer, s, tau);
            const double ve = bt_price_1d(kTable5, kPut, euro, s, tau);
            CHECK(va >= ve - 1e-9);
            CHECK(va >= std::max(100.0 - s, 0.0) - 1e-9);
        }
}

TEST_CASE("Richardson behavior: step-doubling differences shrink") {
    const double cell[2] = {100.0, 0.25};
    double diffs[3];
    int idx = 0;
    double prev = 0.0;
    for (int n : {100, 200, 400, 800}) {
        LatticeSpec spec{n, ExerciseStyle::American};
        const double v = bt_price_1d(kTable5, kPut, spec, cell[0], cell[1]);
        if (n > 100) diffs[idx++] = std::abs(v - prev);
        prev = v;
    }
    CHECK(diffs[1] < diffs[0]);
    CHECK(diffs[2] < diffs[1]);
}

TEST_CASE("q=0 American call equals the European call") {
    OptionContract call{PayoffKind::CallVanilla, 100.0, 1.0, 1,
                        ExerciseStyle::American};
    MarketParams p = MarketParams::single(0.05, 0.2, 0.0);
    LatticeSpec amer{2000, ExerciseStyle::American};
    for (double s : {80.0, 100.0, 125.0}) {
        const double va = bt_price_1d(p, call, amer, s, 1.0);
        const double ve = european_call_no_div(p, 100.0, s, 1.0);
        CHECK(std::abs(va - ve) < 5e-3);
    }
}

TEST_CASE("lattice surface matches per-cell queries at aligned slices") {
    // the surface spreads its N steps over the full horizon; per-cell trees
    // with the matching step count must agree exactly at aligned slices
    LatticeSpec spec{400, ExerciseStyle::American};
    const VectorXd s_ticks = linspace(60.0, 120.0, 7);
    const VectorXd t_ticks = linspace(0.0, 1.0, 5);
    const PriceSurface surf =
        bt_surface_1d(kTable5, kPut, spec, s_ticks, t_ticks, 2);
    for (Eigen::Index i = 0; i < s_ticks.size(); ++i)
        for (Eigen::Index j = 0; j + 1 < t_ticks.size(); ++j) {
            const double tau = 1.0 - t_ticks[j];
            LatticeSpec cell{static_cast<int>(std::lround(400 * tau)),
                             ExerciseStyle::American};
            const double direct =
                bt_price_1d(kTable5, kPut, cell, s_ticks[i], tau);
            CHECK(surf.at(i, j) == doctest::Approx(direct).epsilon(1e-12));
        }
    // terminal row equals the payoff
    VectorXd s1(1);
    for (Eigen::Index i = 0; i < s_ticks.size(); ++i) {
        s1[0] = s_ticks[i];
        CHECK(surf.at(i, t_ticks.size() - 1) ==
              doctest::Approx(payoff_eval(kPut, s1)).epsilon(1e-14));
    }
}

TEST_CASE("BEG two-asset European tree matches the closed form") {
    const MarketParams p =
        MarketParams::pair(0.06, 0.15, 0.25, 0.02, 0.04, 0.2);
    OptionContract maxcall{PayoffKind::CallOnMax, 100.0, 1.0, 2,
                           ExerciseStyle::European};
    LatticeSpec spec{400, ExerciseStyle::European};
    const double tree = bt_price_2d(p, maxcall, spec, 100.0, 100.0, 1.0);
    const double closed = european_call_on_max(p, 100.0, 100.0, 100.0, 1.0);
    CHECK(std::abs(tree - closed) < 0.05);
}

TEST_CASE("BEG one-step tree by hand") {
    const MarketParams p = MarketParams::pair(0.05, 0.2, 0.3, 0.0, 0.01, 0.5);
    OptionContract maxcall{PayoffKind::CallOnMax, 100.0, 1.0, 2,
                           ExerciseStyle::European};
    LatticeSpec spec{1, ExerciseStyle::European};
    const double u1 = std::exp(0.2), u2 = std::exp(0.3);
    const double mu1 = 0.05 - 0.0 - 0.02, mu2 = 0.05 - 0.01 - 0.045;
    const double a1 = mu1 / 0.2, a2 = mu2 / 0.3;
    const double puu = 0.25 * (1 + 0.5 + a1 + a2);
    const double pud = 0.25 * (1 - 0.5 + a1 - a2);
    const double pdu = 0.25 * (1 - 0.5 - a1 + a2);
    const double pdd = 0.25 * (1 + 0.5 - a1 - a2);
    auto pay = [](double s1, double s2) {
        return std::max(std::max(s1, s2) - 100.0, 0.0);
    };
    const double expect =
        std::exp(-0.05) *
        (puu * pay(100 * u1, 100 * u2) + pud * pay(100 * u1, 100 / u2) +
         pdu * pay(100 / u1, 100 * u2) + pdd * pay(100 / u1, 100 / u2));
    CHECK(bt_price_2d(p, maxcall, spec, 100.0, 100.0, 1.0) ==
          doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("BEG collapses to one dimension when one asset is negligible") {
    const MarketParams p =
        MarketParams::pair(0.06, 0.15, 0.01, 0.02, 0.04, 0.0);
    OptionContract maxcall{PayoffKind::CallOnMax, 100.0, 1.0, 2,
                           ExerciseStyle::American};
    LatticeSpec spec{400, ExerciseStyle::American};
    const double two = bt_price_2d(p, maxcall, spec, 105.0, 1e-4, 0.8);

    const MarketParams single = MarketParams::single(0.06, 0.15, 0.02);
    OptionContract call{PayoffKind::CallVanilla, 100.0, 1.0, 1,
                        ExerciseStyle::American};
    const double one = bt_price_1d(single, call, spec, 105.0, 0.8);
    CHECK(std::abs(two - one) < 0.05);
}

TEST_CASE("BEG rejects invalid probabilities") {
    const MarketParams p = MarketParams::pair(2.5, 0.05, 0.05, 0.0, 0.0, 0.2);
    OptionContract maxcall{PayoffKind::CallOnMax, 100.0, 1.0, 2,
                           ExerciseStyle::American};
    LatticeSpec spec{1, ExerciseStyle::American};
    CHECK_THROWS_AS(bt_price_2d(p, maxcall, spec, 100.0, 100.0, 1.0),
                    NumericsError);
}

TEST_CASE("geometric reduction path") {
    const MarketParams p = MarketParams::pair(0.05, 0.15, 0.2, 0.02, 0.03, 0.2);
    OptionContract geo{PayoffKind::PutGeometricMean, 100.0, 1.0, 2,
                       ExerciseStyle::American};
    LatticeSpec spec{4000, ExerciseStyle::American};

    VectorXd s(2);
    s << 100.0, 100.0;
    const double a = reduced_reference(p, geo, spec, s, 1.0);
    // payoff depends only on the geometric mean: (80, 125) has I = 100
    s << 80.0, 125.0;
    const double b = reduced_reference(p, geo, spec, s, 1.0);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));

    // n = 1 reduction is the vanilla lattice itself
    const MarketParams single = MarketParams::single(0.05, 0.31, 0.017);
    OptionContract geo1{PayoffKind::PutGeometricMean, 100.0, 1.0, 1,
                        ExerciseStyle::American};
    OptionContract put1{PayoffKind::PutVanilla, 100.0, 1.0, 1,
                        ExerciseStyle::American};
    VectorXd s1(1);
    s1 << 93.0;
    CHECK(reduced_reference(single, geo1, spec, s1, 0.7) ==
          doctest::Approx(bt_price_1d(single, put1, spec, 93.0, 0.7))
              .epsilon(1e-12));
}
