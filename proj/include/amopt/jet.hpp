#ifndef AMOPT_JET_HPP
#define AMOPT_JET_HPP

#include <array>
#include <cassert>
#include <cmath>

namespace amopt {

/// Second-order forward-mode scalar carrying the value, first derivatives
/// with respect to the spatial inputs s_1..s_n and t, and second derivatives
/// with respect to the spatial inputs only (upper triangle, row-major).
/// Arithmetic propagates exact truncated-Taylor coefficients, so any formula
/// written against this type yields exact input derivatives.
struct Jet {
    static constexpr int kMaxAssets = 5;
    static constexpr int kMaxPairs = kMaxAssets * (kMaxAssets + 1) / 2;

    double v = 0.0;
    double dt = 0.0;
    std::array<double, kMaxAssets> ds{};
    std::array<double, kMaxPairs> dss{};
    int n = 0;

    Jet() = default;
    Jet(double value, int n_spatial) : v(value), n(n_spatial) {}

    int pairs() const { return n * (n + 1) / 2; }
    static int pair_index(int i, int j, int n) {
        if (i > j) std::swap(i, j);
        return i * n - i * (i - 1) / 2 + (j - i);
    }
    double hess(int i, int j) const { return dss[pair_index(i, j, n)]; }

    /// Spatial input variable s_i with unit (or chain-rule scaled) seed.
    static Jet spatial(double value, int i, int n_spatial, double seed = 1.0) {
        Jet x(value, n_spatial);
        x.ds[i] = seed;
        return x;
    }
    /// Time input variable.
    static Jet time(double value, int n_spatial) {
        Jet x(value, n_spatial);
        x.dt = 1.0;
        return x;
    }
    static Jet constant(double value, int n_spatial) {
        return Jet(value, n_spatial);
    }
};

inline Jet operator+(const Jet& a, const Jet& b) {
    assert(a.n == b.n);
    Jet z(a.v + b.v, a.n);
    z.dt = a.dt + b.dt;
    for (int i = 0; i < a.n; ++i) z.ds[i] = a.ds[i] + b.ds[i];
    for (int k = 0; k < a.pairs(); ++k) z.dss[k] = a.dss[k] + b.dss[k];
    return z;
}

inline Jet operator-(const Jet& a, const Jet& b) {
    assert(a.n == b.n);
    Jet z(a.v - b.v, a.n);
    z.dt = a.dt - b.dt;
    for (int i = 0; i < a.n; ++i) z.ds[i] = a.ds[i] - b.ds[i];
    for (int k = 0; k < a.pairs(); ++k) z.dss[k] = a.dss[k] - b.dss[k];
    return z;
}

inline Jet operator-(const Jet& a) {
    Jet z(-a.v, a.n);
    z.dt = -a.dt;
    for (int i = 0; i < a.n; ++i) z.ds[i] = -a.ds[i];
    for (int k = 0; k < a.pairs(); ++k) z.dss[k] = -a.dss[k];
    return z;
}

inline Jet operator*(const Jet& a, const Jet& b) {
    assert(a.n == b.n);
    Jet z(a.v * b.v, a.n);
    z.dt = a.v * b.dt + a.dt * b.v;
    for (int i = 0; i < a.n; ++i) z.ds[i] = a.v * b.ds[i] + a.ds[i] * b.v;
    int k = 0;
    for (int i = 0; i < a.n; ++i)
        for (int j = i; j < a.n; ++j, ++k)
            z.dss[k] = a.v * b.dss[k] + a.dss[k] * b.v + a.ds[i] * b.ds[j] +
                       a.ds[j] * b.ds[i];
    return z;
}

inline Jet operator+(const Jet& a, double c) {
    Jet z = a;
    z.v += c;
    return z;
}
inline Jet operator+(double c, const Jet& a) { return a + c; }
inline Jet operator-(const Jet& a, double c) { return a + (-c); }
inline Jet operator-(double c, const Jet& a) { return (-a) + c; }

inline Jet operator*(const Jet& a, double c) {
    Jet z(a.v * c, a.n);
    z.dt = a.dt * c;
    for (int i = 0; i < a.n; ++i) z.ds[i] = a.ds[i] * c;
    for (int k = 0; k < a.pairs(); ++k) z.dss[k] = a.dss[k] * c;
    return z;
}
inline Jet operator*(double c, const Jet& a) { return a * c; }
inline Jet operator/(const Jet& a, double c) { return a * (1.0 / c); }

/// Lifts a univariate analytic map through the jet given f(x.v), f'(x.v)
/// and f''(x.v).
inline Jet jet_chain(const Jet& x, double f, double fp, double fpp) {
    Jet z(f, x.n);
    z.dt = fp * x.dt;
    for (int i = 0; i < x.n; ++i) z.ds[i] = fp * x.ds[i];
    int k = 0;
    for (int i = 0; i < x.n; ++i)
        for (int j = i; j < x.n; ++j, ++k)
            z.dss[k] = fp * x.dss[k] + fpp * x.ds[i] * x.ds[j];
    return z;
}

inline Jet exp(const Jet& x) {
    const double e = std::exp(x.v);
    return jet_chain(x, e, e, e);
}

inline Jet log(const Jet& x) {
    const double inv = 1.0 / x.v;
    return jet_chain(x, std::log(x.v), inv, -inv * inv);
}

inline Jet sqrt(const Jet& x) {
    const double s = std::sqrt(x.v);
    return jet_chain(x, s, 0.5 / s, -0.25 / (s * x.v));
}

inline Jet tanh(const Jet& x) {
    const double f = std::tanh(x.v);
    const double fp = 1.0 - f * f;
    return jet_chain(x, f, fp, -2.0 * f * fp);
}

inline Jet inverse(const Jet& x) {
    const double inv = 1.0 / x.v;
    return jet_chain(x, inv, -inv * inv, 2.0 * inv * inv * inv);
}

inline Jet operator/(const Jet& a, const Jet& b) { return a * inverse(b); }
inline Jet operator/(double c, const Jet& b) { return inverse(b) * c; }

/// Binary analytic map z = f(x, y) lifted through the jet from the value and
/// partials (fx, fy, fxx, fxy, fyy) at (x.v, y.v).
inline Jet jet_chain2(const Jet& x, const Jet& y, double f, double fx,
                      double fy, double fxx, double fxy, double fyy) {
    assert(x.n == y.n);
    Jet z(f, x.n);
    z.dt = fx * x.dt + fy * y.dt;
    for (int i = 0; i < x.n; ++i) z.ds[i] = fx * x.ds[i] + fy * y.ds[i];
    int k = 0;
    for (int i = 0; i < x.n; ++i)
        for (int j = i; j < x.n; ++j, ++k)
            z.dss[k] = fx * x.dss[k] + fy * y.dss[k] + fxx * x.ds[i] * x.ds[j] +
                       fyy * y.ds[i] * y.ds[j] +
                       fxy * (x.ds[i] * y.ds[j] + x.ds[j] * y.ds[i]);
    return z;
}

/// Adjoint of the jet product z = g * u with respect to u: given the fixed
/// factor g and the adjoint zbar of every channel of z, returns the adjoint
/// of u (the transpose of multiplication by g in the truncated algebra).
inline Jet jet_mul_adjoint(const Jet& g, const Jet& zbar) {
    assert(g.n == zbar.n);
    const int n = g.n;
    Jet u(0.0, n);
    u.v = g.v * zbar.v + g.dt * zbar.dt;
    for (int i = 0; i < n; ++i) u.v += g.ds[i] * zbar.ds[i];
    for (int k = 0; k < g.pairs(); ++k) u.v += g.dss[k] * zbar.dss[k];
    u.dt = g.v * zbar.dt;
    for (int i = 0; i < n; ++i) {
        u.ds[i] = g.v * zbar.ds[i];
        for (int j = 0; j < n; ++j) {
            const double mult = (i == j) ? 2.0 : 1.0;
            u.ds[i] += mult * g.ds[j] * zbar.dss[Jet::pair_index(i, j, n)];
        }
    }
    for (int k = 0; k < g.pairs(); ++k) u.dss[k] = g.v * zbar.dss[k];
    return u;
}

// Helpers so that formulas templated on the scalar type read the same for
// double and Jet arguments.
inline double value_of(double x) { return x; }
inline double value_of(const Jet& x) { return x.v; }

}  // namespace amopt

#endif  // AMOPT_JET_HPP
