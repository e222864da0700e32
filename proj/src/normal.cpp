#include "amopt/normal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "amopt/types.hpp"

namespace amopt {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kTwoPi = 6.2831853071795864769;
}  // namespace

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double norm_cdf(double x) {
    if (std::isnan(x)) throw NumericsError("norm_cdf: NaN argument");
    return 0.5 * std::erfc(-x / kSqrt2);
}

const GaussLegendre& gauss_legendre(int order) {
    static std::map<int, GaussLegendre> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it != cache.end()) return it->second;

    GaussLegendre gl;
    gl.x.resize(order);
    gl.w.resize(order);
    const int m = (order + 1) / 2;
    for (int i = 0; i < m; ++i) {
        // Chebyshev-based initial guess, then Newton on P_n.
        double z = std::cos(M_PI * (i + 0.75) / (order + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < order; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = order * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        gl.x[i] = -z;
        gl.x[order - 1 - i] = z;
        gl.w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        gl.w[order - 1 - i] = gl.w[i];
    }
    auto [pos, inserted] = cache.emplace(order, std::move(gl));
    return pos->second;
}

namespace {

// Genz's BVND: upper orthant probability P(X > h, Y > k) for standard
// bivariate normals with correlation r. Drezner-Wesolowsky angle integral
// for |r| <= 0.925, Genz's tail-transformed expansion above.
double bvnd_upper(double h, double k, double r) {
    const double eps_inf = std::numeric_limits<double>::infinity();
    if (h == eps_inf || k == eps_inf) return 0.0;
    if (h == -eps_inf) return norm_cdf(-k);
    if (k == -eps_inf) return norm_cdf(-h);

    int order = 20;
    if (std::abs(r) < 0.3)
        order = 6;
    else if (std::abs(r) < 0.75)
        order = 12;
    const GaussLegendre& gl = gauss_legendre(order);

    double hk = h * k;
    double bvn = 0.0;
    if (std::abs(r) <= 0.925) {
        if (std::abs(r) > 0.0) {
            const double hs = (h * h + k * k) / 2.0;
            const double asr = std::asin(r);
            for (int i = 0; i < order; ++i) {
                const double sn = std::sin(asr * (gl.x[i] + 1.0) / 2.0);
                bvn += gl.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
            bvn *= asr / (2.0 * kTwoPi);
        }
        return bvn + norm_cdf(-h) * norm_cdf(-k);
    }

    // |r| > 0.925
    if (r < 0.0) {
        k = -k;
        hk = -hk;
    }
    if (std::abs(r) < 1.0) {
        const GaussLegendre& gl20 = gauss_legendre(20);
        const double as = (1.0 - r) * (1.0 + r);
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 16.0;
        double asr = -(bs / as + hk) / 2.0;
        if (asr > -100.0)
            bvn = a * std::exp(asr) *
                  (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 +
                   c * d * as * as / 5.0);
        if (-hk < 100.0) {
            const double b = std::sqrt(bs);
            bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * norm_cdf(-b / a) *
                   b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (int i = 0; i < 20; ++i) {
            const double xv = a * (gl20.x[i] + 1.0);
            const double xs = xv * xv;
            const double rs = std::sqrt(1.0 - xs);
            asr = -(bs / xs + hk) / 2.0;
            if (asr > -100.0) {
                bvn += a * gl20.w[i] * std::exp(asr) *
                       (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                        (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
        bvn = -bvn / kTwoPi;
    }
    if (r > 0.0) return bvn + norm_cdf(-std::max(h, k));
    bvn = -bvn;
    if (k > h) {
        if (h < 0.0)
            bvn += norm_cdf(k) - norm_cdf(h);
        else
            bvn += norm_cdf(-h) - norm_cdf(-k);
    }
    return bvn;
}

}  // namespace

double bivariate_normal_cdf(double x, double y, double rho) {
    if (std::isnan(x) || std::isnan(y) || std::isnan(rho))
        throw NumericsError("bivariate_normal_cdf: NaN argument");
    if (std::abs(rho) > 1.0 + 1e-12)
        throw NumericsError("bivariate_normal_cdf: |rho| > 1");
    rho = std::clamp(rho, -1.0, 1.0);
    if (rho == 1.0) return norm_cdf(std::min(x, y));
    if (rho == -1.0) return std::max(0.0, norm_cdf(x) + norm_cdf(y) - 1.0);
    const double p = bvnd_upper(-x, -y, rho);
    return std::clamp(p, 0.0, 1.0);
}

Jet bivariate_normal_cdf(const Jet& x, const Jet& y, double rho) {
    const double f = bivariate_normal_cdf(x.v, y.v, rho);
    const double den = std::sqrt(1.0 - rho * rho);
    // Conditional arguments behind the partials of N2.
    const double ux = (y.v - rho * x.v) / den;
    const double uy = (x.v - rho * y.v) / den;
    const double px = norm_pdf(x.v);
    const double py = norm_pdf(y.v);
    const double fx = px * norm_cdf(ux);
    const double fy = py * norm_cdf(uy);
    const double fxy = px * norm_pdf(ux) / den;
    const double fxx = -x.v * fx - rho * fxy;
    const double fyy = -y.v * fy - rho * fxy;
    return jet_chain2(x, y, f, fx, fy, fxx, fxy, fyy);
}

}  // namespace amopt
