#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "oblate/errors.hpp"

namespace oblate {

// 15-point Kronrod rule with its embedded 7-point Gauss rule, plus adaptive
// bisection.  The turning-point integrals are smooth after the square-root
// substitution, so a fixed high-order rule with recursive splitting converges
// in a handful of levels.

namespace detail {

// Kronrod abscissae (positive half) and weights; even indices are the
// Kronrod-only points, odd indices interlace with the Gauss points.
inline constexpr double kXgk[8] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691, 0.7415311855993944,
    0.5860872354676911, 0.4058451513773972, 0.2077849550078985, 0.0};
inline constexpr double kWgk[8] = {
    0.02293532201052922, 0.06309209262997855, 0.1047900103222502, 0.1406532597155259,
    0.1690047266392679,  0.1903505780647854,  0.2044329400752989, 0.2094821410847278};
inline constexpr double kWg[4] = {0.1294849661688697, 0.2797053914892767, 0.3818300505051189,
                                  0.4179591836734694};

}  // namespace detail

struct QuadResult {
    double value;
    double error;
};

template <typename F>
QuadResult gauss_kronrod_15(F&& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(c);
    double resk = detail::kWgk[7] * fc;
    double resg = detail::kWg[3] * fc;
    for (int j = 0; j < 3; ++j) {
        const double x = half * detail::kXgk[2 * j + 1];
        const double fsum = f(c - x) + f(c + x);
        resg += detail::kWg[j] * fsum;
        resk += detail::kWgk[2 * j + 1] * fsum;
    }
    for (int j = 0; j < 4; ++j) {
        const double x = half * detail::kXgk[2 * j];
        resk += detail::kWgk[2 * j] * (f(c - x) + f(c + x));
    }
    return {resk * half, std::abs((resk - resg) * half)};
}

namespace detail {

template <typename F>
double adapt(F& f, double a, double b, double tol, int depth) {
    const auto r = gauss_kronrod_15(f, a, b);
    if (r.error <= tol || r.error <= 1e-16 * std::abs(r.value)) return r.value;
    if (depth >= 48)
        throw QuadratureFailure("adaptive bisection exhausted on [" + std::to_string(a) + ", " +
                                std::to_string(b) + "], error " + std::to_string(r.error));
    const double mid = 0.5 * (a + b);
    return adapt(f, a, mid, 0.5 * tol, depth + 1) + adapt(f, mid, b, 0.5 * tol, depth + 1);
}

}  // namespace detail

template <typename F>
double integrate_adaptive(F&& f, double a, double b, double abs_tol) {
    if (a == b) return 0.0;
    return detail::adapt(f, a, b, abs_tol, 0);
}

// Brent's method; f(a) and f(b) must bracket a sign change.
template <typename F>
double brent_root(F&& f, double a, double b, double xtol, int max_iter = 200) {
    double fa = f(a);
    double fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0.0) == (fb > 0.0)) throw Error("root not bracketed");

    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int iter = 0; iter < max_iter; ++iter) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        const double tol1 = 2.0 * 1e-16 * std::abs(b) + 0.5 * xtol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            // inverse quadratic / secant attempt
            const double s = fb / fa;
            double p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                const double qq = fa / fc;
                const double r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol1) ? d : (xm > 0.0 ? tol1 : -tol1);
        fb = f(b);
        if (fb == 0.0) return b;
    }
    throw NoConvergence("bracketed root refinement did not converge");
}

}  // namespace oblate
