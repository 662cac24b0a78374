#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "oblate/coords.hpp"
#include "oblate/rng.hpp"

namespace oblate {

// Separable pair built from two one-variable functions:
//   U = (f(λ₊) − g(λ₋)) / (λ₊ − λ₋)
//   Φ = (λ₋ f(λ₊) − λ₊ g(λ₋)) / (λ₊ − λ₋)
// equivalently Φ − λ₊U = −f(λ₊) and Φ − λ₋U = −g(λ₋).  Any such pair puts
// the deformed Hamiltonian in involution with H and L.
//
// The two corruption knobs act on Φ only and exist so audits can prove they
// would notice a broken second potential.  phi_scale is a smooth bias
// (multiplies Φ by a constant); phi_noise multiplies Φ pointwise by
// 1 + phi_noise·u(x) with u a deterministic position-keyed value in [−1, 1],
// which any derivative-based audit sees as a violent non-conservative field.
// Both default to the honest values.
struct SeparablePotential {
    std::function<double(double)> f;
    std::function<double(double)> g;
    std::function<double(double)> df;  // optional analytic derivatives;
    std::function<double(double)> dg;  // finite differences otherwise
    std::string family_tag = "general";
    double Q = 0.0;  // only meaningful for family_tag == "coulomb_like"
    double phi_scale = 1.0;
    double phi_noise = 0.0;
    std::uint64_t phi_noise_seed = 0;
};

inline SeparablePotential free_potential() {
    SeparablePotential pot;
    pot.f = [](double) { return 0.0; };
    pot.g = [](double) { return 0.0; };
    pot.df = [](double) { return 0.0; };
    pot.dg = [](double) { return 0.0; };
    pot.family_tag = "free";
    return pot;
}

// Ring-source family: f ≡ 0, g(λ) = Q(λ+a²), giving
//   U = −Q (λ₋+a²)/(λ₊−λ₋),   Φ = −Q λ₊(λ₋+a²)/(λ₊−λ₋).
// Q > 0 attracts (U ≤ 0, singular on the focal ring), and U vanishes on the
// whole symmetry axis because λ₋ = −a² there.
inline SeparablePotential coulomb_like(double Q, const AxisConfig& cfg) {
    SeparablePotential pot;
    const double a2 = cfg.a * cfg.a;
    pot.f = [](double) { return 0.0; };
    pot.df = [](double) { return 0.0; };
    pot.g = [Q, a2](double lam) { return Q * (lam + a2); };
    pot.dg = [Q](double) { return Q; };
    pot.family_tag = "coulomb_like";
    pot.Q = Q;
    return pot;
}

// Polynomial family for property tests and config files: coefficients in
// ascending order, Horner evaluation.
inline SeparablePotential polynomial_potential(std::vector<double> f_coeffs,
                                               std::vector<double> g_coeffs) {
    auto horner = [](const std::vector<double>& c, double lam) {
        double v = 0.0;
        for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * lam + *it;
        return v;
    };
    auto horner_deriv = [](const std::vector<double>& c, double lam) {
        double v = 0.0;
        for (std::size_t k = c.size(); k-- > 1;) v = v * lam + static_cast<double>(k) * c[k];
        return v;
    };
    SeparablePotential pot;
    pot.f = [f_coeffs, horner](double lam) { return horner(f_coeffs, lam); };
    pot.g = [g_coeffs, horner](double lam) { return horner(g_coeffs, lam); };
    pot.df = [f_coeffs, horner_deriv](double lam) { return horner_deriv(f_coeffs, lam); };
    pot.dg = [g_coeffs, horner_deriv](double lam) { return horner_deriv(g_coeffs, lam); };
    pot.family_tag = "polynomial";
    return pot;
}

inline double eval_U(const SpheroidalPoint& pt, const SeparablePotential& pot) {
    const double gap = pt.lambda_plus - pt.lambda_minus;
    // Points produced by to_spheroidal are already kept off the focal ring;
    // this guards hand-built ones.
    if (!(gap > 0.0)) throw FocalRingSingularity("potential undefined: root gap collapsed");
    return (pot.f(pt.lambda_plus) - pot.g(pt.lambda_minus)) / gap;
}

namespace detail {

// Deterministic noise in [−1, 1] keyed on the position's root pair (and φ):
// the same point always corrupts the same way, so seeded audit runs stay
// byte-reproducible, yet neighboring points decorrelate completely.
inline double position_noise(const SpheroidalPoint& pt, std::uint64_t seed) {
    auto mix = [](std::uint64_t h, std::uint64_t v) {
        return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    };
    std::uint64_t h = seed;
    h = mix(h, std::bit_cast<std::uint64_t>(pt.lambda_plus));
    h = mix(h, std::bit_cast<std::uint64_t>(pt.lambda_minus));
    h = mix(h, std::bit_cast<std::uint64_t>(pt.phi));
    SplitMix64 rng(h);
    return rng.uniform(-1.0, 1.0);
}

}  // namespace detail

inline double eval_Phi(const SpheroidalPoint& pt, const SeparablePotential& pot) {
    const double gap = pt.lambda_plus - pt.lambda_minus;
    if (!(gap > 0.0)) throw FocalRingSingularity("potential undefined: root gap collapsed");
    double phi = (pt.lambda_minus * pot.f(pt.lambda_plus) -
                  pt.lambda_plus * pot.g(pt.lambda_minus)) /
                 gap;
    if (pot.phi_noise != 0.0)
        phi *= 1.0 + pot.phi_noise * detail::position_noise(pt, pot.phi_noise_seed);
    return pot.phi_scale * phi;
}

inline double U_at(const Vec3& x, const AxisConfig& cfg, const SeparablePotential& pot) {
    return eval_U(to_spheroidal(x, cfg), pot);
}

inline double Phi_at(const Vec3& x, const AxisConfig& cfg, const SeparablePotential& pot) {
    return eval_Phi(to_spheroidal(x, cfg), pot);
}

// Closed-form Cartesian value of the ring-source U; the root gap under the
// square root is (x²+a²)² − 4a²(x²−(x·n)²) = (x²−a²)² + 4a²(x·n)².
inline double eval_U_cartesian(const Vec3& x, const AxisConfig& cfg, double Q) {
    const double a2 = cfg.a * cfg.a;
    const double r2 = norm2(x);
    const double xn = dot(x, cfg.n);
    const double disc = pow_2(r2 + a2) - 4.0 * a2 * (r2 - xn * xn);
    const double gap = std::sqrt(std::max(disc, 0.0));
    if (gap < eps_lambda(cfg)) throw FocalRingSingularity("point on the focal ring");
    return -0.5 * Q * ((r2 + a2) / gap - 1.0);
}

// Derivatives of f and g, falling back to central differences when analytic
// forms were not supplied; scale fixes the step for λ near zero.
inline double fprime(const SeparablePotential& pot, double lam, double scale) {
    if (pot.df) return pot.df(lam);
    const double h = 1e-6 * (std::abs(lam) + scale);
    return (pot.f(lam + h) - pot.f(lam - h)) / (2.0 * h);
}

inline double gprime(const SeparablePotential& pot, double lam, double scale) {
    if (pot.dg) return pot.dg(lam);
    const double h = 1e-6 * (std::abs(lam) + scale);
    return (pot.g(lam + h) - pot.g(lam - h)) / (2.0 * h);
}

// Analytic ∇U through the chart:  ∂₊U = (f′(λ₊) − U)/(λ₊−λ₋),
// ∂₋U = (U − g′(λ₋))/(λ₊−λ₋), then chain through ∇λ±.
inline Vec3 grad_U(const Vec3& x, const AxisConfig& cfg, const SeparablePotential& pot) {
    const auto pt = to_spheroidal(x, cfg);
    const double gap = pt.lambda_plus - pt.lambda_minus;
    const double U = eval_U(pt, pot);
    const double a2 = cfg.a * cfg.a;
    const double dU_dp = (fprime(pot, pt.lambda_plus, a2) - U) / gap;
    const double dU_dm = (U - gprime(pot, pt.lambda_minus, a2)) / gap;
    return dU_dp * grad_lambda_plus(x, cfg) + dU_dm * grad_lambda_minus(x, cfg);
}

// ∇Φ follows from ∂₊Φ = λ₋ ∂₊U and ∂₋Φ = λ₊ ∂₋U — which is precisely the
// involution condition ∇Φ = g·∇U, given that the metric maps each root
// gradient to the opposite root times itself.
inline Vec3 grad_Phi(const Vec3& x, const AxisConfig& cfg, const SeparablePotential& pot) {
    const auto pt = to_spheroidal(x, cfg);
    const double gap = pt.lambda_plus - pt.lambda_minus;
    const double U = eval_U(pt, pot);
    const double a2 = cfg.a * cfg.a;
    const double dU_dp = (fprime(pot, pt.lambda_plus, a2) - U) / gap;
    const double dU_dm = (U - gprime(pot, pt.lambda_minus, a2)) / gap;
    return pot.phi_scale * (pt.lambda_minus * dU_dp * grad_lambda_plus(x, cfg) +
                            pt.lambda_plus * dU_dm * grad_lambda_minus(x, cfg));
}

// Independent verification that ∇Φ = g·∇U at x: both gradients by central
// finite differences with Richardson extrapolation, nothing shared with the
// analytic path above.  Returns the max component of |∇Φ − g·∇U|.
inline double check_involution(const Vec3& x, const AxisConfig& cfg,
                               const SeparablePotential& pot) {
    const double h = 1e-5 * cfg.a;
    auto fd_grad = [&](auto&& func) {
        Vec3 grad;
        double* out[3] = {&grad.x, &grad.y, &grad.z};
        const Vec3 unit[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
        for (int i = 0; i < 3; ++i) {
            auto central = [&](double step) {
                return (func(x + step * unit[i]) - func(x - step * unit[i])) / (2.0 * step);
            };
            const double d1 = central(h);
            const double d2 = central(0.5 * h);
            *out[i] = (4.0 * d2 - d1) / 3.0;
        }
        return grad;
    };
    const Vec3 gU = fd_grad([&](const Vec3& y) { return U_at(y, cfg, pot); });
    const Vec3 gP = fd_grad([&](const Vec3& y) { return Phi_at(y, cfg, pot); });
    const Vec3 r = gP - metric(x, cfg).apply(gU);
    return std::max({std::abs(r.x), std::abs(r.y), std::abs(r.z)});
}

// U sampled over the half-plane spanned by (e₁, n): column i is distance
// xs[i] ≥ 0 from the axis, row j is height zs[j] along n; values row-major
// with x fastest.  Points too close to the focal ring carry mask_sentinel.
struct PotentialGrid {
    std::vector<double> xs;
    std::vector<double> zs;
    std::vector<double> U;  // U[j*xs.size() + i]
    double mask_sentinel = std::numeric_limits<double>::quiet_NaN();
};

inline PotentialGrid potential_grid(const AxisConfig& cfg, const SeparablePotential& pot,
                                    double plane_extent, int resolution) {
    if (resolution < 2) throw Error("grid resolution must be at least 2 per axis");
    PotentialGrid grid;
    grid.xs.resize(resolution);
    grid.zs.resize(resolution);
    for (int i = 0; i < resolution; ++i) {
        grid.xs[i] = plane_extent * static_cast<double>(i) / (resolution - 1);
        grid.zs[i] = plane_extent * (2.0 * i / (resolution - 1) - 1.0);
    }
    const auto [e1, e2] = transverse_frame(cfg.n);
    (void)e2;
    grid.U.resize(static_cast<std::size_t>(resolution) * resolution);
    for (int j = 0; j < resolution; ++j)
        for (int i = 0; i < resolution; ++i) {
            const Vec3 pos = grid.xs[i] * e1 + grid.zs[j] * cfg.n;
            double value;
            try {
                value = U_at(pos, cfg, pot);
            } catch (const FocalRingSingularity&) {
                value = grid.mask_sentinel;
            }
            grid.U[static_cast<std::size_t>(j) * resolution + i] = value;
        }
    return grid;
}

}  // namespace oblate
