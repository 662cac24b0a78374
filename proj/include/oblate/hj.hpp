#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "oblate/dynamics.hpp"

// Numerical Hamilton–Jacobi layer.  The separated flow admits a
// characteristic function F(α, β, φ) = A(α) + B(β) + ℓφ with
// ∂F/∂α = √Δ_α and ∂F/∂β = √Δ_β on the principal branch; its derivatives
// with respect to the three invariants produce quadrature constants that are
// conserved along any single branch of the motion:
//
//   C₂   = σ_α ∫ dα/√Δ_α − σ_β ∫ dβ/√Δ_β
//   C₃   = φ − ℓ [σ_α ∫ dα sinh²α/(cosh²α √Δ_α) + σ_β ∫ dβ sin²β/(cos²β √Δ_β)]
//   T(t) = σ_α ∫ dα sinh²α/√Δ_α + σ_β ∫ dβ sin²β/√Δ_β − t/(a²m)
//
// All integrals run from the lower turning point of the connected allowed
// interval of their coordinate (both radicands are even, so a disk- or
// equator-crossing interval is symmetric and the lower turning is the
// mirror root).  The constants are defined only up to that origin choice;
// every test is a constancy or difference test, where the origin cancels.

namespace oblate {

struct QuadratureConstants {
    double t = 0.0;
    double C2 = 0.0;
    double C3 = 0.0;
    double time_integral = 0.0;
};

// Connected allowed band of one separated coordinate.  The upper edge is NaN
// when no root exists within the search span (unbound motion in that
// coordinate); integrals then treat the far side as regular.
struct TurningInterval {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Walk outward from a point inside the allowed region until the radicand
// changes sign, then polish the turning coordinate with Brent.
template <typename D>
double find_turning(D&& dval, double c_in, int dir, double span_max = 10.0) {
    double prev = c_in;
    for (double span = 1e-3 * (1.0 + std::abs(c_in)); span <= span_max; span *= 1.6) {
        const double cand = c_in + dir * span;
        if (dval(cand) <= 0.0) return brent_root(dval, prev, cand, 1e-15);
        prev = cand;
    }
    throw QuadratureFailure("no turning point found within the search span");
}

template <typename D>
TurningInterval find_interval(D&& dval, double c_in) {
    TurningInterval iv;
    iv.lo = find_turning(dval, c_in, -1);
    try {
        iv.hi = find_turning(dval, c_in, +1);
    } catch (const QuadratureFailure&) {
        // leave the upper edge open; only the lower edge anchors the integrals
    }
    return iv;
}

// One half of a band integral, substituted about the edge root: the
// integrand is 2w·h(edge + sign·w²)·Δ^{pw} for w ∈ [w_lo, w_hi], which is
// analytic in exact arithmetic.  In doubles, however, Δ near its root is a
// cancellation of O(1) terms, so for w ≲ 1e-5 the evaluated radicand carries
// relative jitter large enough that the bisection's error estimate never
// settles.  Inside a head zone [w_lo, e] the radicand is therefore replaced
// by A·w² + B·w⁴ fitted at e/2 and e, where the direct evaluation is trusted
// to ~1e-10 relative; the fit leaves only the O(w⁶) Taylor residual, far
// below the quadrature tolerance over so short a range.
template <typename D, typename H>
double edge_piece(D& dval, H& h, double edge, double sign, double w_lo, double w_hi, double pw,
                  double tol) {
    if (!(w_hi > w_lo)) return 0.0;
    const double r_edge = dval(edge);
    auto real_f = [&](double w) {
        const double d = std::max(dval(edge + sign * w * w) - r_edge, 0.0);
        return 2.0 * w * h(edge + sign * w * w) * std::pow(d, pw);
    };
    const double e = 5e-3 * w_hi;
    const double d1 = dval(edge + sign * 0.25 * e * e) - r_edge;
    const double d2 = dval(edge + sign * e * e) - r_edge;
    if (w_lo >= e || !(d1 > 0.0) || !(d2 > 0.0))
        return integrate_adaptive(real_f, w_lo, w_hi, tol);
    const double x = e * e;
    const double A = (16.0 * d1 - d2) / (3.0 * x);
    const double B = (d2 - A * x) / (x * x);
    if (!(A > 0.0)) return integrate_adaptive(real_f, w_lo, w_hi, tol);
    auto model_f = [&](double w) {
        const double w2 = w * w;
        return 2.0 * w * h(edge + sign * w2) * std::pow(A * w2 + B * w2 * w2, pw);
    };
    return integrate_adaptive(model_f, w_lo, e, tol) + integrate_adaptive(real_f, e, w_hi, tol);
}

// ∫_{lo}^{c} h(c′) Δ(c′)^{pw} dc′ with pw = ±1/2 across a band whose edges
// are simple roots of Δ.  Substituting c′ = lo + s² on the lower half and
// c′ = hi − u² on the upper half turns the √ behavior at both edges into
// analytic integrands (Δ ≈ Δ′·s² near a root, so s·Δ^{±1/2} is regular).
// Without the upper substitution, an evaluation point hugging the upper
// turning leaves a 1/√ spike the bisection cannot resolve.
template <typename D, typename H>
double band_integral(D&& dval, H&& h, const TurningInterval& iv, double c, double pw,
                     double tol) {
    const double mid = std::isnan(iv.hi) ? c : std::min(c, 0.5 * (iv.lo + iv.hi));
    double total = edge_piece(dval, h, iv.lo, +1.0, 0.0, std::sqrt(std::max(mid - iv.lo, 0.0)),
                              pw, tol);
    if (c > mid)
        total += edge_piece(dval, h, iv.hi, -1.0, std::sqrt(std::max(iv.hi - c, 0.0)),
                            std::sqrt(std::max(iv.hi - mid, 0.0)), pw, tol);
    return total;
}

inline void require_allowed(const DeltaValue& d, const char* which) {
    if (d.value < -1e-9 * d.scale)
        throw ForbiddenRegion(std::string(which) + " radicand negative: point outside allowed region");
}

}  // namespace detail

// Characteristic function on the principal branch (σ_α = σ_β = +1):
//   F = ∫_{α_lo}^{α} √Δ_α + ∫_{β_lo}^{β} √Δ_β + ℓφ.
// By construction ∂F/∂α = √Δ_α and ∂F/∂β = √Δ_β; ∂F/∂(E, Ẽ, ℓ) recover the
// time relation and the quadrature constants up to state-independent offsets.
inline double hj_eval(double alpha, double beta, double phi, const InvariantTriple& inv,
                      const AxisConfig& cfg, const SeparablePotential& pot,
                      double tol = 1e-12) {
    auto da = [&](double c) { return delta_alpha(c, inv, cfg, pot); };
    auto db = [&](double c) { return delta_beta(c, inv, cfg, pot); };
    detail::require_allowed(detail::delta_alpha_scaled(alpha, inv, cfg, pot), "alpha");
    detail::require_allowed(detail::delta_beta_scaled(beta, inv, cfg, pot), "beta");
    auto one = [](double) { return 1.0; };
    const auto iva = detail::find_interval(da, alpha);
    const auto ivb = detail::find_interval(db, beta);
    const double A = detail::band_integral(da, one, iva, alpha, 0.5, tol);
    const double B = detail::band_integral(db, one, ivb, beta, 0.5, tol);
    return A + B + inv.ell * phi;
}

// Quadrature constants evaluated at every sample of a single-branch segment
// (no turning event inside; the branch signs are read off the samples).
// Each row of the result should agree with every other row to the quadrature
// tolerance — that is the conservation statement, and it is what callers
// should test.  Crossing a turning event breaks the pre-condition: the
// integrals' origin stays put while the branch restarts, so the constants
// jump by a fixed half-libration increment there.
inline std::vector<QuadratureConstants> quadrature_constants(const TrajectoryRecord& segment,
                                                             const InvariantTriple& inv,
                                                             const AxisConfig& cfg,
                                                             const SeparablePotential& pot,
                                                             double tol = 1e-12) {
    std::vector<QuadratureConstants> out;
    if (segment.samples.empty()) return out;

    auto da = [&](double c) { return delta_alpha(c, inv, cfg, pot); };
    auto db = [&](double c) { return delta_beta(c, inv, cfg, pot); };
    const auto& first = segment.samples.front();
    detail::require_allowed(detail::delta_alpha_scaled(first.alpha, inv, cfg, pot), "alpha");
    detail::require_allowed(detail::delta_beta_scaled(first.beta, inv, cfg, pot), "beta");
    const auto iva = detail::find_interval(da, first.alpha);
    const auto ivb = detail::find_interval(db, first.beta);

    auto one = [](double) { return 1.0; };
    auto sh2 = [](double c) { return pow_2(std::sinh(c)); };
    auto sh2_over_ch2 = [](double c) { return pow_2(std::tanh(c)); };
    auto s2 = [](double c) { return pow_2(std::sin(c)); };
    auto s2_over_c2 = [](double c) { return pow_2(std::tan(c)); };

    const double a2m = cfg.a * cfg.a * cfg.m;
    out.reserve(segment.samples.size());
    for (const auto& row : segment.samples) {
        const double sa = row.sigma_alpha;
        const double sb = row.sigma_beta;
        const double Ka1 = detail::band_integral(da, one, iva, row.alpha, -0.5, tol);
        const double Kb1 = detail::band_integral(db, one, ivb, row.beta, -0.5, tol);
        const double Ka3 = detail::band_integral(da, sh2, iva, row.alpha, -0.5, tol);
        const double Kb3 = detail::band_integral(db, s2, ivb, row.beta, -0.5, tol);
        QuadratureConstants qc;
        qc.t = row.t;
        qc.C2 = sa * Ka1 - sb * Kb1;
        if (inv.ell != 0.0) {
            const double Ka2 = detail::band_integral(da, sh2_over_ch2, iva, row.alpha, -0.5, tol);
            const double Kb2 = detail::band_integral(db, s2_over_c2, ivb, row.beta, -0.5, tol);
            qc.C3 = row.phi - inv.ell * (sa * Ka2 + sb * Kb2);
        } else {
            qc.C3 = row.phi;  // the azimuth itself is frozen
        }
        qc.time_integral = sa * Ka3 + sb * Kb3 - row.t / a2m;
        out.push_back(qc);
    }
    return out;
}

// Momentum reconstructed from ∇F at a spatial point: the chart components
// are (σ_α √Δ_α, σ_β √Δ_β, ℓ), mapped through the chart tangents.  The four
// branch-sign choices enumerate the four momenta compatible with the
// invariants at that point.
inline PhaseState momentum_from_hj(const Vec3& x, const InvariantTriple& inv,
                                   const AxisConfig& cfg, const SeparablePotential& pot,
                                   int sigma_alpha = 1, int sigma_beta = 1) {
    const auto pt = to_spheroidal(x, cfg);
    detail::require_allowed(detail::delta_alpha_scaled(pt.alpha, inv, cfg, pot), "alpha");
    detail::require_allowed(detail::delta_beta_scaled(pt.beta, inv, cfg, pot), "beta");
    const SeparatedState st{pt.alpha, pt.beta, pt.phi, sigma_alpha, sigma_beta};
    return separated_momentum(st, inv, cfg, pot);
}

}  // namespace oblate
