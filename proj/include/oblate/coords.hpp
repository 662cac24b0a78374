#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "oblate/errors.hpp"
#include "oblate/vec3.hpp"

namespace oblate {

// Geometry of every computation: unit symmetry axis n, focal ring radius a,
// particle mass m.
struct AxisConfig {
    Vec3 n{0.0, 0.0, 1.0};
    double a = 1.0;
    double m = 1.0;

    void validate() const {
        if (std::abs(norm(n) - 1.0) > 1e-14) throw Error("axis vector must be unit length");
        if (!(a > 0.0)) throw Error("focal scale a must be positive");
        if (!(m > 0.0)) throw Error("mass must be positive");
    }
};

// Raw dynamical state in Cartesian canonical coordinates.
struct PhaseState {
    Vec3 x;
    Vec3 p;
};

// One spatial point in both equivalent charts: the root pair (λ₊, λ₋) of
// λ² − (x²−a²)λ − a²(x·n)² = 0, and the trigonometric parametrization
// λ₊ = a² sinh²α, λ₋ = −a² sin²β.  β is a latitude: β ∈ [−π/2, π/2] with
// sign(sin β) = sign(x·n), so the axis sits at |β| = π/2 and the equator
// at β = 0.
struct SpheroidalPoint {
    double lambda_plus = 0.0;
    double lambda_minus = 0.0;
    double phi = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
};

// Below this separation of the two roots the chart has collapsed onto the
// focal ring and derived quantities are pure noise.
inline double eps_lambda(const AxisConfig& cfg) { return 1e-10 * cfg.a * cfg.a; }

struct LambdaPair {
    double plus;
    double minus;
};

// Stable root pair: the half-trace w and half-gap R give one root directly
// and the other through the product λ₊λ₋ = −a²(x·n)², avoiding the usual
// cancellation when |w| ≈ R.
inline LambdaPair lambda_pair(const Vec3& x, const AxisConfig& cfg) {
    const double a2 = cfg.a * cfg.a;
    const double xn = dot(x, cfg.n);
    const double w = 0.5 * (norm2(x) - a2);
    const double R = std::sqrt(w * w + a2 * xn * xn);
    if (2.0 * R < eps_lambda(cfg))
        throw FocalRingSingularity("point lies on the focal ring: root gap " +
                                   std::to_string(2.0 * R));
    if (xn == 0.0) return {std::max(2.0 * w, 0.0), std::min(2.0 * w, 0.0)};
    if (w >= 0.0) {
        const double lp = w + R;
        return {lp, -(a2 * xn * xn) / lp};
    }
    const double lm = w - R;
    return {-(a2 * xn * xn) / lm, lm};
}

// Deterministic transverse axes completing n to a right-handed frame:
// project out the standard basis vector least aligned with n.
struct TransverseFrame {
    Vec3 e1;
    Vec3 e2;
};

inline TransverseFrame transverse_frame(const Vec3& n) {
    const double an[3] = {std::abs(n.x), std::abs(n.y), std::abs(n.z)};
    int k = 0;
    if (an[1] < an[k]) k = 1;
    if (an[2] < an[k]) k = 2;
    const Vec3 h = (k == 0) ? Vec3{1, 0, 0} : (k == 1) ? Vec3{0, 1, 0} : Vec3{0, 0, 1};
    const Vec3 e1 = normalized(h - dot(h, n) * n);
    return {e1, cross(n, e1)};
}

inline SpheroidalPoint to_spheroidal(const Vec3& x, const AxisConfig& cfg) {
    const auto [lp, lm] = lambda_pair(x, cfg);
    const double xn = dot(x, cfg.n);

    SpheroidalPoint pt;
    pt.lambda_plus = lp;
    pt.lambda_minus = lm;
    pt.alpha = std::asinh(std::sqrt(std::max(lp, 0.0)) / cfg.a);
    // On the equatorial disk (x·n = 0, λ₋ < 0) either sign of β maps back to
    // the same point; continue from the upper half space.
    const double sb = std::clamp(std::sqrt(std::max(-lm, 0.0)) / cfg.a, 0.0, 1.0);
    pt.beta = std::asin(xn >= 0.0 ? sb : -sb);

    const auto [e1, e2] = transverse_frame(cfg.n);
    // atan2(0, 0) = 0 covers the on-axis convention φ = 0 with no branch.
    double phi = std::atan2(dot(x, e2), dot(x, e1));
    if (phi < 0.0) phi += 2.0 * std::numbers::pi;
    pt.phi = phi + 0.0;  // flush −0 to +0
    return pt;
}

inline Vec3 from_spheroidal(const SpheroidalPoint& pt, const AxisConfig& cfg) {
    const auto [e1, e2] = transverse_frame(cfg.n);
    const Vec3 e_rho = std::cos(pt.phi) * e1 + std::sin(pt.phi) * e2;
    const double ca = std::cosh(pt.alpha);
    const double sa = std::sinh(pt.alpha);
    const double cb = std::cos(pt.beta);
    const double sb = std::sin(pt.beta);
    return (cfg.a * ca * cb) * e_rho + (cfg.a * sa * sb) * cfg.n;
}

// Tangent vectors of the trigonometric chart at a point.  α may be negative:
// the chart double-covers the interior disk, and a trajectory crossing it
// continues smoothly onto the α < 0 sheet (cosh is even, sinh odd, which is
// exactly the reflection x·n → −x·n at fixed β).
struct ChartTangents {
    Vec3 d_alpha;
    Vec3 d_beta;
    Vec3 d_phi;
};

inline ChartTangents chart_tangents(const SpheroidalPoint& pt, const AxisConfig& cfg) {
    const auto [e1, e2] = transverse_frame(cfg.n);
    const Vec3 e_rho = std::cos(pt.phi) * e1 + std::sin(pt.phi) * e2;
    const Vec3 e_phi = -std::sin(pt.phi) * e1 + std::cos(pt.phi) * e2;
    const double ca = std::cosh(pt.alpha);
    const double sa = std::sinh(pt.alpha);
    const double cb = std::cos(pt.beta);
    const double sb = std::sin(pt.beta);
    return {(cfg.a * sa * cb) * e_rho + (cfg.a * ca * sb) * cfg.n,
            (-cfg.a * ca * sb) * e_rho + (cfg.a * sa * cb) * cfg.n,
            (cfg.a * ca * cb) * e_phi};
}

// Contravariant metric of the quadratic invariant:
// g^{ik} = δ^{ik}(x·n)² − (x·n)(x_i n_k + x_k n_i) + (x²−a²) n_i n_k,
// so that p·g·p = L⊥² − a² p_n².
inline Mat3 metric(const Vec3& x, const AxisConfig& cfg) {
    const double xn = dot(x, cfg.n);
    const double c = norm2(x) - cfg.a * cfg.a;
    const double xi[3] = {x.x, x.y, x.z};
    const double ni[3] = {cfg.n.x, cfg.n.y, cfg.n.z};
    Mat3 g;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
            g.m[i][k] = (i == k ? xn * xn : 0.0) - xn * (xi[i] * ni[k] + xi[k] * ni[i]) +
                        c * ni[i] * ni[k];
    return g;
}

// Analytic gradients from implicit differentiation of the defining quadratic:
// ∇λ± = ±(λ± x + a²(x·n) n) / R with R the half-gap.  Exactness matters:
// the separable dynamics leans on (∇λ₊)² = 4λ₊(λ₊+a²)/(λ₊−λ₋) and friends.
inline Vec3 grad_lambda_plus(const Vec3& x, const AxisConfig& cfg) {
    const auto [lp, lm] = lambda_pair(x, cfg);
    const double R = 0.5 * (lp - lm);
    const double xn = dot(x, cfg.n);
    return (lp * x + (cfg.a * cfg.a * xn) * cfg.n) / R;
}

inline Vec3 grad_lambda_minus(const Vec3& x, const AxisConfig& cfg) {
    const auto [lp, lm] = lambda_pair(x, cfg);
    const double R = 0.5 * (lp - lm);
    const double xn = dot(x, cfg.n);
    return (lm * x + (cfg.a * cfg.a * xn) * cfg.n) / (-R);
}

struct MetricEigensystem {
    double lambda_plus = 0.0;
    double lambda_minus = 0.0;
    double lambda_zero = 0.0;
    Vec3 v_plus;   // eigenvector for λ₊; parallel to ∇λ₋ (the pairing crosses)
    Vec3 v_minus;  // eigenvector for λ₋; parallel to ∇λ₊
    Vec3 v_zero;   // eigenvector for λ₀ = (x·n)²; azimuthal direction
};

inline MetricEigensystem metric_eigensystem(const Vec3& x, const AxisConfig& cfg) {
    const auto [lp, lm] = lambda_pair(x, cfg);
    const double a2 = cfg.a * cfg.a;
    const double xn = dot(x, cfg.n);

    const Vec3 axial = cross(cfg.n, x);
    if (norm2(axial) < eps_lambda(cfg))
        throw AxisSingularity("azimuthal eigenvector undefined on the symmetry axis");

    MetricEigensystem es;
    es.lambda_plus = lp;
    es.lambda_minus = lm;
    es.lambda_zero = xn * xn;
    es.v_zero = normalized(axial);

    // Unnormalized gradient directions (the common 1/R factor drops out).
    const Vec3 gp = lp * x + (a2 * xn) * cfg.n;  // ∥ ∇λ₊
    const Vec3 gm = lm * x + (a2 * xn) * cfg.n;  // ∥ −∇λ₋
    // One gradient degenerates to zero exactly where its root sticks at zero:
    // ∇λ₊ on the interior disk (λ₊ = 0), ∇λ₋ on the equatorial exterior
    // (λ₋ = 0).  Off the axis these never coincide, so the missing direction
    // is recovered by orthogonality.
    const double tiny = 1e-12 * a2 * (cfg.a + norm(x));
    const bool have_p = norm(gp) > tiny;
    const bool have_m = norm(gm) > tiny;
    if (have_p) es.v_minus = normalized(gp);
    if (have_m) es.v_plus = normalized(gm);
    if (!have_p && !have_m)
        throw FocalRingSingularity("both root gradients vanish; chart degenerate");
    if (!have_p) es.v_minus = cross(es.v_plus, es.v_zero);
    if (!have_m) es.v_plus = cross(es.v_minus, es.v_zero);
    return es;
}

}  // namespace oblate
