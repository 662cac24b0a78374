#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "oblate/coords.hpp"
#include "oblate/errors.hpp"
#include "oblate/ode.hpp"

// The separated quantum problem.  A simultaneous eigenfunction of the energy,
// the deformed energy, and the axial angular momentum factorizes as
// ψ = ψ⁺(λ₊)ψ⁻(λ₋)e^{iℓφ}, and each factor obeys a second-order ODE in its
// own coordinate.  In the variables t = sinh α, u = sin β these read
//
//   (t²+1)ψ⁺″ + 2tψ⁺′ + [ℓ²/(t²+1) + 𝓔t² − 𝓔̃]ψ⁺ = 0
//   (1−u²)ψ⁻″ − 2uψ⁻′ + [−ℓ²/(1−u²) + 𝓔u² + q(1−u²) + 𝓔̃]ψ⁻ = 0
//
// with the dimensionless parameters 𝓔 = 2ma²E, q = 2ma²Q, 𝓔̃ = ℓ² + 2mẼ
// (ħ = 1 throughout; Q is the ring-source strength).  Both are disguised
// copies of the spheroidal wave equation
//
//   (1−z²)w″ − 2zw′ + [λ − μ²/(1−z²) + γ²(1−z²)]w = 0
//
// sharing λ = G := 𝓔̃ + 𝓔 and μ = ℓ; the u-equation carries γ² = q′ := q − 𝓔
// directly, and the t-equation maps onto it with γ² = −𝓔 under a formal
// t = iα substitution (a coefficient map only — nothing here continues
// solutions into the complex plane).
//
// This header provides the parameter maps, pointwise residual forms of the
// two ODEs, Frobenius series at the regular origin of the z = t² variant and
// at the edge singularities z = ±1 of the spheroidal form (indicial exponents
// carried as exact rationals), interior even/odd power series, the angular
// eigenvalue solver (bounded-at-both-edges condition, Legendre-basis
// tridiagonal), and a direct adaptive integration of the t-equation.

namespace oblate {

// Exact fraction for indicial exponents; the exponent data of a Frobenius
// series is rational and the tests pin it with integer arithmetic, never
// through a floating-point root.
struct Rational {
    long long num = 0;
    long long den = 1;

    Rational() = default;
    Rational(long long n, long long d) : num(n), den(d) {
        if (den == 0) throw Error("rational with zero denominator");
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const long long g = std::gcd(std::llabs(num), den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
        if (num == 0) den = 1;
    }
};

inline bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
}
inline bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

inline double to_double(const Rational& r) {
    return static_cast<double>(r.num) / static_cast<double>(r.den);
}

struct QuantumParams {
    double calE = 0.0;       // 2 m a² E
    double q = 0.0;          // 2 m a² Q
    double calEtilde = 0.0;  // ℓ² + 2 m Ẽ
    int ell = 0;
    double G = 0.0;          // calEtilde + calE
    double q_prime = 0.0;    // q − calE
};

inline QuantumParams to_quantum_params(double E, double Etilde, int ell, double Q,
                                       const AxisConfig& cfg) {
    const double two_ma2 = 2.0 * cfg.m * cfg.a * cfg.a;
    QuantumParams qp;
    qp.calE = two_ma2 * E;
    qp.q = two_ma2 * Q;
    qp.calEtilde = static_cast<double>(ell) * ell + 2.0 * cfg.m * Etilde;
    qp.ell = ell;
    qp.G = qp.calEtilde + qp.calE;
    qp.q_prime = qp.q - qp.calE;
    return qp;
}

// Left-hand sides of the two separated ODEs for caller-supplied derivative
// data; a proposed solution is accepted when these are small.  The minus form
// has poles at u = ±1.
inline double ode_residual_plus(double t, double psi, double dpsi, double d2psi,
                                const QuantumParams& qp) {
    const double t2p1 = t * t + 1.0;
    const double ell2 = static_cast<double>(qp.ell) * qp.ell;
    return t2p1 * d2psi + 2.0 * t * dpsi +
           (ell2 / t2p1 + qp.calE * t * t - qp.calEtilde) * psi;
}

inline double ode_residual_minus(double u, double psi, double dpsi, double d2psi,
                                 const QuantumParams& qp) {
    const double omu2 = 1.0 - u * u;
    const double ell2 = static_cast<double>(qp.ell) * qp.ell;
    return omu2 * d2psi - 2.0 * u * dpsi +
           (-ell2 / omu2 + qp.calE * u * u + qp.q * omu2 + qp.calEtilde) * psi;
}

enum class WaveBranch { plus, minus };

struct SpheroidalForm {
    double lambda_p = 0.0;
    double mu = 0.0;
    double gamma2 = 0.0;
};

inline SpheroidalForm to_spheroidal_form(const QuantumParams& qp, WaveBranch which) {
    SpheroidalForm form;
    form.lambda_p = qp.G;
    form.mu = static_cast<double>(qp.ell);
    form.gamma2 = (which == WaveBranch::minus) ? qp.q_prime : -qp.calE;
    return form;
}

enum class SeriesParity { even, odd, none };

// Truncated Frobenius series Σ aₙ vⁿ⁺ˢ.  The local variable v always points
// from the expansion point toward the interior of the physical domain:
// v = z for series about the origin, v = 1 − z about z = +1, v = z + 1 about
// z = −1, so fractional powers stay real on the side where the solution
// lives.  series_eval converts derivatives back to d/dz.
struct SeriesSolution {
    Rational exponent;
    std::vector<double> coefficients;
    double expansion_point = 0.0;
    double radius_bound = 0.0;
    SeriesParity parity = SeriesParity::none;
};

struct SeriesEval {
    double value = 0.0;
    double d1 = 0.0;  // d/dz
    double d2 = 0.0;  // d²/dz²
};

inline SeriesEval series_eval(const SeriesSolution& sol, double z) {
    const double dir = (sol.expansion_point > 0.0) ? -1.0 : 1.0;
    const double v = dir * (z - sol.expansion_point);

    // triple Horner for P(v), P′(v), P″(v)
    double p = 0.0, dp = 0.0, ddp = 0.0;
    for (auto it = sol.coefficients.rbegin(); it != sol.coefficients.rend(); ++it) {
        ddp = ddp * v + 2.0 * dp;
        dp = dp * v + p;
        p = p * v + *it;
    }

    SeriesEval out;
    if (sol.exponent.num == 0) {
        out.value = p;
        out.d1 = dir * dp;
        out.d2 = ddp;
        return out;
    }
    const double s = to_double(sol.exponent);
    const double vs = std::pow(v, s);
    out.value = vs * p;
    out.d1 = dir * std::pow(v, s - 1.0) * (s * p + v * dp);
    out.d2 = std::pow(v, s - 2.0) * (s * (s - 1.0) * p + 2.0 * s * v * dp + v * v * ddp);
    return out;
}

namespace detail {

// Roots of the integer quadratic a s² + b s + c: indicial polynomials here
// always have rational roots, and anything else means the exponent setup is
// broken, not that we should fall back to floating point.
inline std::pair<Rational, Rational> indicial_roots(long long a, long long b, long long c) {
    const long long disc = b * b - 4 * a * c;
    if (disc < 0) throw RecurrenceBreakdown("indicial polynomial has complex roots");
    const long long r = std::llround(std::sqrt(static_cast<double>(disc)));
    if (r * r != disc)
        throw RecurrenceBreakdown("indicial polynomial has irrational roots");
    Rational lo(-b - r, 2 * a);
    Rational hi(-b + r, 2 * a);
    if (to_double(lo) > to_double(hi)) std::swap(lo, hi);
    return {lo, hi};
}

inline int integral_mu(const SpheroidalForm& form) {
    const double m = std::round(form.mu);
    if (!(std::abs(form.mu - m) < 1e-12) || m < 0.0)
        throw Error("spheroidal edge series needs a nonnegative integer azimuthal index");
    return static_cast<int>(m);
}

}  // namespace detail

// Series about z = 0 of the quadratic-variable form of the t-equation
// (z = t²):  4z(z+1)ψ″ + (6z+2)ψ′ + [ℓ²/(z+1) + 𝓔z − 𝓔̃]ψ = 0.
// z = 0 is regular singular with exponents {0, 1/2}; s = 0 is the branch
// even in t, s = 1/2 odd.  Clearing the z = −1 pole couples each relation to
// the three previous coefficients (the first two relations are shorter),
// normalized to a₀ = 1, convergent up to the next singularity at z = −1.
// N is the truncation order: powers through z^{N+s} are kept.
inline SeriesSolution series_origin(const QuantumParams& qp, const Rational& exponent,
                                    int N) {
    if (N < 4) throw Error("origin series needs truncation order at least 4");
    const auto roots = detail::indicial_roots(4, -2, 0);  // 2s(2s−1)
    if (exponent != roots.first && exponent != roots.second)
        throw Error("origin series exponent must be one of the indicial roots 0, 1/2");
    const double s = to_double(exponent);
    const double ell2 = static_cast<double>(qp.ell) * qp.ell;

    std::vector<double> a(static_cast<size_t>(N) + 1, 0.0);
    a[0] = 1.0;
    for (int n = 0; n + 1 <= N; ++n) {
        const double ns = n + s;
        const double lead = 2.0 * (ns + 1.0) * (2.0 * ns + 1.0);
        if (lead == 0.0)
            throw RecurrenceBreakdown("vanishing leading coefficient in origin recurrence");
        double rhs = (8.0 * ns * ns + ell2 - qp.calEtilde) * a[static_cast<size_t>(n)];
        if (n >= 1)
            rhs += (4.0 * (ns - 1.0) * (ns - 2.0) + 6.0 * (ns - 1.0) + qp.calE -
                    qp.calEtilde) *
                   a[static_cast<size_t>(n - 1)];
        if (n >= 2) rhs += qp.calE * a[static_cast<size_t>(n - 2)];
        a[static_cast<size_t>(n + 1)] = -rhs / lead;
    }

    SeriesSolution sol;
    sol.exponent = exponent;
    sol.coefficients = std::move(a);
    sol.expansion_point = 0.0;
    sol.radius_bound = 1.0;
    sol.parity = (exponent.num == 0) ? SeriesParity::even : SeriesParity::odd;
    return sol;
}

// Frobenius series of the spheroidal form at the edge z = +1 or z = −1, on
// the analytic branch with exponent +μ/2 (the second solution carries a
// (z∓1)^{−μ/2} or logarithmic part and is not built here).  In the inward
// variable v = 1 ∓ z both edges obey the same five-term recurrence
//   4n(n+μ) aₙ = [4(n−1+s)(n−2+s) + 6(n−1+s) − 2λ]aₙ₋₁
//              − [(n−2+s)(n−3+s) + 2(n−2+s) − λ + 4γ²]aₙ₋₂
//              + 4γ²aₙ₋₃ − γ²aₙ₋₄,     s = μ/2,
// and the series converges out to the opposite edge (radius 2).  N is the
// truncation order: powers through v^{N+s} are kept.
inline SeriesSolution series_regular_singular(const SpheroidalForm& form, int point, int N) {
    if (point != 1 && point != -1) throw Error("edge series expands about z = +1 or z = −1");
    if (N < 4) throw Error("edge series needs truncation order at least 4");
    const int mu = detail::integral_mu(form);
    const auto roots = detail::indicial_roots(-4, 0, static_cast<long long>(mu) * mu);
    const Rational exponent = roots.second;  // +μ/2
    const double s = to_double(exponent);
    const double lam = form.lambda_p;
    const double g2 = form.gamma2;

    std::vector<double> a(static_cast<size_t>(N) + 1, 0.0);
    a[0] = 1.0;
    for (int n = 1; n <= N; ++n) {
        const double lead = 4.0 * n * (n + static_cast<double>(mu));
        if (lead == 0.0)
            throw RecurrenceBreakdown("vanishing leading coefficient in edge recurrence");
        const double n1 = n - 1.0 + s;
        double rhs = (4.0 * n1 * (n1 - 1.0) + 6.0 * n1 - 2.0 * lam) * a[static_cast<size_t>(n - 1)];
        if (n >= 2) {
            const double n2 = n - 2.0 + s;
            rhs -= (n2 * (n2 - 1.0) + 2.0 * n2 - lam + 4.0 * g2) * a[static_cast<size_t>(n - 2)];
        }
        if (n >= 3) rhs += 4.0 * g2 * a[static_cast<size_t>(n - 3)];
        if (n >= 4) rhs -= g2 * a[static_cast<size_t>(n - 4)];
        a[static_cast<size_t>(n)] = rhs / lead;
    }

    SeriesSolution sol;
    sol.exponent = exponent;
    sol.coefficients = std::move(a);
    sol.expansion_point = static_cast<double>(point);
    sol.radius_bound = 2.0;
    sol.parity = SeriesParity::none;
    return sol;
}

// Interior power series of the spheroidal form about the ordinary-looking
// origin (the μ²/(1−z²) pole is cleared by multiplying through by 1−z²):
// one even and one odd solution, radius 1, seeds a₀ = 1 or a₁ = 1.  These
// are the solutions whose u = sin β pullback makes ψ⁻(β) periodic.  N is the
// truncation order: powers through z^N are kept.
inline SeriesSolution series_interior(const SpheroidalForm& form, SeriesParity parity,
                                      int N) {
    if (parity == SeriesParity::none) throw Error("interior series parity must be even or odd");
    if (N < 4) throw Error("interior series needs truncation order at least 4");
    const double lam = form.lambda_p;
    const double mu2 = form.mu * form.mu;
    const double g2 = form.gamma2;

    std::vector<double> a(static_cast<size_t>(N) + 1, 0.0);
    a[parity == SeriesParity::even ? 0 : 1] = 1.0;
    for (int n = 0; n + 2 <= N; ++n) {
        double rhs = (2.0 * n * n - lam + mu2 - g2) * a[static_cast<size_t>(n)];
        if (n >= 2)
            rhs += (lam + 2.0 * g2 - (n - 2.0) * (n - 1.0)) * a[static_cast<size_t>(n - 2)];
        if (n >= 4) rhs -= g2 * a[static_cast<size_t>(n - 4)];
        a[static_cast<size_t>(n + 2)] = rhs / ((n + 2.0) * (n + 1.0));
    }

    SeriesSolution sol;
    sol.exponent = Rational(0, 1);
    sol.coefficients = std::move(a);
    sol.expansion_point = 0.0;
    sol.radius_bound = 1.0;
    sol.parity = parity;
    return sol;
}

namespace detail {

// Eigenvalues of a symmetric tridiagonal matrix by the implicit-shift QL
// sweep, in place; d is the diagonal, e the subdiagonal (e[0] unused slot at
// the top is not required — e[i] couples rows i and i+1).
inline std::vector<double> tridiag_eigenvalues(std::vector<double> d, std::vector<double> e) {
    const int n = static_cast<int>(d.size());
    if (n == 0) return d;
    e.resize(static_cast<size_t>(n), 0.0);
    const double eps = std::numeric_limits<double>::epsilon();

    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= eps * dd) break;
            }
            if (m != l) {
                if (++iter > 50)
                    throw NoConvergence("tridiagonal eigenvalue sweep stalled");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                int i;
                for (i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if (r == 0.0 && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
    std::sort(d.begin(), d.end());
    return d;
}

// ⟨L+1, ℓ| u |L, ℓ⟩ in the unit-normalized associated Legendre basis.
inline double legendre_step(int L, int ell) {
    if (L < ell) return 0.0;
    const double num = static_cast<double>(L + 1 - ell) * (L + 1 + ell);
    const double den = static_cast<double>(2 * L + 1) * (2 * L + 3);
    return std::sqrt(num / den);
}

}  // namespace detail

// Lowest `count` values of λ = G for which the spheroidal form with μ = ℓ and
// the given γ² has a solution bounded at both edges u = ±1.  Expanding in
// normalized associated Legendre functions P̂_L^ℓ turns the condition into a
// symmetric eigenproblem — L(L+1) on the diagonal, the γ²(1−u²) term coupling
// L to L±2 — which splits into one tridiagonal matrix per parity of L − ℓ.
// The basis is grown by doubling until the requested eigenvalues move by
// less than 1e-10.
inline std::vector<double> angular_eigenvalues(int ell, double gamma2, int count) {
    if (ell < 0) throw Error("angular problem needs ell >= 0");
    if (count < 1) throw Error("angular problem needs count >= 1");

    auto solve_at = [&](int size) {
        std::vector<double> merged;
        for (int parity = 0; parity < 2; ++parity) {
            std::vector<double> d(static_cast<size_t>(size));
            std::vector<double> e(static_cast<size_t>(size), 0.0);
            for (int k = 0; k < size; ++k) {
                const int L = ell + parity + 2 * k;
                const double c_up = detail::legendre_step(L, ell);
                const double c_dn = detail::legendre_step(L - 1, ell);
                d[static_cast<size_t>(k)] =
                    static_cast<double>(L) * (L + 1) -
                    gamma2 * (1.0 - c_up * c_up - c_dn * c_dn);
                if (k + 1 < size)
                    e[static_cast<size_t>(k)] =
                        gamma2 * c_up * detail::legendre_step(L + 1, ell);
            }
            auto vals = detail::tridiag_eigenvalues(std::move(d), std::move(e));
            merged.insert(merged.end(), vals.begin(), vals.end());
        }
        std::sort(merged.begin(), merged.end());
        merged.resize(static_cast<size_t>(count));
        return merged;
    };

    std::vector<double> prev;
    for (int size = count + 16, round = 0; round < 12; size *= 2, ++round) {
        auto vals = solve_at(size);
        if (!prev.empty()) {
            double moved = 0.0;
            for (int k = 0; k < count; ++k)
                moved = std::max(moved, std::abs(vals[static_cast<size_t>(k)] -
                                                 prev[static_cast<size_t>(k)]));
            if (moved < 1e-10) return vals;
        }
        prev = std::move(vals);
    }
    throw NoConvergence("angular eigenvalue truncation did not settle");
}

struct RadialSolution {
    std::vector<double> t;
    std::vector<double> psi;
    std::vector<double> dpsi;
};

// Direct adaptive integration of the t-equation from t = 0, with initial
// data taken from the origin-series branch: the s = 0 branch is even in t
// (ψ(0) = 1, ψ′(0) = 0), the s = 1/2 branch odd (ψ(0) = 0, ψ′(0) = 1).
// Samples are n_samples uniform times spanning [0, t_max].
inline RadialSolution radial_solve(const QuantumParams& qp, double t_max, double tol,
                                   SeriesParity branch = SeriesParity::even,
                                   int n_samples = 201) {
    if (!(tol > 0.0)) throw Error("integration tolerance must be positive");
    if (!(t_max > 0.0)) throw Error("radial sweep needs t_max > 0");
    if (n_samples < 2) throw Error("need at least two sample times");
    if (branch == SeriesParity::none) throw Error("radial branch must be even or odd");

    using State = std::array<double, 2>;
    const double ell2 = static_cast<double>(qp.ell) * qp.ell;
    auto rhs = [&](double t, const State& y, State& dy) {
        const double t2p1 = t * t + 1.0;
        dy[0] = y[1];
        dy[1] = -(2.0 * t * y[1] + (ell2 / t2p1 + qp.calE * t * t - qp.calEtilde) * y[0]) /
                t2p1;
    };

    RadialSolution out;
    Dopri5<2> solver(rhs, tol, tol);
    solver.init(0.0, branch == SeriesParity::even ? State{1.0, 0.0} : State{0.0, 1.0});

    auto sample_time = [&](int k) { return t_max * k / (n_samples - 1); };
    auto emit = [&](double tk, const State& y) {
        out.t.push_back(tk);
        out.psi.push_back(y[0]);
        out.dpsi.push_back(y[1]);
    };
    emit(0.0, solver.y());
    int next = 1;
    while (solver.t() < t_max) {
        const auto dense = solver.step(t_max);
        while (next < n_samples && sample_time(next) <= dense.t_end() + 1e-14 * t_max) {
            const double tk = std::min(sample_time(next), dense.t_end());
            emit(tk, dense.eval(tk));
            ++next;
        }
    }
    return out;
}

}  // namespace oblate
