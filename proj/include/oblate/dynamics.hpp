#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "oblate/coords.hpp"
#include "oblate/ode.hpp"
#include "oblate/potentials.hpp"
#include "oblate/quadrature.hpp"

namespace oblate {

// Values of the three commuting constants of motion:
//   H  = p²/2m + U           (E)
//   L  = n·(x×p)             (ell)
//   H̃  = p·g·p/2m + Φ        (Etilde)
struct InvariantTriple {
    double E = 0.0;
    double Etilde = 0.0;
    double ell = 0.0;
};

// State of the separated flow.  α and β live on the covering space: α may go
// negative (disk crossing) and β may leave (−π/2, π/2) (axis crossing for
// ℓ = 0); both radicands are even around those lines, so the flow continues
// analytically and only genuine turning points need the σ bookkeeping.
struct SeparatedState {
    double alpha = 0.0;
    double beta = 0.0;
    double phi = 0.0;
    int sigma_alpha = 1;
    int sigma_beta = 1;
};

struct TrajectorySample {
    double t = 0.0;
    Vec3 x;
    Vec3 p;
    double lambda_plus = 0.0;
    double lambda_minus = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double phi = 0.0;
    double E = 0.0;
    double Etilde = 0.0;
    double ell = 0.0;
    // branch signs at sample time (separated runs; not serialized)
    int sigma_alpha = 1;
    int sigma_beta = 1;
};

struct TurningEvent {
    double t = 0.0;
    char coordinate = 'a';  // 'a' = alpha turning, 'b' = beta turning
};

struct TrajectoryRecord {
    std::vector<TrajectorySample> samples;
    std::vector<TurningEvent> events;
};

inline InvariantTriple invariants(const PhaseState& s, const AxisConfig& cfg,
                                  const SeparablePotential& pot) {
    const auto pt = to_spheroidal(s.x, cfg);
    InvariantTriple inv;
    inv.E = norm2(s.p) / (2.0 * cfg.m) + eval_U(pt, pot);
    inv.ell = dot(cfg.n, cross(s.x, s.p));
    inv.Etilde = dot(s.p, metric(s.x, cfg).apply(s.p)) / (2.0 * cfg.m) + eval_Phi(pt, pot);
    return inv;
}

namespace detail {

struct DeltaValue {
    double value;
    double scale;  // sum of term magnitudes, for relative forbidden-region tests
};

inline DeltaValue delta_alpha_scaled(double alpha, const InvariantTriple& inv,
                                     const AxisConfig& cfg, const SeparablePotential& pot) {
    const double a2 = cfg.a * cfg.a;
    const double sh2 = pow_2(std::sinh(alpha));
    const double lp = a2 * sh2;
    const double fval = pot.f(lp);
    double value = 2.0 * cfg.m * (lp * inv.E - inv.Etilde - fval);
    double scale =
        2.0 * cfg.m * (std::abs(lp * inv.E) + std::abs(inv.Etilde) + std::abs(fval)) + 1.0;
    if (inv.ell != 0.0) {
        const double cent = inv.ell * inv.ell * sh2 / (1.0 + sh2);  // λ₊/(λ₊+a²)
        value -= cent;
        scale += cent;
    }
    return {value, scale};
}

inline DeltaValue delta_beta_scaled(double beta, const InvariantTriple& inv,
                                    const AxisConfig& cfg, const SeparablePotential& pot) {
    const double a2 = cfg.a * cfg.a;
    const double s2 = pow_2(std::sin(beta));
    const double c2 = pow_2(std::cos(beta));
    const double lm = -a2 * s2;
    const double gval = pot.g(lm);
    double value = 2.0 * cfg.m * (-lm * inv.E + inv.Etilde + gval);
    double scale =
        2.0 * cfg.m * (std::abs(lm * inv.E) + std::abs(inv.Etilde) + std::abs(gval)) + 1.0;
    if (inv.ell != 0.0) {
        if (c2 == 0.0) return {-std::numeric_limits<double>::infinity(), scale};
        const double cent = inv.ell * inv.ell * s2 / c2;
        value -= cent;
        scale += cent;
    }
    return {value, scale};
}

}  // namespace detail

// Radicands of the separated velocities.  The allowed region is where both
// are nonnegative; simple zeros are turning points.  delta_beta returns −∞
// at the axis (cos β = 0) when ℓ ≠ 0: the centrifugal barrier.
inline double delta_alpha(double alpha, const InvariantTriple& inv, const AxisConfig& cfg,
                          const SeparablePotential& pot) {
    return detail::delta_alpha_scaled(alpha, inv, cfg, pot).value;
}

inline double delta_beta(double beta, const InvariantTriple& inv, const AxisConfig& cfg,
                         const SeparablePotential& pot) {
    return detail::delta_beta_scaled(beta, inv, cfg, pot).value;
}

struct SeparatedRates {
    double alpha_dot = 0.0;
    double beta_dot = 0.0;
    double phi_dot = 0.0;
};

namespace detail {

// RHS used inside the integrator: clamps small negative radicands to zero so
// trial stages may probe past a turning point without faulting.
inline SeparatedRates separated_rates_clamped(const SeparatedState& st,
                                              const InvariantTriple& inv, const AxisConfig& cfg,
                                              const SeparablePotential& pot) {
    const double sh2 = pow_2(std::sinh(st.alpha));
    const double s2 = pow_2(std::sin(st.beta));
    const double S = sh2 + s2;
    if (S <= 0.0)
        throw FocalRingSingularity("separated flow evaluated on the focal ring (α = β = 0)");
    const double denom = cfg.a * cfg.a * cfg.m * S;
    const auto da = delta_alpha_scaled(st.alpha, inv, cfg, pot);
    const auto db = delta_beta_scaled(st.beta, inv, cfg, pot);
    SeparatedRates r;
    r.alpha_dot = st.sigma_alpha * std::sqrt(std::max(da.value, 0.0)) / denom;
    r.beta_dot = st.sigma_beta * std::sqrt(std::max(db.value, 0.0)) / denom;
    if (inv.ell != 0.0) {
        const double ch2 = 1.0 + sh2;
        const double c2 = pow_2(std::cos(st.beta));
        r.phi_dot = inv.ell / (cfg.m * cfg.a * cfg.a * ch2 * c2);
    }
    return r;
}

}  // namespace detail

// Public evaluation: faults when the state is genuinely outside the allowed
// region (radicand negative beyond rounding tolerance).
inline SeparatedRates separated_rhs(const SeparatedState& st, const InvariantTriple& inv,
                                    const AxisConfig& cfg, const SeparablePotential& pot) {
    const auto da = detail::delta_alpha_scaled(st.alpha, inv, cfg, pot);
    const auto db = detail::delta_beta_scaled(st.beta, inv, cfg, pot);
    if (da.value < -1e-9 * da.scale)
        throw ForbiddenRegion("alpha radicand negative: state outside allowed region");
    if (db.value < -1e-9 * db.scale)
        throw ForbiddenRegion("beta radicand negative: state outside allowed region");
    return detail::separated_rates_clamped(st, inv, cfg, pot);
}

// Cartesian momentum realized by a separated state (velocities mapped through
// the chart tangents).  Evaluating in the (α, β, φ) frame sidesteps the
// 0·∞ products the λ-gradient form develops on the equatorial plane.
inline PhaseState separated_momentum(const SeparatedState& st, const InvariantTriple& inv,
                                     const AxisConfig& cfg, const SeparablePotential& pot) {
    SpheroidalPoint pt;
    pt.alpha = st.alpha;
    pt.beta = st.beta;
    pt.phi = st.phi;
    const double a2 = cfg.a * cfg.a;
    pt.lambda_plus = a2 * pow_2(std::sinh(st.alpha));
    pt.lambda_minus = -a2 * pow_2(std::sin(st.beta));
    const auto rates = detail::separated_rates_clamped(st, inv, cfg, pot);
    const auto tan = chart_tangents(pt, cfg);
    PhaseState s;
    s.x = from_spheroidal(pt, cfg);
    s.p = cfg.m * (rates.alpha_dot * tan.d_alpha + rates.beta_dot * tan.d_beta +
                   rates.phi_dot * tan.d_phi);
    return s;
}

// Branch signs read off a Cartesian state.  Primary reading: signs of
// λ̇± = ∇λ±·p, corrected for the β parametrization; degenerate fallbacks use
// the axial and radial velocity components directly.
inline SeparatedState to_separated_state(const PhaseState& s, const AxisConfig& cfg) {
    const auto pt = to_spheroidal(s.x, cfg);
    SeparatedState st;
    st.alpha = pt.alpha;
    st.beta = pt.beta;
    st.phi = pt.phi;

    const double xn = dot(s.x, cfg.n);
    const double pn = dot(s.p, cfg.n);
    const Vec3 xperp = s.x - xn * cfg.n;
    const double sb = std::sin(pt.beta);
    const double cb = std::cos(pt.beta);
    const double dot_scale = (norm(s.p) + 1e-300) * (norm(s.x) + cfg.a) * cfg.a;

    const double lamdot_p = dot(grad_lambda_plus(s.x, cfg), s.p);
    if (std::abs(lamdot_p) > 1e-9 * dot_scale) {
        st.sigma_alpha = (lamdot_p > 0.0) ? 1 : -1;
    } else if (std::abs(sb) > 1e-9) {
        // near the disk (α ≈ 0): ẋ·n ≈ a α̇ sin β
        st.sigma_alpha = (pn * sb >= 0.0) ? 1 : -1;
    } else {
        st.sigma_alpha = 1;  // α turning or degenerate rest point
    }

    const double lamdot_m = dot(grad_lambda_minus(s.x, cfg), s.p);
    if (std::abs(sb * cb) > 1e-8 && std::abs(lamdot_m) > 1e-9 * dot_scale) {
        // λ̇₋ = −a² sin 2β β̇ and cos β > 0 on the principal branch
        st.sigma_beta = (lamdot_m * sb < 0.0) ? 1 : -1;
    } else if (std::abs(sb) <= 1e-8) {
        // equator: ẋ·n ≈ a sinh α β̇
        st.sigma_beta = (pn >= 0.0) ? 1 : -1;
    } else {
        // axis: ρ̇ ≈ −a cosh α sin β β̇
        const double rho_rate = dot(xperp, s.p);
        st.sigma_beta = (rho_rate * sb < 0.0) ? 1 : -1;
    }
    return st;
}

namespace detail {

inline TrajectorySample make_cartesian_sample(double t, const Vec3& x, const Vec3& p,
                                              const AxisConfig& cfg,
                                              const SeparablePotential& pot) {
    TrajectorySample row;
    row.t = t;
    row.x = x;
    row.p = p;
    const auto pt = to_spheroidal(x, cfg);
    row.lambda_plus = pt.lambda_plus;
    row.lambda_minus = pt.lambda_minus;
    row.alpha = pt.alpha;
    row.beta = pt.beta;
    row.phi = pt.phi;
    const auto inv = invariants({x, p}, cfg, pot);
    row.E = inv.E;
    row.Etilde = inv.Etilde;
    row.ell = inv.ell;
    return row;
}

}  // namespace detail

// Hamiltonian flow of H in Cartesian coordinates; reference integrator for
// every cross-chart test.  Samples are n_samples uniform times spanning
// [0, t_final].
inline TrajectoryRecord integrate_cartesian(const PhaseState& s0, const AxisConfig& cfg,
                                            const SeparablePotential& pot, double t_final,
                                            double tol, int n_samples = 201) {
    if (!(tol > 0.0)) throw Error("integration tolerance must be positive");
    if (n_samples < 2) throw Error("need at least two sample times");

    using State = std::array<double, 6>;
    auto rhs = [&cfg, &pot](double, const State& y, State& dy) {
        const Vec3 x{y[0], y[1], y[2]};
        const Vec3 g = grad_U(x, cfg, pot);
        dy[0] = y[3] / cfg.m;
        dy[1] = y[4] / cfg.m;
        dy[2] = y[5] / cfg.m;
        dy[3] = -g.x;
        dy[4] = -g.y;
        dy[5] = -g.z;
    };

    TrajectoryRecord record;
    Dopri5<6> solver(rhs, tol, tol);
    solver.init(0.0, {s0.x.x, s0.x.y, s0.x.z, s0.p.x, s0.p.y, s0.p.z});
    try {
        int next = 0;
        auto sample_time = [&](int k) { return t_final * k / (n_samples - 1); };
        record.samples.push_back(detail::make_cartesian_sample(0.0, s0.x, s0.p, cfg, pot));
        ++next;
        while (solver.t() < t_final) {
            const auto dense = solver.step(t_final);
            while (next < n_samples && sample_time(next) <= dense.t_end() + 1e-14 * t_final) {
                const double tk = std::min(sample_time(next), dense.t_end());
                const auto y = dense.eval(tk);
                record.samples.push_back(detail::make_cartesian_sample(
                    tk, {y[0], y[1], y[2]}, {y[3], y[4], y[5]}, cfg, pot));
                ++next;
            }
        }
    } catch (const FocalRingSingularity& err) {
        throw SingularityApproach(std::string("trajectory reached the focal ring: ") +
                                  err.what());
    } catch (const StepFailure& err) {
        // step collapse right beside the ring is the singular attractor, not
        // a tolerance problem; report it as such
        const auto& y = solver.y();
        const Vec3 x{y[0], y[1], y[2]};
        const double xn = dot(x, cfg.n);
        const double rho = norm(x - xn * cfg.n);
        if (pow_2(rho - cfg.a) + pow_2(xn) < pow_2(0.05 * cfg.a))
            throw SingularityApproach(
                std::string("step control failed beside the focal ring: ") + err.what());
        throw;
    }
    return record;
}

// Separated flow with explicit turning-point events.  Contact with Δ = 0 is
// detected by threshold crossing (the integrated path only touches the zero
// tangentially), the true turning coordinate is then polished from Δ itself,
// and the flow restarts just past the contact with the branch sign flipped,
// using the local quadratic model α(t) = α_t + ½α̈ (t−t_c)².
inline TrajectoryRecord integrate_separated(const SeparatedState& st0,
                                            const InvariantTriple& inv, const AxisConfig& cfg,
                                            const SeparablePotential& pot, double t_final,
                                            double tol, int n_samples = 201) {
    if (!(tol > 0.0)) throw Error("integration tolerance must be positive");
    if (n_samples < 2) throw Error("need at least two sample times");

    int sigma_a = st0.sigma_alpha;
    int sigma_b = st0.sigma_beta;
    using State = std::array<double, 3>;
    auto rhs = [&](double, const State& y, State& dy) {
        const SeparatedState st{y[0], y[1], y[2], sigma_a, sigma_b};
        const auto r = detail::separated_rates_clamped(st, inv, cfg, pot);
        dy = {r.alpha_dot, r.beta_dot, r.phi_dot};
    };

    TrajectoryRecord record;
    auto emit = [&](double t, const State& y) {
        const SeparatedState st{y[0], y[1], y[2], sigma_a, sigma_b};
        const PhaseState s = separated_momentum(st, inv, cfg, pot);
        TrajectorySample row;
        row.t = t;
        row.x = s.x;
        row.p = s.p;
        const double a2 = cfg.a * cfg.a;
        row.lambda_plus = a2 * pow_2(std::sinh(y[0]));
        row.lambda_minus = -a2 * pow_2(std::sin(y[1]));
        row.alpha = y[0];
        row.beta = y[1];
        row.phi = y[2];  // unwrapped: continuous along the run
        const auto triple = invariants(s, cfg, pot);
        row.E = triple.E;
        row.Etilde = triple.Etilde;
        row.ell = triple.ell;
        row.sigma_alpha = sigma_a;
        row.sigma_beta = sigma_b;
        record.samples.push_back(row);
    };

    // contact threshold: fire while the approach is still well resolved
    constexpr double kFire = 1e-6;
    auto rel_delta = [&](char c, double coord) {
        const auto d = (c == 'a') ? detail::delta_alpha_scaled(coord, inv, cfg, pot)
                                  : detail::delta_beta_scaled(coord, inv, cfg, pot);
        return d.value / d.scale;
    };
    // bisect g to the time where it crosses zero; lo may already be past it
    auto cross_time = [](const std::function<double(double)>& g, double lo, double hi) {
        if (g(lo) <= 0.0) return lo;
        for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) > 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };

    Dopri5<3> solver(rhs, tol, tol);
    solver.init(0.0, {st0.alpha, st0.beta, st0.phi});

    int next = 0;
    auto sample_time = [&](int k) { return t_final * k / (n_samples - 1); };
    emit(0.0, {st0.alpha, st0.beta, st0.phi});
    ++next;

    const double a2m = cfg.a * cfg.a * cfg.m;

    // A start sitting numerically on its turning circle with the branch sign
    // pointing away from the wall makes the first-order flow ill-posed: the
    // square-root corner admits a spurious rest solution, and even when
    // rounding noise nudges the state off the corner the stepper resolves the
    // liftoff poorly.  Start such an orbit on the local contact model, the
    // same way a detected contact restarts.  (A sign pointing into the wall
    // needs no guard: the first step fires the normal contact machinery.)
    for (char c0 : {'a', 'b'}) {
        const double coord0 = (c0 == 'a') ? st0.alpha : st0.beta;
        if (rel_delta(c0, coord0) > kFire) continue;
        const double h1 = 1e-6 * (1.0 + std::abs(coord0));
        const double rslope =
            (rel_delta(c0, coord0 + h1) - rel_delta(c0, coord0 - h1)) / (2.0 * h1);
        if (std::abs(rslope) < 1e-9) continue;  // degenerate direction
        const int sig = (c0 == 'a') ? sigma_a : sigma_b;
        if (sig * rslope <= 0.0) continue;
        auto dval = [&](double c) {
            return (c0 == 'a') ? delta_alpha(c, inv, cfg, pot) : delta_beta(c, inv, cfg, pot);
        };
        // polish the turning coordinate; the root sits behind the motion, and
        // the state itself may have rounded slightly past it into the wall
        double far = coord0;
        bool bracketed = false;
        for (double span = 1e-9 * (1.0 + std::abs(coord0)); span <= 1.0 && !bracketed;
             span *= 2.0) {
            far = coord0 - sig * span;
            bracketed = dval(far) < 0.0;
        }
        if (!bracketed) continue;
        double up = coord0;
        for (double span = 1e-12 * (1.0 + std::abs(coord0)); dval(up) <= 0.0 && span <= 1.0;
             span *= 4.0)
            up = coord0 + sig * span;
        if (dval(up) <= 0.0) continue;
        const double root = brent_root(dval, far, up, 1e-14);

        const SeparatedState st_i{st0.alpha, st0.beta, st0.phi, sigma_a, sigma_b};
        const auto rates_i = detail::separated_rates_clamped(st_i, inv, cfg, pot);
        const double S0 = pow_2(std::sinh(st0.alpha)) + pow_2(std::sin(st0.beta));
        const double fd_h = 1e-6;
        const double dprime = (dval(root + fd_h) - dval(root - fd_h)) / (2.0 * fd_h);
        const double accel = dprime / (2.0 * pow_2(a2m * S0));
        if (accel == 0.0) continue;
        const double Sdot0 = std::sinh(2.0 * st0.alpha) * rates_i.alpha_dot +
                             std::sin(2.0 * st0.beta) * rates_i.beta_dot;
        const double jerk = -3.0 * accel * Sdot0 / S0;
        const double cdot0 = (c0 == 'a') ? rates_i.alpha_dot : rates_i.beta_dot;
        const double tau0 = cdot0 / accel;  // time already run since the contact
        const double delta0 = 1e-3;
        if (!(tau0 >= 0.0) || tau0 >= delta0) continue;
        const double t_resume = std::min(delta0 - tau0, t_final);

        auto lift_model = [=](double t) {
            const double dt = t + tau0;
            return root + (0.5 * accel + jerk * dt / 6.0) * dt * dt;
        };
        auto lift_rhs = [&](double t, const std::array<double, 2>& z,
                            std::array<double, 2>& dz) {
            SeparatedState st;
            st.alpha = (c0 == 'a') ? lift_model(t) : z[0];
            st.beta = (c0 == 'a') ? z[0] : lift_model(t);
            st.phi = z[1];
            st.sigma_alpha = sigma_a;
            st.sigma_beta = sigma_b;
            const auto r = detail::separated_rates_clamped(st, inv, cfg, pot);
            dz = {(c0 == 'a') ? r.beta_dot : r.alpha_dot, r.phi_dot};
        };
        const std::array<double, 2> z0 = {(c0 == 'a') ? st0.beta : st0.alpha, st0.phi};
        auto lift_state = [&](double t) {
            std::array<double, 2> z = z0;
            const int nsub = 4;
            const double h = t / nsub;
            for (int i = 0; i < nsub; ++i) {
                const double ti = i * h;
                std::array<double, 2> k1, k2, k3, k4, ztmp;
                lift_rhs(ti, z, k1);
                for (int j = 0; j < 2; ++j) ztmp[j] = z[j] + 0.5 * h * k1[j];
                lift_rhs(ti + 0.5 * h, ztmp, k2);
                for (int j = 0; j < 2; ++j) ztmp[j] = z[j] + 0.5 * h * k2[j];
                lift_rhs(ti + 0.5 * h, ztmp, k3);
                for (int j = 0; j < 2; ++j) ztmp[j] = z[j] + h * k3[j];
                lift_rhs(ti + h, ztmp, k4);
                for (int j = 0; j < 2; ++j)
                    z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            State y;
            y[0] = (c0 == 'a') ? lift_model(t) : z[0];
            y[1] = (c0 == 'a') ? z[0] : lift_model(t);
            y[2] = z[1];
            return y;
        };
        while (next < n_samples && sample_time(next) <= t_resume) {
            emit(sample_time(next), lift_state(sample_time(next)));
            ++next;
        }
        if (t_resume >= t_final) {
            while (next < n_samples) {
                emit(sample_time(next), lift_state(sample_time(next)));
                ++next;
            }
            return record;
        }
        solver.init(t_resume, lift_state(t_resume));
        solver.set_initial_step(delta0 / 100.0);
        break;
    }

    while (solver.t() < t_final) {
        const auto dense = solver.step(t_final);

        // Scan for a contact: fire when a radicand descends through (or sits
        // frozen below) the threshold.  An ascending radicand — the escape
        // just after a processed turning — never fires, and a direction whose
        // radicand is identically flat (degenerate libration, e.g. exactly
        // equatorial motion) is excluded by its vanishing slope.
        constexpr int kSub = 16;
        constexpr double kNoise = 1e-12;  // descent test tolerance, relative units
        double t_fire = 0.0;
        char which = 0;
        {
            const auto ys = dense.eval(dense.t0);
            double pr_a = rel_delta('a', ys[0]);
            double pr_b = rel_delta('b', ys[1]);
            bool dead_a = false, dead_b = false;
            double prev_t = dense.t0;
            for (int k = 1; k <= kSub && which == 0; ++k) {
                const double tk = dense.t0 + dense.h * k / kSub;
                const auto y = dense.eval(tk);
                const double ra = rel_delta('a', y[0]);
                const double rb = rel_delta('b', y[1]);
                if (!dead_a && ra <= kFire && ra <= pr_a + kNoise) {
                    const double h1 = 1e-6 * (1.0 + std::abs(y[0]));
                    const double sl =
                        (rel_delta('a', y[0] + h1) - rel_delta('a', y[0] - h1)) / (2.0 * h1);
                    if (std::abs(sl) < 1e-9) {
                        dead_a = true;
                    } else {
                        which = 'a';
                        t_fire = cross_time(
                            [&](double t) { return rel_delta('a', dense.eval(t)[0]) - kFire; },
                            prev_t, tk);
                        break;
                    }
                }
                if (!dead_b && rb <= kFire && rb <= pr_b + kNoise) {
                    const double h1 = 1e-6 * (1.0 + std::abs(y[1]));
                    const double sl =
                        (rel_delta('b', y[1] + h1) - rel_delta('b', y[1] - h1)) / (2.0 * h1);
                    if (std::abs(sl) < 1e-9) {
                        dead_b = true;
                    } else {
                        which = 'b';
                        t_fire = cross_time(
                            [&](double t) { return rel_delta('b', dense.eval(t)[1]) - kFire; },
                            prev_t, tk);
                        break;
                    }
                }
                pr_a = ra;
                pr_b = rb;
                prev_t = tk;
            }
        }

        if (which == 0) {
            while (next < n_samples && sample_time(next) <= dense.t_end() + 1e-14 * t_final) {
                const double tk = std::min(sample_time(next), dense.t_end());
                emit(tk, dense.eval(tk));
                ++next;
            }
            continue;
        }

        // emit samples up to the contact, then process the event
        while (next < n_samples && sample_time(next) <= t_fire) {
            emit(sample_time(next), dense.eval(sample_time(next)));
            ++next;
        }
        const auto y_fire = dense.eval(t_fire);
        const double coord_fire = (which == 'a') ? y_fire[0] : y_fire[1];
        const int sigma_old = (which == 'a') ? sigma_a : sigma_b;

        // Polish the true turning coordinate.  The root normally lies ahead
        // of the fire point; after an overrun into the clamped region
        // (radicand already negative) it lies behind.  Expand a bracket from
        // a Newton estimate of the distance.
        auto delta_abs = [&](double c) {
            return (which == 'a') ? delta_alpha(c, inv, cfg, pot) : delta_beta(c, inv, cfg, pot);
        };
        const double probe_h = 1e-7 * (1.0 + std::abs(coord_fire));
        const double slope =
            (delta_abs(coord_fire + probe_h) - delta_abs(coord_fire - probe_h)) /
            (2.0 * probe_h);
        const double d_fire = delta_abs(coord_fire);
        double span = (slope != 0.0) ? 2.5 * std::abs(d_fire / slope) : 1e-6;
        span = std::min(std::max(span, 1e-12), 2.0);
        const double dir = (d_fire >= 0.0) ? sigma_old : -sigma_old;
        double far = coord_fire;
        bool bracketed = false;
        for (int grow = 0; grow < 12 && span <= 2.0; ++grow, span *= 2.0) {
            far = coord_fire + dir * span;
            if ((delta_abs(far) < 0.0) == (d_fire >= 0.0)) {
                bracketed = true;
                break;
            }
        }
        if (!bracketed) {
            // grazing minimum that never crosses zero: not a turning point
            while (next < n_samples && sample_time(next) <= dense.t_end() + 1e-14 * t_final) {
                const double tk = std::min(sample_time(next), dense.t_end());
                emit(tk, dense.eval(tk));
                ++next;
            }
            continue;
        }
        const double coord_turn = brent_root(delta_abs, coord_fire, far, 1e-14);

        // Contact kinematics.  S couples the two angular motions, so iterate
        // once to evaluate it where the contact actually happens; the cubic
        // term of the local model carries the first-order drift of S through
        // the contact (the turning coordinate itself is momentarily at rest,
        // so only the passive coordinate moves S there).
        const double other_fire = (which == 'a') ? y_fire[1] : y_fire[0];
        auto S_of = [&](double passive) {
            return (which == 'a') ? pow_2(std::sinh(coord_turn)) + pow_2(std::sin(passive))
                                  : pow_2(std::sinh(passive)) + pow_2(std::sin(coord_turn));
        };
        const double fd_h = 1e-6;
        const double dprime =
            (delta_abs(coord_turn + fd_h) - delta_abs(coord_turn - fd_h)) / (2.0 * fd_h);
        const SeparatedState st_fire{y_fire[0], y_fire[1], y_fire[2], sigma_a, sigma_b};
        const auto rates_fire = detail::separated_rates_clamped(st_fire, inv, cfg, pot);
        const double passive_rate = (which == 'a') ? rates_fire.beta_dot : rates_fire.alpha_dot;

        // The passive coordinate has to be carried to the contact accurately:
        // an error dq there shifts the inferred acceleration through S and
        // registers the contact time wrongly, which the square-root velocity
        // map amplifies after the restart.  A quadratic model of the passive
        // motion (its own acceleration evaluated at the fire point) is enough.
        auto delta_abs_passive = [&](double c) {
            return (which == 'a') ? delta_beta(c, inv, cfg, pot) : delta_alpha(c, inv, cfg, pot);
        };
        const double S_fire = pow_2(std::sinh(y_fire[0])) + pow_2(std::sin(y_fire[1]));
        const double Sdot_fire = std::sinh(2.0 * y_fire[0]) * rates_fire.alpha_dot +
                                 std::sin(2.0 * y_fire[1]) * rates_fire.beta_dot;
        const double fd_hp = 1e-6;
        const double dprime_passive = (delta_abs_passive(other_fire + fd_hp) -
                                       delta_abs_passive(other_fire - fd_hp)) /
                                      (2.0 * fd_hp);
        const double passive_accel = dprime_passive / (2.0 * pow_2(a2m * S_fire)) -
                                     passive_rate * Sdot_fire / S_fire;

        double accel = dprime / (2.0 * pow_2(a2m * S_of(other_fire)));
        double jerk = 0.0;
        double t_contact = t_fire;
        double passive_c = other_fire;
        for (int pass = 0; pass < 3 && std::abs(accel) > 0.0; ++pass) {
            // invert the local model for the time still to run to contact:
            // quadratic solution plus one Newton step for the cubic term
            const double gap = coord_fire - coord_turn;
            double dt = -std::sqrt(2.0 * std::max(gap / accel, 0.0));
            const double g = (0.5 * accel + jerk * dt / 6.0) * dt * dt - gap;
            const double gp = (accel + 0.5 * jerk * dt) * dt;
            if (gp != 0.0) dt -= g / gp;
            t_contact = t_fire - dt;
            const double dtw = t_contact - t_fire;
            passive_c = other_fire + (passive_rate + 0.5 * passive_accel * dtw) * dtw;
            const double S_c = S_of(passive_c);
            const double passive_rate_c = passive_rate + passive_accel * dtw;
            const double S_rate = (which == 'a') ? std::sin(2.0 * passive_c) * passive_rate_c
                                                 : std::sinh(2.0 * passive_c) * passive_rate_c;
            accel = dprime / (2.0 * pow_2(a2m * S_c));
            jerk = -3.0 * accel * S_rate / S_c;
        }
        record.events.push_back({t_contact, which});

        // flip the branch
        if (which == 'a')
            sigma_a = -sigma_a;
        else
            sigma_b = -sigma_b;

        // advance the passive coordinates across the contact window with the
        // turning coordinate slaved to its local model
        const double delta0 = 1e-3;
        const double t_resume = t_contact + delta0;
        auto model_coord = [&](double t) {
            const double dt = t - t_contact;
            return coord_turn + (0.5 * accel + jerk * dt / 6.0) * dt * dt;
        };
        auto window_rhs = [&](double t, const std::array<double, 2>& z,
                              std::array<double, 2>& dz) {
            SeparatedState st;
            if (which == 'a') {
                st.alpha = model_coord(t);
                st.beta = z[0];
            } else {
                st.alpha = z[0];
                st.beta = model_coord(t);
            }
            st.phi = z[1];
            st.sigma_alpha = sigma_a;
            st.sigma_beta = sigma_b;
            const auto r = detail::separated_rates_clamped(st, inv, cfg, pot);
            dz = {(which == 'a') ? r.beta_dot : r.alpha_dot, r.phi_dot};
        };
        auto rk4_window = [&](std::array<double, 2> z, double t_from, double t_to) {
            const int nsub = 4;
            const double h = (t_to - t_from) / nsub;
            for (int i = 0; i < nsub; ++i) {
                const double t = t_from + i * h;
                std::array<double, 2> k1, k2, k3, k4, ztmp;
                window_rhs(t, z, k1);
                for (int j = 0; j < 2; ++j) ztmp[j] = z[j] + 0.5 * h * k1[j];
                window_rhs(t + 0.5 * h, ztmp, k2);
                for (int j = 0; j < 2; ++j) ztmp[j] = z[j] + 0.5 * h * k2[j];
                window_rhs(t + 0.5 * h, ztmp, k3);
                for (int j = 0; j < 2; ++j) ztmp[j] = z[j] + h * k3[j];
                window_rhs(t + h, ztmp, k4);
                for (int j = 0; j < 2; ++j)
                    z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            return z;
        };

        const std::array<double, 2> z_fire = {other_fire, y_fire[2]};
        auto state_in_window = [&](double t) {
            const auto z = rk4_window(z_fire, t_fire, t);
            State y;
            if (which == 'a') {
                y[0] = model_coord(t);
                y[1] = z[0];
            } else {
                y[0] = z[0];
                y[1] = model_coord(t);
            }
            y[2] = z[1];
            return y;
        };

        // samples landing inside the contact window; the branch sign belongs
        // to the contact, so samples before it report the unflipped sign
        auto flip_back = [&] {
            if (which == 'a')
                sigma_a = -sigma_a;
            else
                sigma_b = -sigma_b;
        };
        auto emit_window = [&](double tk) {
            const bool pre_contact = tk < t_contact;
            if (pre_contact) flip_back();
            emit(tk, state_in_window(tk));
            if (pre_contact) flip_back();
        };
        while (next < n_samples && sample_time(next) <= std::min(t_resume, t_final)) {
            emit_window(sample_time(next));
            ++next;
        }
        if (t_resume >= t_final) {
            while (next < n_samples) {
                emit_window(sample_time(next));
                ++next;
            }
            return record;
        }
        solver.init(t_resume, state_in_window(t_resume));
        // the radicand still has curvature structure on the delta0 scale just
        // past the contact; do not let the step heuristic leap over it
        solver.set_initial_step(delta0 / 100.0);
    }
    // numerical guard: emit any trailing samples at the final state
    while (next < n_samples) {
        emit(sample_time(next), {solver.y()[0], solver.y()[1], solver.y()[2]});
        ++next;
    }
    return record;
}

// Numerical Poisson bracket {A, B} = Σ_k ∂A/∂p_k ∂B/∂x_k − ∂A/∂x_k ∂B/∂p_k,
// central differences with one Richardson sweep.  Also returns the magnitude
// scale of the products so callers can form a relative residual.
struct BracketResult {
    double value = 0.0;
    double scale = 0.0;
};

inline BracketResult poisson_bracket(const std::function<double(const PhaseState&)>& A,
                                     const std::function<double(const PhaseState&)>& B,
                                     const PhaseState& s) {
    auto partials = [&](const std::function<double(const PhaseState&)>& F, double dx[3],
                        double dp[3]) {
        for (int k = 0; k < 3; ++k) {
            double* xk = nullptr;
            double* pk = nullptr;
            PhaseState probe = s;
            xk = (k == 0) ? &probe.x.x : (k == 1) ? &probe.x.y : &probe.x.z;
            pk = (k == 0) ? &probe.p.x : (k == 1) ? &probe.p.y : &probe.p.z;

            auto richardson = [&](double* slot, double base) {
                const double h = 1e-5 * (std::abs(base) + 1.0);
                auto central = [&](double step) {
                    *slot = base + step;
                    const double plus = F(probe);
                    *slot = base - step;
                    const double minus = F(probe);
                    *slot = base;
                    return (plus - minus) / (2.0 * step);
                };
                const double d1 = central(h);
                const double d2 = central(0.5 * h);
                return (4.0 * d2 - d1) / 3.0;
            };
            dx[k] = richardson(xk, *xk);
            dp[k] = richardson(pk, *pk);
        }
    };
    double ax[3], ap[3], bx[3], bp[3];
    partials(A, ax, ap);
    partials(B, bx, bp);
    BracketResult r;
    for (int k = 0; k < 3; ++k) {
        r.value += ap[k] * bx[k] - ax[k] * bp[k];
        r.scale += std::abs(ap[k] * bx[k]) + std::abs(ax[k] * bp[k]);
    }
    return r;
}

}  // namespace oblate
