// Hamilton–Jacobi layer checks: quadrature constants stay flat along
// single-branch trajectory segments, the characteristic function reproduces
// the separated momenta and the time relation through its derivatives, and
// the turning structure found by root search agrees with turning points
// observed independently in the Cartesian chart.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oblate/coords.hpp"
#include "oblate/dynamics.hpp"
#include "oblate/hj.hpp"
#include "oblate/potentials.hpp"
#include "oblate/rng.hpp"
#include "test_support.hpp"

using namespace oblate;
using testsupport::rel_close;

namespace {

const AxisConfig axis_z{{0.0, 0.0, 1.0}, 1.0, 1.0};
const AxisConfig axis_tilted{normalized({1.0, 2.0, 3.0}), 0.7, 1.3};

PhaseState orbit_a_state() { return {{1.5, 0.0, 0.5}, {0.0, 0.55, 0.1}}; }
SeparablePotential orbit_a_potential() { return coulomb_like(2.0, axis_z); }

struct OrbitCase {
    const char* name;
    PhaseState s0;
    AxisConfig cfg;
    SeparablePotential pot;
};

std::vector<OrbitCase> constancy_cases() {
    const SeparablePotential poly = polynomial_potential({0.0, -0.4, 0.05}, {0.0, 0.35});
    return {
        {"coulomb workhorse", orbit_a_state(), axis_z, orbit_a_potential()},
        {"coulomb steeper launch", {{1.5, 0.0, 0.5}, {0.1, 0.4, 0.2}}, axis_z,
         coulomb_like(2.0, axis_z)},
        {"coulomb tilted axis", {{1.0, 0.2, 0.6}, {-0.2, 0.4, 0.3}}, axis_tilted,
         coulomb_like(1.5, axis_tilted)},
        {"polynomial annulus", {{1.2, 0.0, 0.6}, {0.1, 0.5, -0.2}}, axis_z, poly},
        {"polynomial flatter launch", {{1.3, 0.0, 0.4}, {0.0, 0.45, -0.1}}, axis_z, poly},
    };
}

// Slice out the samples strictly inside the longest stretch between turning
// events, trimming a margin off both ends: right at a turning surface the
// 1/√Δ integrands are ill-conditioned and a sample's own coordinate error
// gets amplified, which would test the integrator's conditioning rather than
// the conservation law.
TrajectoryRecord longest_branch_segment(const TrajectoryRecord& rec, double t_final) {
    std::vector<double> cuts{0.0};
    for (const auto& ev : rec.events) cuts.push_back(ev.t);
    cuts.push_back(t_final);
    double lo = 0.0;
    double hi = 0.0;
    double best = -1.0;
    for (size_t k = 0; k + 1 < cuts.size(); ++k) {
        if (cuts[k + 1] - cuts[k] > best) {
            lo = cuts[k];
            hi = cuts[k + 1];
            best = hi - lo;
        }
    }
    const double margin = 0.05 * (hi - lo);
    TrajectoryRecord seg;
    for (const auto& row : rec.samples)
        if (row.t > lo + margin && row.t < hi - margin) seg.samples.push_back(row);
    return seg;
}

double spread_over(const std::vector<QuadratureConstants>& qc, double QuadratureConstants::*field) {
    double lo = qc.front().*field;
    double hi = lo;
    for (const auto& q : qc) {
        lo = std::min(lo, q.*field);
        hi = std::max(hi, q.*field);
    }
    return (hi - lo) / std::max(1.0, 0.5 * (std::abs(lo) + std::abs(hi)));
}

// central differences of the characteristic function with respect to one
// invariant, with the quadrature run tight enough that it does not pollute
// the difference quotient
double hj_invariant_derivative(const TrajectorySample& row, InvariantTriple inv,
                               double InvariantTriple::*comp, const AxisConfig& cfg,
                               const SeparablePotential& pot) {
    const double step = 1e-5 * (1.0 + std::abs(inv.*comp));
    InvariantTriple up = inv;
    InvariantTriple down = inv;
    up.*comp += step;
    down.*comp -= step;
    const double f_up = hj_eval(row.alpha, row.beta, row.phi, up, cfg, pot, 1e-13);
    const double f_down = hj_eval(row.alpha, row.beta, row.phi, down, cfg, pot, 1e-13);
    return (f_up - f_down) / (2.0 * step);
}

}  // namespace

TEST_CASE("radicands at the equator and disk reduce to the second invariant") {
    // with f(0) = g(0) = 0 the centrifugal terms vanish on-axis of each
    // coordinate and only the ∓2mẼ offset survives
    const auto pot = polynomial_potential({0.0, -0.4, 0.05}, {0.0, 0.35});
    const auto inv = invariants({{1.2, 0.0, 0.6}, {0.1, 0.5, -0.2}}, axis_z, pot);
    REQUIRE(rel_close(delta_alpha(0.0, inv, axis_z, pot), -2.0 * axis_z.m * inv.Etilde, 1e-14));
    REQUIRE(rel_close(delta_beta(0.0, inv, axis_z, pot), 2.0 * axis_z.m * inv.Etilde, 1e-14));

    // same statement on the tilted, a ≠ 1 configuration with the Coulomb-like
    // field, whose g(0) = Qa² shifts the β radicand
    const auto potc = coulomb_like(1.5, axis_tilted);
    const auto invc = invariants({{1.0, 0.2, 0.6}, {-0.2, 0.4, 0.3}}, axis_tilted, potc);
    const double m = axis_tilted.m;
    const double ga2 = 1.5 * axis_tilted.a * axis_tilted.a;
    REQUIRE(rel_close(delta_alpha(0.0, invc, axis_tilted, potc), -2.0 * m * invc.Etilde, 1e-13));
    REQUIRE(rel_close(delta_beta(0.0, invc, axis_tilted, potc), 2.0 * m * (invc.Etilde + ga2),
                      1e-13));
}

TEST_CASE("quadrature constants are flat along single-branch segments") {
    for (const auto& oc : constancy_cases()) {
        DYNAMIC_SECTION(oc.name) {
            const auto inv = invariants(oc.s0, oc.cfg, oc.pot);
            const auto st0 = to_separated_state(oc.s0, oc.cfg);
            const double T = 3.0;
            const auto rec = integrate_separated(st0, inv, oc.cfg, oc.pot, T, 1e-10, 601);
            REQUIRE(!rec.events.empty());

            const auto seg = longest_branch_segment(rec, T);
            REQUIRE(seg.samples.size() >= 5);
            for (const auto& row : seg.samples) {
                REQUIRE(row.sigma_alpha == seg.samples.front().sigma_alpha);
                REQUIRE(row.sigma_beta == seg.samples.front().sigma_beta);
            }

            const auto qc = quadrature_constants(seg, inv, oc.cfg, oc.pot);
            REQUIRE(qc.size() == seg.samples.size());
            CHECK(spread_over(qc, &QuadratureConstants::C2) < 1e-6);
            CHECK(spread_over(qc, &QuadratureConstants::C3) < 1e-6);
            CHECK(spread_over(qc, &QuadratureConstants::time_integral) < 1e-6);
        }
    }
}

TEST_CASE("meridian orbit: azimuthal constant degenerates to the frozen azimuth") {
    const PhaseState s0{{1.4, 0.0, 0.5}, {0.1, 0.0, 0.2}};
    const auto pot = coulomb_like(2.0, axis_z);
    const auto inv = invariants(s0, axis_z, pot);
    REQUIRE(inv.ell == 0.0);
    REQUIRE(inv.E < 0.0);  // bound, so the branch structure is periodic

    const double T = 3.0;
    const auto rec = integrate_separated(to_separated_state(s0, axis_z), inv, axis_z, pot, T,
                                         1e-10, 601);
    const auto seg = longest_branch_segment(rec, T);
    REQUIRE(seg.samples.size() >= 5);
    const auto qc = quadrature_constants(seg, inv, axis_z, pot);
    for (const auto& q : qc) CHECK(q.C3 == qc.front().C3);  // φ never moves at ℓ = 0
    CHECK(spread_over(qc, &QuadratureConstants::C2) < 1e-6);
    CHECK(spread_over(qc, &QuadratureConstants::time_integral) < 1e-6);
}

TEST_CASE("crossing a turning event breaks the constants by a fixed jump") {
    // the documented pre-condition: with the branch restarted but the integral
    // origin left in place, C₂ picks up a half-libration increment at the
    // α turning near t ≈ 0.033
    const auto pot = orbit_a_potential();
    const auto inv = invariants(orbit_a_state(), axis_z, pot);
    const auto rec = integrate_separated(to_separated_state(orbit_a_state(), axis_z), inv,
                                         axis_z, pot, 0.06, 1e-10, 13);
    REQUIRE(rec.events.size() == 1);
    const auto qc = quadrature_constants(rec, inv, axis_z, pot);
    CHECK(spread_over(qc, &QuadratureConstants::C2) > 1e-3);
}

TEST_CASE("characteristic function slope matches the separated momenta") {
    const auto pot = orbit_a_potential();
    const auto inv = invariants(orbit_a_state(), axis_z, pot);

    // Richardson-extrapolated central differences: a plain O(h²) quotient
    // leaves ~1e-8 of truncation at these amplitudes, right at the budget.
    auto slope = [](auto&& f, double c, double h) {
        const double d1 = (f(c + h) - f(c - h)) / (2.0 * h);
        const double d2 = (f(c + 0.5 * h) - f(c - 0.5 * h)) / h;
        return (4.0 * d2 - d1) / 3.0;
    };

    // interior points of the allowed band, away from the turning surfaces
    // where the third derivative of the action blows up as Δ^{-3/2}
    const double pts[4][2] = {{0.3, 0.15}, {0.6, -0.25}, {0.9, 0.05}, {-0.5, 0.3}};
    for (const auto& p : pts) {
        const double a = p[0];
        const double b = p[1];
        const double dFda = slope(
            [&](double aa) { return hj_eval(aa, b, 0.7, inv, axis_z, pot, 1e-13); }, a, 1e-4);
        CHECK(rel_close(dFda, std::sqrt(delta_alpha(a, inv, axis_z, pot)), 1e-8));

        const double dFdb = slope(
            [&](double bb) { return hj_eval(a, bb, 0.7, inv, axis_z, pot, 1e-13); }, b, 1e-4);
        CHECK(rel_close(dFdb, std::sqrt(delta_beta(b, inv, axis_z, pot)), 1e-8));
    }
}

TEST_CASE("azimuthal dependence of the characteristic function is exactly linear") {
    const auto pot = orbit_a_potential();
    const auto inv = invariants(orbit_a_state(), axis_z, pot);
    for (const double phi : {2.2, -1.3, 0.4}) {
        const double with_phi = hj_eval(0.6, 0.25, phi, inv, axis_z, pot);
        const double at_zero = hj_eval(0.6, 0.25, 0.0, inv, axis_z, pot);
        // identical quadratures cancel; only the final rounding of +ℓφ is left
        CHECK(std::abs((with_phi - at_zero) - inv.ell * phi) <=
              1e-14 * std::max(1.0, std::abs(with_phi)));
    }
}

TEST_CASE("energy derivative of the characteristic function tracks time") {
    auto slope_check = [](const PhaseState& s0, const AxisConfig& cfg,
                          const SeparablePotential& pot) {
        const auto inv = invariants(s0, cfg, pot);
        // Launch from mid-band on the principal branch (both coordinates on
        // their +√Δ branch, where ∂F/∂E = t + const holds): near a turning
        // surface the higher E-derivatives of the action blow up and a
        // shifted-invariant evaluation can even fall off the band.
        auto da = [&](double c) { return delta_alpha(c, inv, cfg, pot); };
        auto db = [&](double c) { return delta_beta(c, inv, cfg, pot); };
        const auto iva = oblate::detail::find_interval(da, 0.5);
        const auto ivb = oblate::detail::find_interval(db, 0.1);
        REQUIRE(!std::isnan(iva.hi));
        REQUIRE(!std::isnan(ivb.hi));
        const SeparatedState st0{0.5 * iva.hi, -0.4 * ivb.hi, 0.7, 1, 1};
        const auto rec = integrate_separated(st0, inv, cfg, pot, 0.04, 1e-10, 9);
        REQUIRE(rec.events.empty());

        std::vector<double> dFdE;
        for (const auto& row : rec.samples)
            dFdE.push_back(hj_invariant_derivative(row, inv, &InvariantTriple::E, cfg, pot));

        const double slope = (dFdE.back() - dFdE.front()) /
                             (rec.samples.back().t - rec.samples.front().t);
        CHECK(rel_close(slope, 1.0, 1e-4));

        // affine in between as well, not just at the ends
        double dev_lo = dFdE.front() - rec.samples.front().t;
        double dev_hi = dev_lo;
        for (size_t k = 0; k < dFdE.size(); ++k) {
            const double dev = dFdE[k] - rec.samples[k].t;
            dev_lo = std::min(dev_lo, dev);
            dev_hi = std::max(dev_hi, dev);
        }
        CHECK(dev_hi - dev_lo <= 1e-4 * (dFdE.back() - dFdE.front()));
    };

    SECTION("axial coulomb orbit") {
        slope_check({{1.5, 0.0, 0.5}, {0.1, 0.4, 0.2}}, axis_z, coulomb_like(2.0, axis_z));
    }
    SECTION("tilted axis, a and m away from one") {
        slope_check({{1.0, 0.2, 0.6}, {-0.2, 0.4, 0.3}}, axis_tilted,
                    coulomb_like(1.5, axis_tilted));
    }
}

TEST_CASE("invariant derivatives of the characteristic function recover the constants") {
    const auto pot = orbit_a_potential();
    const auto inv = invariants(orbit_a_state(), axis_z, pot);
    // mid-band principal-branch segment, for the same reason as the energy
    // derivative test: FD in the invariants is only well-conditioned away
    // from the turning surfaces
    auto da = [&](double c) { return delta_alpha(c, inv, axis_z, pot); };
    auto db = [&](double c) { return delta_beta(c, inv, axis_z, pot); };
    const auto iva = oblate::detail::find_interval(da, 0.5);
    const auto ivb = oblate::detail::find_interval(db, 0.1);
    REQUIRE(!std::isnan(iva.hi));
    REQUIRE(!std::isnan(ivb.hi));
    const SeparatedState st0{0.5 * iva.hi, -0.4 * ivb.hi, 0.7, 1, 1};
    const auto rec = integrate_separated(st0, inv, axis_z, pot, 0.04, 1e-10, 9);
    REQUIRE(rec.events.empty());
    const auto qc = quadrature_constants(rec, inv, axis_z, pot);

    std::vector<double> dFdEt;
    for (size_t k : {0u, 3u, 6u, 8u}) {
        const auto& row = rec.samples[k];

        // ∂F/∂ℓ carries the explicit φ term plus the centrifugal response
        const double dFdl =
            hj_invariant_derivative(row, inv, &InvariantTriple::ell, axis_z, pot);
        CHECK(std::abs(dFdl - qc[k].C3) <= 1e-4 * std::max(1.0, std::abs(qc[k].C3)));

        // ∂F/∂Ẽ is the other quadrature constant scaled by −m
        const double dF = hj_invariant_derivative(row, inv, &InvariantTriple::Etilde, axis_z, pot);
        CHECK(std::abs(dF + axis_z.m * qc[k].C2) <= 1e-4 * std::max(1.0, std::abs(qc[k].C2)));
        dFdEt.push_back(dF);
    }
    const auto [lo, hi] = std::minmax_element(dFdEt.begin(), dFdEt.end());
    CHECK(*hi - *lo <= 1e-4 * std::max(1.0, std::abs(*lo)));
}

TEST_CASE("reconstructed momenta satisfy both invariant relations") {
    const auto pot = orbit_a_potential();
    const auto inv = invariants(orbit_a_state(), axis_z, pot);
    SplitMix64 rng(7733);

    int found = 0;
    while (found < 25) {
        const double alpha = rng.uniform(-1.5, 1.5);
        const double beta = rng.uniform(-1.4, 1.4);
        const double phi = rng.uniform(-3.14, 3.14);
        const auto da = detail::delta_alpha_scaled(alpha, inv, axis_z, pot);
        const auto db = detail::delta_beta_scaled(beta, inv, axis_z, pot);
        if (da.value < 1e-3 * da.scale || db.value < 1e-3 * db.scale) continue;
        ++found;

        SpheroidalPoint pt;
        pt.alpha = alpha;
        pt.beta = beta;
        pt.phi = phi;
        pt.lambda_plus = pow_2(axis_z.a * std::sinh(alpha));
        pt.lambda_minus = -pow_2(axis_z.a * std::sin(beta));
        const Vec3 x = from_spheroidal(pt, axis_z);

        for (const int sa : {1, -1}) {
            for (const int sb : {1, -1}) {
                const auto ps = momentum_from_hj(x, inv, axis_z, pot, sa, sb);
                const double E = norm2(ps.p) / (2.0 * axis_z.m) + U_at(ps.x, axis_z, pot);
                const double Et = dot(ps.p, metric(ps.x, axis_z).apply(ps.p)) / (2.0 * axis_z.m) +
                                  Phi_at(ps.x, axis_z, pot);
                const double ell = dot(axis_z.n, cross(ps.x, ps.p));
                CHECK(std::abs(E - inv.E) <= 1e-8 * std::max(1.0, std::abs(inv.E)));
                CHECK(std::abs(Et - inv.Etilde) <= 1e-8 * std::max(1.0, std::abs(inv.Etilde)));
                CHECK(std::abs(ell - inv.ell) <= 1e-10 * std::max(1.0, std::abs(inv.ell)));
            }
        }
    }
}

TEST_CASE("branch signs enumerate the momenta compatible with a trajectory point") {
    const auto pot = orbit_a_potential();
    const auto s0 = orbit_a_state();
    const auto inv = invariants(s0, axis_z, pot);
    const auto cart = integrate_cartesian(s0, axis_z, pot, 0.2, 1e-12, 81);

    // samples on the three branch patterns the orbit visits in t ∈ [0, 0.2]
    for (const size_t k : {10u, 30u, 60u}) {
        const auto& row = cart.samples[k];
        const auto st = to_separated_state({row.x, row.p}, axis_z);

        // the matching branch reproduces the Cartesian momentum
        const auto match =
            momentum_from_hj(row.x, inv, axis_z, pot, st.sigma_alpha, st.sigma_beta);
        CHECK(norm(match.p - row.p) < 1e-6);

        // the four sign choices give four distinct momenta whose chart
        // components differ only by the flipped signs, so the two mixed
        // choices sum to the same vector as the two aligned ones
        std::vector<Vec3> candidates;
        for (const int sa : {1, -1})
            for (const int sb : {1, -1})
                candidates.push_back(momentum_from_hj(row.x, inv, axis_z, pot, sa, sb).p);
        for (size_t i = 0; i < candidates.size(); ++i)
            for (size_t j = i + 1; j < candidates.size(); ++j)
                CHECK(norm(candidates[i] - candidates[j]) > 1e-6);
        const Vec3 aligned = candidates[0] + candidates[3];
        const Vec3 mixed = candidates[1] + candidates[2];
        CHECK(norm(aligned - mixed) < 1e-12 * std::max(1.0, norm(aligned)));
    }
}

TEST_CASE("turning point observed in the Cartesian chart matches the radicand root") {
    const auto pot = orbit_a_potential();
    const auto s0 = orbit_a_state();
    const auto inv = invariants(s0, axis_z, pot);

    // dense sampling across the first α turning, then a parabolic refine of
    // the extremum through the three samples around the maximum
    const auto cart = integrate_cartesian(s0, axis_z, pot, 0.05, 1e-12, 3001);
    size_t k_max = 1;
    for (size_t k = 1; k + 1 < cart.samples.size(); ++k)
        if (cart.samples[k].alpha > cart.samples[k_max].alpha) k_max = k;
    REQUIRE(k_max > 0);
    REQUIRE(k_max + 1 < cart.samples.size());
    const double am = cart.samples[k_max - 1].alpha;
    const double a0 = cart.samples[k_max].alpha;
    const double ap = cart.samples[k_max + 1].alpha;
    const double b = 0.5 * (ap - am);
    const double c = 0.5 * (ap - 2.0 * a0 + am);
    REQUIRE(c < 0.0);
    const double alpha_star = a0 - b * b / (4.0 * c);

    const auto d_star = detail::delta_alpha_scaled(alpha_star, inv, axis_z, pot);
    CHECK(std::abs(d_star.value) <= 1e-8 * d_star.scale);

    // the root-search machinery lands on the same surface
    auto da = [&](double a) { return delta_alpha(a, inv, axis_z, pot); };
    const double alpha_root = detail::find_turning(da, cart.samples.front().alpha, +1);
    CHECK(std::abs(alpha_root - alpha_star) < 1e-6);

    // momentum on the turning surface has no α component
    const double beta_mid = cart.samples[k_max].beta;
    SpheroidalPoint pt;
    pt.alpha = alpha_root;
    pt.beta = beta_mid;
    pt.phi = 0.3;
    pt.lambda_plus = pow_2(axis_z.a * std::sinh(alpha_root));
    pt.lambda_minus = -pow_2(axis_z.a * std::sin(beta_mid));
    const Vec3 x = from_spheroidal(pt, axis_z);
    const auto ps = momentum_from_hj(x, inv, axis_z, pot);
    const auto tan = chart_tangents(to_spheroidal(x, axis_z), axis_z);
    CHECK(std::abs(dot(ps.p, normalized(tan.d_alpha))) < 1e-7 * norm(ps.p));
}

TEST_CASE("forbidden and turning-free configurations are reported") {
    const auto pot = orbit_a_potential();
    const auto inv = invariants(orbit_a_state(), axis_z, pot);

    // bound orbit: far outside the torus both evaluation and reconstruction
    // must refuse
    CHECK_THROWS_AS(hj_eval(3.0, 0.2, 0.0, inv, axis_z, pot), ForbiddenRegion);
    CHECK_THROWS_AS(momentum_from_hj({12.0, 0.0, 3.0}, inv, axis_z, pot), ForbiddenRegion);

    // free motion with an everywhere-positive α radicand has no turning point
    // to anchor the integrals
    CHECK_THROWS_AS(hj_eval(0.8, 1.0, 0.0, {0.5, -0.1, 0.0}, axis_z, free_potential()),
                    QuadratureFailure);

    // empty segment: nothing to evaluate, nothing to throw
    CHECK(quadrature_constants(TrajectoryRecord{}, inv, axis_z, pot).empty());
}
