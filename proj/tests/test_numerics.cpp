#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>

#include "oblate/ode.hpp"
#include "oblate/quadrature.hpp"

using namespace oblate;

TEST_CASE("stepper reproduces the exponential") {
    Dopri5<1> solver([](double, const std::array<double, 1>& y,
                        std::array<double, 1>& dy) { dy[0] = y[0]; },
                     1e-10, 1e-12);
    solver.init(0.0, {1.0});
    while (solver.t() < 2.0) solver.step(2.0);
    CHECK(solver.t() == Catch::Approx(2.0).margin(1e-14));
    CHECK(solver.y()[0] == Catch::Approx(std::exp(2.0)).epsilon(1e-9));
}

TEST_CASE("dense output is accurate inside each step") {
    // harmonic oscillator: y = (cos t, −sin t)
    Dopri5<2> solver(
        [](double, const std::array<double, 2>& y, std::array<double, 2>& dy) {
            dy[0] = y[1];
            dy[1] = -y[0];
        },
        1e-10, 1e-12);
    solver.init(0.0, {1.0, 0.0});
    double worst = 0.0;
    while (solver.t() < 20.0) {
        const auto dense = solver.step(20.0);
        for (int k = 1; k < 8; ++k) {
            const double t = dense.t0 + dense.h * k / 8.0;
            const auto y = dense.eval(t);
            worst = std::max(worst, std::abs(y[0] - std::cos(t)));
            worst = std::max(worst, std::abs(y[1] + std::sin(t)));
        }
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("stepper integrates backwards") {
    Dopri5<1> solver([](double t, const std::array<double, 1>&,
                        std::array<double, 1>& dy) { dy[0] = 2.0 * t; },
                     1e-10, 1e-12);
    solver.init(1.0, {1.0});  // y = t²
    while (solver.t() > -2.0) solver.step(-2.0);
    CHECK(solver.y()[0] == Catch::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("step budget failure is reported") {
    Dopri5<1> solver([](double, const std::array<double, 1>& y,
                        std::array<double, 1>& dy) { dy[0] = y[0] * y[0]; },
                     1e-10, 1e-12);
    solver.init(0.0, {1.0});  // blows up at t = 1
    solver.set_max_steps(10000);
    CHECK_THROWS_AS(
        [&] {
            while (solver.t() < 2.0) solver.step(2.0);
        }(),
        StepFailure);
}

TEST_CASE("fixed rule is exact on low-degree polynomials") {
    const auto r = gauss_kronrod_15([](double x) { return x * x; }, 0.0, 1.0);
    CHECK(r.value == Catch::Approx(1.0 / 3.0).epsilon(1e-15));
    const auto s = gauss_kronrod_15([](double x) { return std::sin(x); }, 0.0, std::numbers::pi);
    CHECK(s.value == Catch::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("adaptive quadrature resolves a sharp peak") {
    const double eps = 1e-4;
    const double exact =
        (std::atan(0.5 / std::sqrt(eps)) - std::atan(-0.5 / std::sqrt(eps))) / std::sqrt(eps);
    const double got = integrate_adaptive(
        [eps](double x) { return 1.0 / (eps + (x - 0.5) * (x - 0.5)); }, 0.0, 1.0, 1e-12);
    CHECK(got == Catch::Approx(exact).epsilon(1e-11));
}

TEST_CASE("root finding") {
    const double root = brent_root([](double x) { return std::cos(x); }, 0.0, 2.0, 1e-15);
    CHECK(root == Catch::Approx(0.5 * std::numbers::pi).margin(1e-13));
    CHECK_THROWS_AS(brent_root([](double x) { return 1.0 + x * x; }, 0.0, 1.0, 1e-12), Error);
}
