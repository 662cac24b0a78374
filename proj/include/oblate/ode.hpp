#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>

#include "oblate/errors.hpp"

namespace oblate {

// Dormand–Prince 5(4) embedded pair with the classic quartic dense output.
// Small fixed-size systems only, so states are std::array and the stepper is
// templated on the dimension.  The caller drives stepping explicitly (one
// accepted step per call) because trajectory integration needs to inspect
// every step's dense interpolant for turning-point events before accepting
// more of the solution.

template <int N>
struct DenseStep {
    double t0 = 0.0;
    double h = 0.0;
    std::array<std::array<double, N>, 5> rcont{};

    // valid for t within [t0, t0 + h]
    std::array<double, N> eval(double t) const {
        const double th = (t - t0) / h;
        const double th1 = 1.0 - th;
        std::array<double, N> y;
        for (int i = 0; i < N; ++i)
            y[i] = rcont[0][i] +
                   th * (rcont[1][i] +
                         th1 * (rcont[2][i] + th * (rcont[3][i] + th1 * rcont[4][i])));
        return y;
    }

    double t_end() const { return t0 + h; }
};

template <int N>
class Dopri5 {
  public:
    using State = std::array<double, N>;
    using Rhs = std::function<void(double, const State&, State&)>;

    Dopri5(Rhs rhs, double rtol, double atol)
        : rhs_(std::move(rhs)), rtol_(rtol), atol_(atol) {}

    void init(double t, const State& y) {
        t_ = t;
        y_ = y;
        rhs_(t_, y_, k1_);
        h_ = 0.0;  // pick on first step
        steps_taken_ = 0;
    }

    double t() const { return t_; }
    const State& y() const { return y_; }

    // Override the automatic initial step size (useful when the caller knows
    // the solution has structure below the heuristic's guess).
    void set_initial_step(double h) { h_ = h; }

    // Take exactly one accepted step, never across t_limit; returns the dense
    // interpolant covering [t, t_new].
    DenseStep<N> step(double t_limit) {
        const double dir = (t_limit >= t_) ? 1.0 : -1.0;
        if (h_ == 0.0) h_ = dir * initial_step(dir);

        for (int attempt = 0; attempt < 1000; ++attempt) {
            if (++steps_taken_ > max_steps_)
                throw StepFailure("step budget exhausted at t = " + std::to_string(t_));
            double h = h_;
            if (dir * (t_ + h - t_limit) > 0.0) h = t_limit - t_;
            if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t_)))
                throw StepFailure("step size underflow at t = " + std::to_string(t_));

            State k2, k3, k4, k5, k6, k7, ytmp, y5;
            const State* ks[6] = {&k1_, &k2, &k3, &k4, &k5, &k6};
            auto stage = [&](std::initializer_list<double> a) {
                for (int i = 0; i < N; ++i) {
                    double acc = y_[i];
                    int j = 0;
                    for (double aj : a) {
                        if (aj != 0.0) acc += h * aj * (*ks[j])[i];
                        ++j;
                    }
                    ytmp[i] = acc;
                }
            };

            stage({1.0 / 5});
            rhs_(t_ + h / 5.0, ytmp, k2);
            stage({3.0 / 40, 9.0 / 40});
            rhs_(t_ + 3.0 * h / 10.0, ytmp, k3);
            stage({44.0 / 45, -56.0 / 15, 32.0 / 9});
            rhs_(t_ + 4.0 * h / 5.0, ytmp, k4);
            stage({19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729});
            rhs_(t_ + 8.0 * h / 9.0, ytmp, k5);
            stage({9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656});
            rhs_(t_ + h, ytmp, k6);
            for (int i = 0; i < N; ++i)
                y5[i] = y_[i] + h * (35.0 / 384 * k1_[i] + 500.0 / 1113 * k3[i] +
                                     125.0 / 192 * k4[i] - 2187.0 / 6784 * k5[i] +
                                     11.0 / 84 * k6[i]);
            rhs_(t_ + h, y5, k7);  // FSAL stage

            // scaled RMS error of the embedded 4th-order difference
            double err2 = 0.0;
            for (int i = 0; i < N; ++i) {
                const double e = h * (71.0 / 57600 * k1_[i] - 71.0 / 16695 * k3[i] +
                                      71.0 / 1920 * k4[i] - 17253.0 / 339200 * k5[i] +
                                      22.0 / 525 * k6[i] - 1.0 / 40 * k7[i]);
                const double sc = atol_ + rtol_ * std::max(std::abs(y_[i]), std::abs(y5[i]));
                err2 += (e / sc) * (e / sc);
            }
            const double err = std::sqrt(err2 / N);

            const double factor =
                std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.2), 0.2, 5.0);
            if (err <= 1.0) {
                DenseStep<N> dense;
                dense.t0 = t_;
                dense.h = h;
                for (int i = 0; i < N; ++i) {
                    const double dy = y5[i] - y_[i];
                    dense.rcont[0][i] = y_[i];
                    dense.rcont[1][i] = dy;
                    dense.rcont[2][i] = h * k1_[i] - dy;
                    dense.rcont[3][i] = dy - h * k7[i] - dense.rcont[2][i];
                    dense.rcont[4][i] =
                        h * (d1_ * k1_[i] + d3_ * k3[i] + d4_ * k4[i] + d5_ * k5[i] +
                             d6_ * k6[i] + d7_ * k7[i]);
                }
                t_ += h;
                y_ = y5;
                k1_ = k7;
                h_ = (std::abs(h) < std::abs(h_)) ? h_ : factor * h;  // keep budget if clipped
                return dense;
            }
            h_ = factor * h;  // rejected: shrink (factor < 0.9 here) and retry
        }
        throw StepFailure("repeated step rejection at t = " + std::to_string(t_));
    }

    void set_max_steps(long n) { max_steps_ = n; }

  private:
    // crude version of the standard starting-step heuristic
    double initial_step(double dir) const {
        double dy = 0.0, df = 0.0;
        for (int i = 0; i < N; ++i) {
            const double sc = atol_ + rtol_ * std::abs(y_[i]);
            dy += (y_[i] / sc) * (y_[i] / sc);
            df += (k1_[i] / sc) * (k1_[i] / sc);
        }
        double h0 = (dy > 1e-10 && df > 1e-10) ? 0.01 * std::sqrt(dy / df) : 1e-6;

        // probe the second derivative with one Euler step
        State y1, f1;
        for (int i = 0; i < N; ++i) y1[i] = y_[i] + dir * h0 * k1_[i];
        rhs_(t_ + dir * h0, y1, f1);
        double d2 = 0.0;
        for (int i = 0; i < N; ++i) {
            const double sc = atol_ + rtol_ * std::abs(y_[i]);
            d2 += ((f1[i] - k1_[i]) / sc) * ((f1[i] - k1_[i]) / sc);
        }
        d2 = std::sqrt(d2) / h0;
        const double dmax = std::max(std::sqrt(df), d2);
        const double h1 = (dmax > 1e-15) ? std::pow(0.01 / dmax, 0.2) : std::max(1e-6, h0 * 1e-3);
        return std::min(100.0 * h0, h1);
    }

    static constexpr double d1_ = -12715105075.0 / 11282082432.0;
    static constexpr double d3_ = 87487479700.0 / 32700410799.0;
    static constexpr double d4_ = -10690763975.0 / 1880347072.0;
    static constexpr double d5_ = 701980252875.0 / 199316789632.0;
    static constexpr double d6_ = -1453857185.0 / 822651844.0;
    static constexpr double d7_ = 69997945.0 / 29380423.0;

    Rhs rhs_;
    double rtol_;
    double atol_;
    double t_ = 0.0;
    State y_{};
    State k1_{};
    double h_ = 0.0;
    long steps_taken_ = 0;
    long max_steps_ = 1000000;
};

}  // namespace oblate
