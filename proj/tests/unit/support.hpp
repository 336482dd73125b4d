#pragma once

#include <cmath>
#include <vector>

#include "smplab/model.hpp"

namespace smplab::test {

/// Composite Gauss–Legendre (5 nodes per panel) on [a, b].
template <typename Fn>
double gauss_legendre(Fn&& f, double a, double b, std::size_t panels) {
    static constexpr double xs[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                     0.9061798459386640};
    static constexpr double ws[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                     0.2369268850561891, 0.2369268850561891};
    const double w = (b - a) / static_cast<double>(panels);
    double sum = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + w * static_cast<double>(p);
        const double mid = lo + 0.5 * w;
        double s = 0.0;
        for (int j = 0; j < 5; ++j) s += ws[j] * f(mid + 0.5 * w * xs[j]);
        sum += 0.5 * w * s;
    }
    return sum;
}

/// Deterministic scenario: g off, noise off, f = 0, box controls.
inline Scenario quiet_scenario(std::size_t n_modes, std::size_t n_steps, double horizon = 1.0) {
    return Scenario{.basis = build_basis(n_modes, 1.0, 2 * n_modes),
                    .horizon = horizon,
                    .n_steps = n_steps,
                    .f = ScalarFunction::linear(0.0),
                    .g = std::nullopt,
                    .boundary_noise = {},
                    .control_set = ControlSet::box({-1.0, -1.0}, {1.0, 1.0}),
                    .initial_state = ModalVector(n_modes),
                    .n_paths = 1,
                    .seed = 1};
}

}  // namespace smplab::test
