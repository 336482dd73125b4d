#pragma once

#include <vector>

#include "smplab/forward.hpp"

namespace smplab {

/// Monte-Carlo estimate with its standard error.
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Mean and standard error of a per-path sample (fixed summation order).
[[nodiscard]] Estimate estimate(std::span<const double> samples);

/// Σ_i h·l(X_i, u_i) + h(X_n) along one path (left-endpoint rule).
[[nodiscard]] double path_cost(const Problem& problem, const StatePath& path, const ControlProcess& u);

struct CostReport {
    Estimate value;
    std::vector<double> per_path;
};

/// J(u) over the ensemble, which must have been simulated under `u`'s grid.
[[nodiscard]] CostReport cost_evaluate(const Problem& problem, const PathEnsemble& ensemble);

struct GradientFields {
    std::vector<ModalVector> l_x;  ///< per step
    std::vector<Control2> l_u;     ///< per step
    ModalVector h_x;               ///< terminal
};

[[nodiscard]] GradientFields cost_gradient_fields(const Problem& problem, const StatePath& path,
                                                  const ControlProcess& u);

}  // namespace smplab
