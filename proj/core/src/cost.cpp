#include "smplab/cost.hpp"

#include <cmath>

namespace smplab {

Estimate estimate(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n == 0) return {};
    double sum = 0.0;
    for (double x : samples) sum += x;
    const double mean = sum / static_cast<double>(n);
    if (n == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : samples) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n))};
}

double path_cost(const Problem& problem, const StatePath& path, const ControlProcess& u) {
    if (!(path.grid() == u.grid())) throw Error(ErrorCode::grid_mismatch, "path and control grids differ");
    const auto& c = problem.cost();
    const double h = u.grid().step();
    double j = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) j += h * c.running_value(path.state(i), u[i]);
    return j + c.terminal_value(path.terminal());
}

CostReport cost_evaluate(const Problem& problem, const PathEnsemble& ensemble) {
    if (!(problem.grid() == ensemble.grid())) throw Error(ErrorCode::grid_mismatch, "ensemble grid does not match the scenario");
    CostReport r;
    r.per_path.resize(ensemble.n_paths());
    for (std::size_t p = 0; p < ensemble.n_paths(); ++p)
        r.per_path[p] = path_cost(problem, ensemble.paths[p], ensemble.control);
    r.value = estimate(r.per_path);
    return r;
}

GradientFields cost_gradient_fields(const Problem& problem, const StatePath& path, const ControlProcess& u) {
    if (!(path.grid() == u.grid())) throw Error(ErrorCode::grid_mismatch, "path and control grids differ");
    const auto& c = problem.cost();
    const std::size_t n = path.n_modes();
    GradientFields g;
    g.l_x.reserve(u.size());
    g.l_u.reserve(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        ModalVector lx(n);
        c.running_gradient_x(path.state(i), lx.span());
        g.l_x.push_back(std::move(lx));
        g.l_u.push_back(c.running_gradient_u(u[i]));
    }
    g.h_x = ModalVector(n);
    c.terminal_gradient_x(path.terminal(), g.h_x.span());
    return g;
}

}  // namespace smplab
