#include "smplab/smp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "smplab/csv.hpp"
#include "smplab/parallel.hpp"

namespace smplab {

namespace {

bool near_integer(double x, double tol = 1e-9) { return std::abs(x - std::round(x)) <= tol * std::max(1.0, std::abs(x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Spikes
// ---------------------------------------------------------------------------

StepRange spike_steps(const TimeGrid& grid, const SpikeSpec& spec, SpikeAlignment alignment) {
    const double h = grid.step();
    if (!(spec.epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "spike: epsilon must be positive");
    if (spec.t_bar < 0.0 || spec.t_bar + spec.epsilon > grid.horizon * (1.0 + 1e-12))
        throw Error(ErrorCode::invalid_argument, "spike: window [t_bar, t_bar + epsilon] leaves [0, T]");
    const double a = spec.t_bar / h;
    const double b = spec.epsilon / h;
    StepRange r;
    if (alignment == SpikeAlignment::strict) {
        if (!near_integer(a) || !near_integer(b))
            throw Error(ErrorCode::invalid_argument, "spike window not step-aligned (t_bar/h = " + format_double(a) +
                                                         ", epsilon/h = " + format_double(b) + ")");
        r.first = static_cast<std::size_t>(std::llround(a));
        r.last = r.first + static_cast<std::size_t>(std::llround(b));
    } else {
        r.first = static_cast<std::size_t>(std::ceil(a - 1e-9));
        const double end = std::floor(a + b + 1e-9);
        r.last = std::max(r.first, static_cast<std::size_t>(std::max(0.0, end)));
    }
    r.last = std::min(r.last, grid.n_steps);
    r.first = std::min(r.first, r.last);
    return r;
}

ControlProcess spike_control(const ControlProcess& u_bar, const SpikeSpec& spec, const ControlSet& set,
                             SpikeAlignment alignment) {
    if (!set.contains(spec.v)) throw Error(ErrorCode::invalid_argument, "spike: v is not in the control set");
    const auto r = spike_steps(u_bar.grid(), spec, alignment);
    auto values = u_bar.values();
    for (std::size_t i = r.first; i < r.last; ++i) values[i] = spec.v;
    return ControlProcess(u_bar.grid(), std::move(values)).tagged(set);
}

LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::invalid_argument, "fit_loglog needs >= 2 points");
    const double n = static_cast<double>(x.size());
    std::vector<double> lx(x.size());
    std::vector<double> ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw Error(ErrorCode::invalid_argument, "fit_loglog needs positive data");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    LogLogFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (lx.size() > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            const double e = ly[i] - f.intercept - f.slope * lx[i];
            rss += e * e;
        }
        f.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
    }
    return f;
}

namespace {

struct RateSamples {
    // [epsilon][path]
    std::vector<std::vector<double>> delta;
    std::vector<std::vector<double>> eta;
    std::vector<std::vector<double>> xtilde;

    RateSamples(std::size_t n_eps, std::size_t n_paths)
        : delta(n_eps, std::vector<double>(n_paths)),
          eta(n_eps, std::vector<double>(n_paths)),
          xtilde(n_eps, std::vector<double>(n_paths)) {}
};

/// One path of the study: X̄ once, then X^ε and X̃^ε from t̄ on for every ε.
void rate_path(const Problem& problem, const Stepper& st, const ControlProcess& u_bar, const SpikeLadder& ladder,
               const PathNoise& noise, RateSamples& out, std::size_t slot) {
    const auto grid = u_bar.grid();
    const std::size_t n = grid.n_steps;
    const std::size_t nm = problem.n_modes();
    const StatePath xbar = simulate_path(problem, u_bar, noise);

    const auto first = spike_steps(grid, {ladder.t_bar, ladder.epsilons.front(), ladder.v}, SpikeAlignment::strict).first;
    std::vector<Linearization> lins(n - first);
    for (std::size_t i = first; i < n; ++i) st.linearize(xbar.state(i), lins[i - first]);

    std::vector<double> xe(nm), xe_next(nm), xt(nm), xt_next(nm);
    for (std::size_t e = 0; e < ladder.epsilons.size(); ++e) {
        const auto r = spike_steps(grid, {ladder.t_bar, ladder.epsilons[e], ladder.v}, SpikeAlignment::strict);
        const auto x0 = xbar.state(first);
        std::copy(x0.begin(), x0.end(), xe.begin());
        std::fill(xt.begin(), xt.end(), 0.0);
        double sup_d = 0.0;
        double sup_eta = 0.0;
        double sup_xt = 0.0;
        for (std::size_t i = first; i < n; ++i) {
            const bool in = i < r.last;
            const Control2 u = in ? ladder.v : u_bar[i];
            const Control2 d = in ? Control2{ladder.v[0] - u_bar[i][0], ladder.v[1] - u_bar[i][1]} : Control2{0.0, 0.0};
            st.advance(xe, u, noise, i, xe_next);
            st.advance_variation(xt, lins[i - first], d, noise, i, xt_next);
            const auto xb = xbar.state(i + 1);
            double sd = 0.0;
            double se = 0.0;
            double st2 = 0.0;
            for (std::size_t k = 0; k < nm; ++k) {
                const double diff = xe_next[k] - xb[k];
                sd += diff * diff;
                se += (diff - xt_next[k]) * (diff - xt_next[k]);
                st2 += xt_next[k] * xt_next[k];
            }
            sup_d = std::max(sup_d, sd);
            sup_eta = std::max(sup_eta, se);
            sup_xt = std::max(sup_xt, st2);
            std::swap(xe, xe_next);
            std::swap(xt, xt_next);
        }
        out.delta[e][slot] = std::sqrt(sup_d);
        out.eta[e][slot] = std::sqrt(sup_eta);
        out.xtilde[e][slot] = std::sqrt(sup_xt);
    }
}

std::vector<double> means(const std::vector<std::vector<double>>& s) {
    std::vector<double> m;
    for (const auto& v : s) m.push_back(estimate(v).mean);
    return m;
}

bool all_negligible(const std::vector<double>& eta, const std::vector<double>& delta) {
    for (std::size_t e = 0; e < eta.size(); ++e)
        if (eta[e] > 1e-10 * delta[e]) return false;
    return true;
}

Problem with_modes(const Problem& p, std::size_t n) {
    Scenario s = p.scenario();
    const auto& b = s.basis;
    s.basis = build_basis(n, b.lambda(), std::max<std::size_t>(2 * n, b.grid_size() * n / b.n_modes()));
    s.initial_state = s.initial_state.resized(n);
    CostSpec c = p.cost();
    for (ModalVector* v : {&c.running.tracking_target, &c.running.linear, &c.terminal.tracking_target, &c.terminal.linear})
        if (v->size() > n) *v = v->resized(n);
    return Problem(std::move(s), std::move(c));
}

ControlProcess coarsen_control(const ControlProcess& u) {
    const TimeGrid g{u.grid().horizon, u.grid().n_steps / 2};
    std::vector<Control2> v(g.n_steps);
    for (std::size_t j = 0; j < g.n_steps; ++j)
        v[j] = {0.5 * (u[2 * j][0] + u[2 * j + 1][0]), 0.5 * (u[2 * j][1] + u[2 * j + 1][1])};
    return ControlProcess(g, std::move(v));
}

}  // namespace

RateReport spike_rate_study(const Problem& problem, const ControlProcess& u_bar, const SpikeLadder& ladder,
                            const RateOptions& options) {
    if (!(u_bar.grid() == problem.grid())) throw Error(ErrorCode::grid_mismatch, "u_bar is not on the problem's grid");
    const auto& eps = ladder.epsilons;
    if (eps.size() < 2) throw Error(ErrorCode::invalid_argument, "spike ladder needs at least two epsilons");
    for (std::size_t e = 1; e < eps.size(); ++e)
        if (!(eps[e] < eps[e - 1])) throw Error(ErrorCode::invalid_argument, "spike ladder must be strictly decreasing");
    if (!problem.scenario().control_set.contains(ladder.v))
        throw Error(ErrorCode::invalid_argument, "spike: v is not in the control set");
    for (double e : eps) (void)spike_steps(problem.grid(), {ladder.t_bar, e, ladder.v}, SpikeAlignment::strict);

    const std::size_t np = problem.scenario().n_paths;
    const std::size_t nm = problem.n_modes();
    const bool refine_modes = options.refine_modes && nm >= 4;
    const bool refine_step = options.refine_step;
    std::optional<Problem> half_modes;
    std::optional<Problem> half_steps;
    std::optional<ControlProcess> u_coarse;
    if (refine_modes) half_modes.emplace(with_modes(problem, nm / 2));
    if (refine_step) {
        if (problem.grid().n_steps % 2 != 0)
            throw Error(ErrorCode::invalid_argument, "step refinement needs an even number of steps");
        Scenario s = problem.scenario();
        s.n_steps /= 2;
        half_steps.emplace(problem.with_scenario(std::move(s)));
        u_coarse.emplace(coarsen_control(u_bar));
        for (double e : eps) (void)spike_steps(half_steps->grid(), {ladder.t_bar, e, ladder.v}, SpikeAlignment::strict);
    }

    const Stepper st(problem);
    std::optional<Stepper> st_modes;
    std::optional<Stepper> st_steps;
    if (half_modes) st_modes.emplace(*half_modes);
    if (half_steps) st_steps.emplace(*half_steps);

    RateSamples base(eps.size(), np);
    RateSamples ref_modes(eps.size(), refine_modes ? np : 0);
    RateSamples ref_steps(eps.size(), refine_step ? np : 0);
    const NoiseLineage lineage = NoiseLineage::of(problem);
    parallel_for(np, [&](std::size_t p) {
        try {
            const PathNoise noise(lineage, p);
            rate_path(problem, st, u_bar, ladder, noise, base, p);
            if (half_modes) {
                const PathNoise nz = noise.distributed_dim() > 0 ? noise.truncated(nm / 2) : noise;
                rate_path(*half_modes, *st_modes, u_bar, ladder, nz, ref_modes, p);
            }
            if (half_steps) rate_path(*half_steps, *st_steps, *u_coarse, ladder, noise.coarsened(2), ref_steps, p);
        } catch (const Error& e) {
            throw Error(e.code(), "path " + std::to_string(p) + ": " + e.what());
        }
    });

    RateReport r;
    r.epsilons = eps;
    for (std::size_t e = 0; e < eps.size(); ++e) {
        r.delta.push_back(estimate(base.delta[e]));
        r.eta.push_back(estimate(base.eta[e]));
        std::vector<double> p2(np), p4(np);
        for (std::size_t p = 0; p < np; ++p) {
            const double x2 = base.xtilde[e][p] * base.xtilde[e][p];
            p2[p] = x2;
            p4[p] = x2 * x2;
        }
        r.xtilde_p2.push_back(estimate(p2));
        r.xtilde_p4.push_back(estimate(p4));
    }
    const auto d_mean = means(base.delta);
    const auto e_mean = means(base.eta);
    r.delta_fit = fit_loglog(eps, d_mean);
    r.eta_vanishes = all_negligible(e_mean, d_mean);
    if (!r.eta_vanishes) r.eta_fit = fit_loglog(eps, e_mean);

    double min_gap = std::numeric_limits<double>::infinity();
    double max_se = 0.0;
    for (std::size_t e = 0; e < eps.size(); ++e) {
        max_se = std::max(max_se, r.delta[e].se);
        if (e > 0) min_gap = std::min(min_gap, std::abs(d_mean[e] - d_mean[e - 1]));
    }
    r.mc_resolved = max_se <= 0.5 * min_gap;
    r.mc_note = "max SE of Delta " + format_double(max_se) + (r.mc_resolved ? " <= " : " > ") +
                "half the smallest gap " + format_double(0.5 * min_gap);

    const auto add_ref = [&](const char* label, const RateSamples& s) {
        RefinementDelta d;
        d.label = label;
        const auto dm = means(s.delta);
        const auto em = means(s.eta);
        d.delta_slope_change = fit_loglog(eps, dm).slope - r.delta_fit.slope;
        if (!r.eta_vanishes && !all_negligible(em, dm)) d.eta_slope_change = fit_loglog(eps, em).slope - r.eta_fit.slope;
        for (std::size_t e = 0; e < eps.size(); ++e)
            d.max_relative_change = std::max(d.max_relative_change, std::abs(dm[e] - d_mean[e]) / d_mean[e]);
        r.refinements.push_back(d);
    };
    if (refine_modes) add_ref("modes N/2", ref_modes);
    if (refine_step) add_ref("step 2h", ref_steps);
    return r;
}

// ---------------------------------------------------------------------------
// Hamiltonian
// ---------------------------------------------------------------------------

HamiltonianValue hamiltonian(std::size_t /*step*/, std::span<const double> x, const Control2& v, const Control2& beta,
                             const CostSpec& cost) {
    HamiltonianValue h;
    h.pairing = beta[0] * v[0] + beta[1] * v[1];
    h.running = cost.running_value(x, v);
    h.value = h.pairing - h.running;
    return h;
}

namespace {

void check_adjoint(const Problem& problem, const PathEnsemble& ensemble, const AdjointEnsemble& adjoint) {
    if (!(ensemble.grid() == problem.grid()) || !(adjoint.grid() == ensemble.grid()))
        throw Error(ErrorCode::grid_mismatch, "ensemble, adjoint and problem grids differ");
    if (!ensemble.noise || !adjoint.noise || !(ensemble.lineage() == adjoint.noise->lineage()))
        throw Error(ErrorCode::lineage_mismatch, "adjoint was not solved on this ensemble's noise");
    if (adjoint.n_paths() != ensemble.n_paths() || !(adjoint.control == ensemble.control))
        throw Error(ErrorCode::lineage_mismatch, "adjoint was not solved along this ensemble");
}

/// Cross-path mean of β_step at step i and its MC + regression error per side.
std::pair<Control2, Control2> mean_beta(const AdjointEnsemble& adj, std::size_t i) {
    std::vector<double> l(adj.n_paths());
    std::vector<double> r(adj.n_paths());
    for (std::size_t p = 0; p < adj.n_paths(); ++p) {
        l[p] = adj.paths[p].beta_step(i)[0];
        r[p] = adj.paths[p].beta_step(i)[1];
    }
    const auto el = estimate(l);
    const auto er = estimate(r);
    const auto reg = adj.beta_step_se[i];
    return {{el.mean, er.mean}, {std::hypot(el.se, reg[0]), std::hypot(er.se, reg[1])}};
}

double control_h(const CostSpec& c, const Control2& beta, const Control2& v) {
    return beta[0] * v[0] + beta[1] * v[1] - c.running_control_part(v);
}

}  // namespace

ViolationReport verify_smp(const Problem& problem, const PathEnsemble& ensemble, const AdjointEnsemble& adjoint,
                           double factor) {
    check_adjoint(problem, ensemble, adjoint);
    const auto& cost = problem.cost();
    const auto& grid = ensemble.grid();
    const auto probes = problem.scenario().control_set.probe_points();
    const std::size_t np = ensemble.n_paths();

    ViolationReport rep;
    rep.min_path_gap = std::numeric_limits<double>::infinity();
    rep.steps.resize(grid.n_steps);
    double scale = 0.0;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        const Control2 ub = ensemble.control[i];
        const auto [beta, err] = mean_beta(adjoint, i);
        auto& s = rep.steps[i];
        s.step = i;
        s.time = grid.time(i);
        const double h_bar = control_h(cost, beta, ub);
        double best = h_bar;
        s.argmax = ub;
        for (const auto& v : probes) {
            const double hv = control_h(cost, beta, v);
            if (hv > best) {
                best = hv;
                s.argmax = v;
            }
            s.error = std::max(s.error, err[0] * std::abs(v[0] - ub[0]) + err[1] * std::abs(v[1] - ub[1]));
        }
        s.gap = best - h_bar;
        scale = std::max(scale, std::abs(h_bar));

        double gmax = 0.0;
        double gsum = 0.0;
        double gmin = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < np; ++p) {
            const auto& b = adjoint.paths[p].beta_step(i);
            const double hu = control_h(cost, b, ub);
            double m = hu;
            for (const auto& v : probes) m = std::max(m, control_h(cost, b, v));
            const double g = m - hu;
            gmax = std::max(gmax, g);
            gmin = std::min(gmin, g);
            gsum += g;
        }
        s.path_gap_max = gmax;
        s.path_gap_mean = gsum / static_cast<double>(np);
        rep.min_path_gap = std::min(rep.min_path_gap, gmin);

        if (s.gap > rep.max_gap) {
            rep.max_gap = s.gap;
            rep.worst_step = i;
        }
        rep.mean_gap += s.gap / static_cast<double>(grid.n_steps);
        rep.max_error = std::max(rep.max_error, s.error);
    }
    const double floor = 1e-12 * (1.0 + scale);
    for (const auto& s : rep.steps)
        if (s.gap > factor * s.error + floor) rep.violations.push_back(s.step);
    return rep;
}

// ---------------------------------------------------------------------------
// Duality and gradients
// ---------------------------------------------------------------------------

DualityResidual duality_residual(const Problem& problem, const PathEnsemble& ensemble, std::span<const StatePath> x_tilde,
                                 const AdjointEnsemble& adjoint, const ControlProcess& direction, Pairing pairing) {
    check_adjoint(problem, ensemble, adjoint);
    if (!(direction.grid() == ensemble.grid())) throw Error(ErrorCode::grid_mismatch, "direction grid differs");
    if (x_tilde.size() != ensemble.n_paths())
        throw Error(ErrorCode::lineage_mismatch, "first variation has a different number of paths");
    const auto& cost = problem.cost();
    const std::size_t np = ensemble.n_paths();
    const std::size_t nm = problem.n_modes();
    const std::size_t n = ensemble.grid().n_steps;
    const double h = ensemble.grid().step();

    std::vector<double> total(np), term(np), run(np), bnd(np);
    parallel_for(np, [&](std::size_t p) {
        const auto& xb = ensemble.paths[p];
        const auto& xt = x_tilde[p];
        if (xt.path() != xb.path() || !(xt.grid() == xb.grid()))
            throw Error(ErrorCode::lineage_mismatch, "first variation path " + std::to_string(p) + " does not match");
        std::vector<double> g(nm);
        cost.terminal_gradient_x(xb.terminal(), g);
        term[p] = dot(std::span<const double>(g), xt.terminal());
        double r = 0.0;
        double b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cost.running_gradient_x(xb.state(i), g);
            r += h * dot(std::span<const double>(g), xt.state(i));
            const Control2 beta = pairing == Pairing::step ? adjoint.paths[p].beta_step(i) : adjoint.paths[p].beta(i);
            b += h * (beta[0] * direction[i][0] + beta[1] * direction[i][1]);
        }
        run[p] = r;
        bnd[p] = b;
        total[p] = term[p] + r + b;
    });
    DualityResidual d;
    d.value = estimate(total);
    d.terminal = estimate(term).mean;
    d.running = estimate(run).mean;
    d.boundary = estimate(bnd).mean;
    return d;
}

double ControlGradient::directional(const ControlProcess& v) const {
    if (!(v.grid() == grid)) throw Error(ErrorCode::grid_mismatch, "direction grid differs from the gradient's");
    const double h = grid.step();
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += h * (g[i][0] * v[i][0] + g[i][1] * v[i][1]);
    return s;
}

double ControlGradient::directional_se(const ControlProcess& v) const {
    if (!(v.grid() == grid)) throw Error(ErrorCode::grid_mismatch, "direction grid differs from the gradient's");
    // errors of different steps added linearly (they are correlated)
    const double h = grid.step();
    double s = 0.0;
    for (std::size_t i = 0; i < se.size(); ++i) s += h * (se[i][0] * std::abs(v[i][0]) + se[i][1] * std::abs(v[i][1]));
    return s;
}

double ControlGradient::l2_norm() const {
    const double h = grid.step();
    double s = 0.0;
    for (const auto& x : g) s += h * (x[0] * x[0] + x[1] * x[1]);
    return std::sqrt(s);
}

ControlGradient gradient_adjoint(const Problem& problem, const PathEnsemble& ensemble, const AdjointEnsemble& adjoint) {
    require_convex_case(problem);
    check_adjoint(problem, ensemble, adjoint);
    const auto& cost = problem.cost();
    ControlGradient out;
    out.grid = ensemble.grid();
    const std::size_t n = out.grid.n_steps;
    out.g.resize(n);
    out.se.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        // the control is deterministic, so l_u is the same on every path
        const Control2 lu = cost.running_gradient_u(ensemble.control[i]);
        const auto [beta, err] = mean_beta(adjoint, i);
        out.g[i] = {lu[0] - beta[0], lu[1] - beta[1]};
        out.se[i] = err;
    }
    return out;
}

FdResult gradient_fd(const Problem& problem, const ControlProcess& u, const ControlProcess& v,
                     std::shared_ptr<const NoiseBundle> noise, const FdOptions& options) {
    const auto& th = options.thetas;
    if (th.empty()) throw Error(ErrorCode::invalid_argument, "gradient_fd needs at least one theta");
    for (std::size_t j = 0; j < th.size(); ++j)
        if (!(th[j] > 0.0) || (j > 0 && !(th[j] < th[j - 1])))
            throw Error(ErrorCode::invalid_argument, "theta ladder must be positive and decreasing");
    FdResult r;
    std::vector<double> finest;
    double abs_cost = 0.0;
    for (double t : th) {
        const auto plus = cost_evaluate(problem, simulate_ensemble(problem, u + t * v, noise));
        const auto minus = cost_evaluate(problem, simulate_ensemble(problem, u - t * v, noise));
        std::vector<double> d(plus.per_path.size());
        double a = 0.0;
        for (std::size_t p = 0; p < d.size(); ++p) {
            d[p] = (plus.per_path[p] - minus.per_path[p]) / (2.0 * t);
            a += std::abs(plus.per_path[p]) + std::abs(minus.per_path[p]);
        }
        r.central.push_back(estimate(d).mean);
        finest = std::move(d);
        abs_cost = a / static_cast<double>(plus.per_path.size());
    }
    r.se = estimate(finest).se;
    r.noise_floor = std::numeric_limits<double>::epsilon() * abs_cost / (2.0 * th.back());

    std::vector<double> rich;
    for (std::size_t j = 1; j < th.size(); ++j) {
        const double q = (th[j - 1] / th[j]) * (th[j - 1] / th[j]);
        rich.push_back((q * r.central[j] - r.central[j - 1]) / (q - 1.0));
    }
    if (rich.empty()) {
        r.value = r.central.back();
        r.richardson_error = std::numeric_limits<double>::quiet_NaN();
    } else {
        r.value = rich.back();
        r.richardson_error = rich.size() >= 2 ? std::abs(rich.back() - rich[rich.size() - 2])
                                              : std::abs(rich.back() - r.central.back());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

const char* to_string(OptimizerStatus s) noexcept {
    switch (s) {
        case OptimizerStatus::converged: return "converged";
        case OptimizerStatus::max_iterations: return "max_iterations";
        case OptimizerStatus::cycling: return "cycling";
        case OptimizerStatus::stalled: return "stalled";
        case OptimizerStatus::diverged: return "diverged";
    }
    return "unknown";
}

double vi_residual(const ControlGradient& g, const ControlProcess& u, const ControlSet& box) {
    if (box.kind() != ControlSet::Kind::box) throw Error(ErrorCode::invalid_argument, "VI residual needs a box");
    if (!(u.grid() == g.grid)) throw Error(ErrorCode::grid_mismatch, "control and gradient grids differ");
    const auto verts = box.vertices();
    const double h = g.grid.step();
    double total = 0.0;
    for (std::size_t i = 0; i < g.g.size(); ++i) {
        double m = 0.0;
        for (const auto& v : verts)
            m = std::max(m, -g.g[i][0] * (v[0] - u[i][0]) - g.g[i][1] * (v[1] - u[i][1]));
        total += h * m;
    }
    return total;
}

namespace {

struct Evaluation {
    PathEnsemble ensemble;
    CostReport cost;
};

Evaluation evaluate(const Problem& problem, const ControlProcess& u, const std::shared_ptr<const NoiseBundle>& noise) {
    auto ens = simulate_ensemble(problem, u, noise);
    auto cost = cost_evaluate(problem, ens);
    return {std::move(ens), std::move(cost)};
}

ControlProcess project(const ControlProcess& u, const ControlSet& set) {
    std::vector<Control2> v(u.values());
    for (auto& x : v) x = set.project(x);
    return ControlProcess(u.grid(), std::move(v)).tagged(set);
}

}  // namespace

OptimizationResult optimize_projected_gradient(const Problem& problem, const ControlProcess& u0,
                                               const ProjectedGradientOptions& options) {
    require_convex_case(problem);
    if (!(options.rho > 0.0)) throw Error(ErrorCode::invalid_argument, "rho must be positive");
    const auto& set = problem.scenario().control_set;
    const auto noise = make_noise(problem);

    OptimizationResult res{project(u0, set), 0.0, 0.0, OptimizerStatus::max_iterations, {}};
    auto cur = evaluate(problem, res.control, noise);
    auto grad = gradient_adjoint(problem, cur.ensemble, solve_adjoint(problem, cur.ensemble, options.regression));
    double rho = options.rho;
    res.cost = cur.cost.value.mean;
    res.residual = vi_residual(grad, res.control, set);
    res.history.push_back({0, res.cost, cur.cost.value.se, res.residual, rho, true});

    std::size_t increases = 0;
    for (std::size_t it = 1; it <= options.max_iters; ++it) {
        if (res.residual <= options.tol * (1.0 + std::abs(res.cost))) {
            res.status = OptimizerStatus::converged;
            break;
        }
        std::size_t halvings = 0;
        bool accepted = false;
        bool stalled = false;
        while (true) {
            std::vector<Control2> next(res.control.size());
            for (std::size_t i = 0; i < next.size(); ++i)
                next[i] = set.project({res.control[i][0] - rho * grad.g[i][0], res.control[i][1] - rho * grad.g[i][1]});
            ControlProcess cand = ControlProcess(res.control.grid(), std::move(next)).tagged(set);
            if (cand == res.control) {
                stalled = true;
                break;
            }
            auto ev = evaluate(problem, cand, noise);
            const double j = ev.cost.value.mean;
            if (!options.monotone || j < res.cost) {
                increases = j > res.cost ? increases + 1 : 0;
                res.control = std::move(cand);
                cur = std::move(ev);
                res.cost = j;
                accepted = true;
                break;
            }
            res.history.push_back({it, j, ev.cost.value.se, res.residual, rho, false});
            if (++halvings > options.max_halvings) {
                stalled = true;
                break;
            }
            rho *= 0.5;
        }
        if (!accepted) {
            res.status = stalled ? OptimizerStatus::stalled : OptimizerStatus::max_iterations;
            break;
        }
        grad = gradient_adjoint(problem, cur.ensemble, solve_adjoint(problem, cur.ensemble, options.regression));
        res.residual = vi_residual(grad, res.control, set);
        res.history.push_back({it, res.cost, cur.cost.value.se, res.residual, rho, true});
        if (increases >= 5) {
            res.status = OptimizerStatus::diverged;
            return res;
        }
    }
    if (res.status == OptimizerStatus::max_iterations && res.residual <= options.tol * (1.0 + std::abs(res.cost)))
        res.status = OptimizerStatus::converged;
    return res;
}

OptimizationResult optimize_msa(const Problem& problem, const ControlProcess& u0, const MsaOptions& options) {
    const auto& set = problem.scenario().control_set;
    if (set.kind() != ControlSet::Kind::finite_set)
        throw Error(ErrorCode::invalid_argument, "MSA needs a finite control set");
    if (!(options.damping >= 0.0 && options.damping < 1.0))
        throw Error(ErrorCode::invalid_argument, "damping must lie in [0, 1)");
    for (const auto& v : u0.values())
        if (!set.contains(v)) throw Error(ErrorCode::invalid_argument, "MSA start control is not admissible");
    const auto& values = set.values();
    const auto noise = make_noise(problem);
    std::mt19937_64 rng(problem.scenario().seed ^ 0x6d73615f64616d70ULL);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    OptimizationResult res{u0.tagged(set), 0.0, 0.0, OptimizerStatus::max_iterations, {}};
    ControlProcess u = res.control;
    auto ev = evaluate(problem, u, noise);
    auto adj = solve_adjoint(problem, ev.ensemble, options.regression);
    auto report = verify_smp(problem, ev.ensemble, adj);
    std::vector<std::vector<Control2>> visited{u.values()};
    ControlProcess best = u;
    double best_cost = ev.cost.value.mean;
    double best_gap = report.max_gap;
    res.history.push_back({0, best_cost, ev.cost.value.se, report.max_gap, 0.0, true});

    const auto finish = [&](OptimizerStatus st, const ControlProcess& c, double j, double gap) {
        res.control = c.tagged(set);
        res.cost = j;
        res.residual = gap;
        res.status = st;
        return res;
    };

    for (std::size_t it = 1;; ++it) {
        // pointwise argmax of the mean Hamiltonian; ties keep the current value
        std::vector<Control2> target(u.values());
        std::size_t wanted = 0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const Control2 beta = mean_beta(adj, i).first;
            double h_best = control_h(problem.cost(), beta, u[i]);
            for (const auto& v : values) {
                const double hv = control_h(problem.cost(), beta, v);
                if (hv > h_best + 1e-14 * (1.0 + std::abs(h_best))) {
                    h_best = hv;
                    target[i] = v;
                }
            }
            if (target[i] != u[i]) ++wanted;
        }
        if (report.max_gap <= options.tol || wanted == 0)
            return finish(OptimizerStatus::converged, u, ev.cost.value.mean, report.max_gap);
        if (it > options.max_iters) break;

        // candidate updates: damped full updates first, then (safeguarded
        // runs only) every single-step change with positive gain, largest
        // gain first
        struct Move {
            std::size_t step;
            Control2 value;
            double gain;
        };
        std::vector<Move> order;
        if (options.descent_safeguard) {
            for (std::size_t i = 0; i < u.size(); ++i) {
                const Control2 beta = mean_beta(adj, i).first;
                const double h_old = control_h(problem.cost(), beta, u[i]);
                for (const auto& v : values) {
                    const double g = control_h(problem.cost(), beta, v) - h_old;
                    if (v != u[i] && g > 1e-14 * (1.0 + std::abs(h_old))) order.push_back({i, v, g});
                }
            }
            std::stable_sort(order.begin(), order.end(), [](const Move& a, const Move& b) { return a.gain > b.gain; });
        }
        const std::size_t damped = options.descent_safeguard ? options.max_rejections : 1;
        double damping = options.damping;
        bool accepted = false;
        for (std::size_t attempt = 0; attempt < damped + order.size() && !accepted; ++attempt) {
            std::vector<Control2> next(u.values());
            std::size_t changed = 0;
            if (attempt < damped) {
                for (std::size_t i = 0; i < u.size(); ++i) {
                    const bool hold = unif(rng) < damping;  // one draw per step, changed or not
                    if (target[i] != u[i] && !hold) {
                        next[i] = target[i];
                        ++changed;
                    }
                }
                damping = 1.0 - 0.5 * (1.0 - damping);
            } else {
                const auto& m = order[attempt - damped];
                next[m.step] = m.value;
                changed = 1;
            }
            if (changed == 0) continue;
            ControlProcess cand(u.grid(), next);
            auto cev = evaluate(problem, cand, noise);
            const double j = cev.cost.value.mean;
            const bool ok = !options.descent_safeguard || j < ev.cost.value.mean;
            res.history.push_back({it, j, cev.cost.value.se, report.max_gap, static_cast<double>(changed), ok});
            if (!ok) continue;
            if (!options.descent_safeguard &&
                std::find(visited.begin(), visited.end(), cand.values()) != visited.end())
                return finish(OptimizerStatus::cycling, best, best_cost, best_gap);
            accepted = true;
            u = std::move(cand);
            ev = std::move(cev);
            adj = solve_adjoint(problem, ev.ensemble, options.regression);
            report = verify_smp(problem, ev.ensemble, adj);
            visited.push_back(u.values());
            res.history.back().residual = report.max_gap;
            if (j < best_cost) {
                best = u;
                best_cost = j;
                best_gap = report.max_gap;
            }
        }
        if (!accepted) return finish(OptimizerStatus::stalled, best, best_cost, best_gap);
    }
    return finish(OptimizerStatus::max_iterations, best, best_cost, best_gap);
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

void write_rate_csv(std::ostream& out, const RateReport& r) {
    out << "epsilon,delta,delta_se,eta,eta_se,xtilde_p2,xtilde_p4\n";
    for (std::size_t e = 0; e < r.epsilons.size(); ++e)
        CsvRow(out) << r.epsilons[e] << r.delta[e].mean << r.delta[e].se << r.eta[e].mean << r.eta[e].se
                    << r.xtilde_p2[e].mean << r.xtilde_p4[e].mean;
}

void write_violation_csv(std::ostream& out, const ViolationReport& r) {
    out << "step,time,gap,error,argmax_left,argmax_right,path_gap_max,path_gap_mean\n";
    for (const auto& s : r.steps)
        CsvRow(out) << s.step << s.time << s.gap << s.error << s.argmax[0] << s.argmax[1] << s.path_gap_max
                    << s.path_gap_mean;
}

void write_history_csv(std::ostream& out, const OptimizationResult& r) {
    out << "iteration,cost,cost_se,residual,step,accepted\n";
    for (const auto& h : r.history)
        CsvRow(out) << h.iteration << h.cost << h.cost_se << h.residual << h.step << (h.accepted ? 1 : 0);
}

void write_control_csv(std::ostream& out, const ControlProcess& u) {
    out << "step,time,control_left,control_right\n";
    for (std::size_t i = 0; i < u.size(); ++i) CsvRow(out) << i << u.grid().time(i) << u[i][0] << u[i][1];
}

std::string summarize(const RateReport& r) {
    std::ostringstream os;
    os << "delta_slope = " << format_double(r.delta_fit.slope) << " (CI " << format_double(r.delta_fit.ci_low())
       << " .. " << format_double(r.delta_fit.ci_high()) << ")\n";
    if (r.eta_vanishes)
        os << "eta = 0 at every epsilon (first variation exact)\n";
    else
        os << "eta_slope = " << format_double(r.eta_fit.slope) << " (CI " << format_double(r.eta_fit.ci_low()) << " .. "
           << format_double(r.eta_fit.ci_high()) << ")\n";
    for (const auto& d : r.refinements)
        os << "refinement " << d.label << ": delta_slope change " << format_double(d.delta_slope_change)
           << ", eta_slope change " << format_double(d.eta_slope_change) << ", max relative Delta change "
           << format_double(d.max_relative_change) << "\n";
    os << "mc: " << r.mc_note << (r.mc_resolved ? "" : " (not resolved)") << "\n";
    return os.str();
}

std::string summarize(const ViolationReport& r) {
    std::ostringstream os;
    os << "max_gap = " << format_double(r.max_gap) << " at step " << r.worst_step << "\n";
    os << "mean_gap = " << format_double(r.mean_gap) << "\n";
    os << "max_error = " << format_double(r.max_error) << "\n";
    os << "min_path_gap = " << format_double(r.min_path_gap) << "\n";
    os << "violations = " << r.violations.size() << "\n";
    return os.str();
}

}  // namespace smplab
