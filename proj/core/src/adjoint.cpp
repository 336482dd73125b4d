#include "smplab/adjoint.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "smplab/csv.hpp"
#include "smplab/parallel.hpp"

namespace smplab {

AdjointPath::AdjointPath(TimeGrid grid, std::size_t n_modes, std::size_t path, bool with_gz)
    : grid_(grid),
      n_modes_(n_modes),
      path_(path),
      y_((grid.n_steps + 1) * n_modes, 0.0),
      z_(grid.n_steps * n_modes, 0.0),
      gz_(with_gz ? grid.n_steps * n_modes : 0, 0.0),
      beta_(grid.n_steps + 1, Control2{0.0, 0.0}),
      beta_step_(grid.n_steps, Control2{0.0, 0.0}) {}

Control2 AdjointEnsemble::mean_beta_step(std::size_t i) const {
    Control2 m{0.0, 0.0};
    for (const auto& p : paths) {
        m[0] += p.beta_step(i)[0];
        m[1] += p.beta_step(i)[1];
    }
    const double inv = paths.empty() ? 0.0 : 1.0 / static_cast<double>(paths.size());
    return {m[0] * inv, m[1] * inv};
}

Control2 boundary_pairing(std::span<const double> y, const BoundaryMap& left, const BoundaryMap& right) {
    Control2 b{0.0, 0.0};
    for (std::size_t k = 0; k < y.size(); ++k) {
        b[0] += left.b_coeffs[k] * y[k];
        b[1] += right.b_coeffs[k] * y[k];
    }
    return b;
}

std::vector<Control2> boundary_pairing(const AdjointPath& adj, const BoundaryMap& left, const BoundaryMap& right) {
    std::vector<Control2> out(adj.grid().n_steps + 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = boundary_pairing(adj.y(i), left, right);
    return out;
}

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_inputs(const Problem& problem, const PathEnsemble& ensemble) {
    if (!(problem.grid() == ensemble.grid()))
        throw Error(ErrorCode::grid_mismatch, "ensemble grid does not match the scenario");
    if (!ensemble.noise || !(ensemble.lineage() == NoiseLineage::of(problem)))
        throw Error(ErrorCode::lineage_mismatch, "ensemble noise lineage does not match the scenario");
    if (ensemble.n_paths() == 0) throw Error(ErrorCode::invalid_argument, "empty ensemble");
}

AdjointEnsemble make_empty(const Problem& problem, const PathEnsemble& ensemble, bool with_gz) {
    AdjointEnsemble adj{ensemble.noise, ensemble.control, {}, {}, {}, false};
    adj.paths.reserve(ensemble.n_paths());
    for (std::size_t p = 0; p < ensemble.n_paths(); ++p)
        adj.paths.emplace_back(ensemble.grid(), problem.n_modes(), p, with_gz);
    adj.beta_step_se.assign(ensemble.grid().n_steps, Control2{0.0, 0.0});
    return adj;
}

void set_terminal(const Problem& problem, const PathEnsemble& ensemble, AdjointEnsemble& adj) {
    const std::size_t n = ensemble.grid().n_steps;
    const auto& left = problem.boundary_map(Side::left);
    const auto& right = problem.boundary_map(Side::right);
    for (std::size_t p = 0; p < ensemble.n_paths(); ++p) {
        auto y = adj.paths[p].y(n);
        problem.cost().terminal_gradient_x(ensemble.paths[p].terminal(), y);
        for (double& v : y) v = -v;
        adj.paths[p].beta(n) = boundary_pairing(y, left, right);
    }
}

Control2 step_pairing(const Stepper& st, std::span<const double> y_hat) {
    Control2 b{0.0, 0.0};
    const auto phi = st.phi();
    const auto bl = st.b_left();
    const auto br = st.b_right();
    for (std::size_t k = 0; k < y_hat.size(); ++k) {
        b[0] += bl[k] * phi[k] * y_hat[k];
        b[1] += br[k] * phi[k] * y_hat[k];
    }
    const double inv_h = 1.0 / st.step();
    return {b[0] * inv_h, b[1] * inv_h};
}

/// Affine least squares of `targets` (rows = paths) on `features`; fitted
/// values overwrite `targets`.
RegressionDiagnostics regress(const Matrix& features, Matrix& targets, const RegressionBasis& opt,
                              std::size_t step) {
    const Eigen::Index n = features.rows();
    const Eigen::Index d = features.cols();
    RegressionDiagnostics diag;
    diag.step = step;

    const Eigen::RowVectorXd t_mean = targets.colwise().mean();

    std::vector<Eigen::Index> keep;
    Eigen::RowVectorXd f_mean = features.colwise().mean();
    Eigen::RowVectorXd f_std(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double var = (features.col(j).array() - f_mean(j)).square().mean();
        f_std(j) = std::sqrt(var);
        if (f_std(j) > 1e-12 * (1.0 + std::abs(f_mean(j)))) keep.push_back(j);
    }
    diag.features = keep.size();
    if (keep.empty()) {
        targets.rowwise() = t_mean;
        return diag;
    }
    const auto kd = static_cast<Eigen::Index>(keep.size());
    if (static_cast<double>(kd + 1) > static_cast<double>(n) / 10.0)
        throw Error(ErrorCode::invalid_argument,
                    "regression at step " + std::to_string(step) + " has " + std::to_string(kd + 1) +
                        " features for " + std::to_string(n) + " paths (need features <= n_paths/10)");

    Matrix zs(n, kd);
    for (Eigen::Index c = 0; c < kd; ++c) {
        const Eigen::Index j = keep[static_cast<std::size_t>(c)];
        zs.col(c) = (features.col(j).array() - f_mean(j)) / f_std(j);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd gram = (zs.transpose() * zs) * inv_n;
    Matrix centered = targets.rowwise() - t_mean;
    Eigen::MatrixXd cross = (zs.transpose() * centered) * inv_n;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double ev_max = ev.maxCoeff();
    const double ev_min = ev.minCoeff();
    diag.condition = ev_min > 0.0 ? ev_max / ev_min : std::numeric_limits<double>::infinity();
    if (opt.strict && diag.condition > 1e12) {
        throw Error(ErrorCode::rank_deficient, "regression at step " + std::to_string(step) +
                                                   " is rank deficient (condition number " +
                                                   format_double(diag.condition) + ")");
    }
    Eigen::VectorXd inv(kd);
    for (Eigen::Index j = 0; j < kd; ++j) {
        if (ev(j) > 1e-12 * ev_max) {
            inv(j) = 1.0 / (ev(j) + opt.ridge);
            ++diag.rank;
        } else {
            inv(j) = 0.0;
        }
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const Eigen::MatrixXd coef = v * inv.asDiagonal() * (v.transpose() * cross);
    targets = (zs * coef).rowwise() + t_mean;
    return diag;
}

}  // namespace

AdjointEnsemble solve_adjoint(const Problem& problem, const PathEnsemble& ensemble, const RegressionBasis& basis) {
    check_inputs(problem, ensemble);
    if (basis.n_reg == 0) throw Error(ErrorCode::invalid_argument, "regression basis needs n_reg >= 1");
    if (!(basis.ridge >= 0.0)) throw Error(ErrorCode::invalid_argument, "ridge must be >= 0");

    const auto& s = problem.scenario();
    const bool with_g = s.g.has_value();
    const std::size_t np = ensemble.n_paths();
    const std::size_t nm = problem.n_modes();
    const std::size_t nsteps = ensemble.grid().n_steps;
    const std::size_t n_reg = std::min(basis.n_reg, nm);
    const double h = ensemble.grid().step();
    const Stepper st(problem);
    const auto decay = st.decay();
    const auto phi = st.phi();
    const auto& left = problem.boundary_map(Side::left);
    const auto& right = problem.boundary_map(Side::right);

    AdjointEnsemble adj = make_empty(problem, ensemble, with_g);
    set_terminal(problem, ensemble, adj);
    adj.diagnostics.resize(nsteps);

    const auto nm_i = static_cast<Eigen::Index>(nm);
    const auto np_i = static_cast<Eigen::Index>(np);
    Matrix features(np_i, static_cast<Eigen::Index>(n_reg));
    Matrix targets(np_i, with_g ? 2 * nm_i : nm_i);

    for (std::size_t step = nsteps; step-- > 0;) {
        parallel_for(np, [&](std::size_t p) {
            const auto x = ensemble.paths[p].state(step);
            const auto y_next = adj.paths[p].y(step + 1);
            const auto row = static_cast<Eigen::Index>(p);
            for (std::size_t k = 0; k < n_reg; ++k) features(row, static_cast<Eigen::Index>(k)) = x[k];
            for (std::size_t k = 0; k < nm; ++k) targets(row, static_cast<Eigen::Index>(k)) = y_next[k];
            if (with_g) {
                thread_local std::vector<double> ey;
                thread_local std::vector<double> gx;
                ey.resize(nm);
                gx.resize(nm);
                for (std::size_t k = 0; k < nm; ++k) ey[k] = decay[k] * y_next[k];
                Linearization lin;
                st.linearize(x, lin);
                st.apply_gx_noise(lin, ey, ensemble.noise->path(p), step, gx);
                for (std::size_t k = 0; k < nm; ++k) targets(row, nm_i + static_cast<Eigen::Index>(k)) = gx[k];
            }
        });

        adj.diagnostics[step] = regress(features, targets, basis, step);

        std::vector<Control2> resid(np);
        parallel_for(np, [&](std::size_t p) {
            auto& ap = adj.paths[p];
            const auto x = ensemble.paths[p].state(step);
            const auto y_next = ap.y(step + 1);
            const auto row = static_cast<Eigen::Index>(p);
            thread_local std::vector<double> y_hat;
            thread_local std::vector<double> phi_y;
            thread_local std::vector<double> fx;
            thread_local std::vector<double> lx;
            y_hat.resize(nm);
            phi_y.resize(nm);
            fx.resize(nm);
            lx.resize(nm);
            for (std::size_t k = 0; k < nm; ++k) y_hat[k] = targets(row, static_cast<Eigen::Index>(k));
            for (std::size_t k = 0; k < nm; ++k) phi_y[k] = phi[k] * y_hat[k];
            Linearization lin;
            st.linearize(x, lin);
            st.apply_fx(lin, phi_y, fx);
            problem.cost().running_gradient_x(x, lx);

            auto y = ap.y(step);
            auto z = ap.z(step);
            for (std::size_t k = 0; k < nm; ++k) {
                y[k] = decay[k] * y_hat[k] + fx[k] - h * lx[k];
                z[k] = y_next[k] - y_hat[k];
            }
            if (with_g) {
                auto gz = ap.gz(step);
                for (std::size_t k = 0; k < nm; ++k) {
                    const double e = targets(row, nm_i + static_cast<Eigen::Index>(k));
                    y[k] += e;
                    gz[k] = e / h;
                }
            }
            for (std::size_t k = 0; k < nm; ++k)
                if (!std::isfinite(y[k]))
                    throw Error(ErrorCode::non_finite, "path " + std::to_string(p) + ": non-finite adjoint at step " +
                                                           std::to_string(step));
            ap.beta(step) = boundary_pairing(y, left, right);
            ap.beta_step(step) = step_pairing(st, y_hat);
            resid[p] = step_pairing(st, z);
        });

        Control2 ss{0.0, 0.0};
        for (const auto& r : resid) {
            ss[0] += r[0] * r[0];
            ss[1] += r[1] * r[1];
        }
        const double f_eff = static_cast<double>(adj.diagnostics[step].rank + 1);
        const double scale = std::sqrt(f_eff) / static_cast<double>(np);
        adj.beta_step_se[step] = {std::sqrt(ss[0]) * scale, std::sqrt(ss[1]) * scale};
    }
    return adj;
}

AdjointEnsemble solve_adjoint_exact_linear(const Problem& problem, const PathEnsemble& ensemble) {
    check_inputs(problem, ensemble);
    const auto& s = problem.scenario();
    if (!s.f.is_affine() || s.g)
        throw Error(ErrorCode::not_applicable, "exact-linear adjoint needs affine f and g off");

    const auto& c = problem.cost();
    const std::size_t nm = problem.n_modes();
    const std::size_t nsteps = ensemble.grid().n_steps;
    const double h = ensemble.grid().step();
    const Stepper st(problem);
    const auto decay = st.decay();
    const auto phi = st.phi();
    const auto bl = st.b_left();
    const auto br = st.b_right();
    const auto& left = problem.boundary_map(Side::left);
    const auto& right = problem.boundary_map(Side::right);
    const auto& u = ensemble.control;

    std::vector<double> m_coef(nm);
    for (std::size_t k = 0; k < nm; ++k) m_coef[k] = decay[k] + s.f.slope() * phi[k];

    const double q_run = 2.0 * c.running.tracking_weight;
    std::vector<double> r_run(nm);
    std::vector<double> r_term(nm);
    for (std::size_t k = 0; k < nm; ++k) {
        r_run[k] = c.running.linear[k] - q_run * c.running.tracking_target[k];
        r_term[k] = c.terminal.linear[k] - 2.0 * c.terminal.tracking_weight * c.terminal.tracking_target[k];
    }

    // Y_i = S_i X_i + s_i with S_i diagonal
    std::vector<std::vector<double>> big_s(nsteps + 1, std::vector<double>(nm));
    std::vector<std::vector<double>> small_s(nsteps + 1, std::vector<double>(nm));
    std::vector<std::vector<double>> drift(nsteps, std::vector<double>(nm));
    for (std::size_t k = 0; k < nm; ++k) {
        big_s[nsteps][k] = -2.0 * c.terminal.tracking_weight;
        small_s[nsteps][k] = -r_term[k];
    }
    for (std::size_t i = nsteps; i-- > 0;) {
        for (std::size_t k = 0; k < nm; ++k) {
            const double forcing = (k == 0 ? s.f.intercept() : 0.0) + bl[k] * u[i][0] + br[k] * u[i][1];
            drift[i][k] = phi[k] * forcing;
            big_s[i][k] = m_coef[k] * m_coef[k] * big_s[i + 1][k] - h * q_run;
            small_s[i][k] = m_coef[k] * (big_s[i + 1][k] * drift[i][k] + small_s[i + 1][k]) - h * r_run[k];
        }
    }

    AdjointEnsemble adj = make_empty(problem, ensemble, false);
    adj.exact = true;
    parallel_for(ensemble.n_paths(), [&](std::size_t p) {
        auto& ap = adj.paths[p];
        const auto& xp = ensemble.paths[p];
        std::vector<double> y_hat(nm);
        for (std::size_t i = 0; i <= nsteps; ++i) {
            const auto x = xp.state(i);
            auto y = ap.y(i);
            for (std::size_t k = 0; k < nm; ++k) y[k] = big_s[i][k] * x[k] + small_s[i][k];
            ap.beta(i) = boundary_pairing(y, left, right);
            if (i == nsteps) break;
            for (std::size_t k = 0; k < nm; ++k)
                y_hat[k] = big_s[i + 1][k] * (m_coef[k] * x[k] + drift[i][k]) + small_s[i + 1][k];
            ap.beta_step(i) = step_pairing(st, y_hat);
        }
        for (std::size_t i = 0; i < nsteps; ++i) {
            const auto yn = ap.y(i + 1);
            const auto x = xp.state(i);
            auto z = ap.z(i);
            for (std::size_t k = 0; k < nm; ++k)
                z[k] = yn[k] - (big_s[i + 1][k] * (m_coef[k] * x[k] + drift[i][k]) + small_s[i + 1][k]);
        }
    });
    return adj;
}

double adjoint_relative_error(const AdjointEnsemble& a, const AdjointEnsemble& b) {
    if (!(a.grid() == b.grid()) || a.n_paths() != b.n_paths())
        throw Error(ErrorCode::grid_mismatch, "adjoint ensembles differ in shape");
    const double h = a.grid().step();
    double num = 0.0;
    double den = 0.0;
    for (std::size_t p = 0; p < a.n_paths(); ++p)
        for (std::size_t i = 0; i <= a.grid().n_steps; ++i) {
            const auto ya = a.paths[p].y(i);
            const auto yb = b.paths[p].y(i);
            for (std::size_t k = 0; k < ya.size(); ++k) {
                num += h * (ya[k] - yb[k]) * (ya[k] - yb[k]);
                den += h * yb[k] * yb[k];
            }
        }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

namespace {

std::pair<double, double> ols(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    return {slope, my - slope * mx};
}

}  // namespace

RegularityReport regularity_profile(const AdjointEnsemble& adjoint, const RegularityOptions& options) {
    const auto& grid = adjoint.grid();
    const std::size_t n = grid.n_steps;
    const double h = grid.step();
    RegularityReport r;
    r.tau.resize(n);
    r.mean_norm.assign(n, 0.0);
    r.envelope.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) {
        r.tau[i] = grid.horizon - grid.time(i);
        double sum = 0.0;
        for (const auto& p : adjoint.paths) sum += std::hypot(p.beta(i)[0], p.beta(i)[1]);
        r.mean_norm[i] = sum / static_cast<double>(adjoint.n_paths());
    }
    const double tau_max = options.window_fraction * grid.horizon;
    std::vector<std::size_t> window;
    for (std::size_t i = 0; i < n; ++i)
        if (r.tau[i] >= h * (1.0 - 1e-9) && r.tau[i] <= tau_max * (1.0 + 1e-9)) window.push_back(i);
    if (window.size() < 8)
        throw Error(ErrorCode::invalid_argument, "regularity_profile: only " + std::to_string(window.size()) +
                                                     " nodes with h <= T - t <= " + format_double(tau_max) +
                                                     " (need 8)");
    // window is ordered by increasing t, i.e. decreasing tau
    double run = 0.0;
    for (std::size_t i : window) {
        run = std::max(run, r.mean_norm[i]);
        r.envelope[i] = run;
    }
    std::vector<double> lx;
    std::vector<double> ly_env;
    std::vector<double> ly_raw;
    for (std::size_t i : window) {
        if (!(r.mean_norm[i] > 0.0)) continue;
        lx.push_back(std::log(r.tau[i]));
        ly_env.push_back(std::log(r.envelope[i]));
        ly_raw.push_back(std::log(r.mean_norm[i]));
    }
    r.fit_nodes = lx.size();
    if (r.fit_nodes < 8) {
        r.slope = 0.0;
        r.raw_slope = 0.0;
        r.constant = 0.0;
        return r;
    }
    const auto [se, ie] = ols(lx, ly_env);
    r.slope = se;
    r.constant = std::exp(ie);
    r.raw_slope = ols(lx, ly_raw).first;
    return r;
}

void write_adjoint_csv(std::ostream& y_out, std::ostream& beta_out, const AdjointEnsemble& adjoint) {
    const auto& grid = adjoint.grid();
    y_out << "path,step,time,mode,y\n";
    beta_out << "path,step,time,side,beta\n";
    for (const auto& p : adjoint.paths)
        for (std::size_t i = 0; i <= grid.n_steps; ++i) {
            const auto y = p.y(i);
            for (std::size_t k = 0; k < y.size(); ++k) CsvRow(y_out) << p.path() << i << grid.time(i) << k << y[k];
            CsvRow(beta_out) << p.path() << i << grid.time(i) << "left" << p.beta(i)[0];
            CsvRow(beta_out) << p.path() << i << grid.time(i) << "right" << p.beta(i)[1];
        }
}

}  // namespace smplab
