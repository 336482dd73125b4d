#include "smplab/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "smplab/csv.hpp"
#include "smplab/error.hpp"

namespace smplab {

namespace {

namespace fs = std::filesystem;

class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {
        fs::create_directories(dir_);
        fs::remove(dir_ / "error.txt");
        fs::remove(dir_ / "summary.txt");
    }

    [[nodiscard]] const fs::path& dir() const noexcept { return dir_; }

    std::ofstream open(const std::string& name) const {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + (dir_ / name).string());
        return out;
    }

private:
    fs::path dir_;
};

/// Summary lines: free-form facts, then checks with a PASS/FAIL verdict.
class Summary {
public:
    void fact(const std::string& line) { text_ << line << "\n"; }
    void facts(const std::string& block) { text_ << block; }

    void check(const std::string& name, double value, const char* op, double bound) {
        const bool ok = std::string(op) == "<=" ? value <= bound : value >= bound;
        text_ << "check " << name << ": " << format_double(value) << " " << op << " " << format_double(bound) << " "
              << (ok ? "PASS" : "FAIL") << "\n";
        passed_ = passed_ && ok;
        ++checks_;
    }
    void check(const std::string& name, bool ok, const std::string& detail) {
        text_ << "check " << name << ": " << detail << " " << (ok ? "PASS" : "FAIL") << "\n";
        passed_ = passed_ && ok;
        ++checks_;
    }

    [[nodiscard]] bool passed() const noexcept { return passed_; }
    [[nodiscard]] std::string str() const {
        return text_.str() + "verdict: " + (passed_ ? "PASS" : "FAIL") + " (" + std::to_string(checks_) + " checks)\n";
    }

private:
    std::ostringstream text_;
    bool passed_ = true;
    std::size_t checks_ = 0;
};

void write_mean_state(std::ostream& out, const PathEnsemble& ens) {
    const std::size_t n_modes = ens.paths.front().n_modes();
    out << "step,time";
    for (std::size_t k = 0; k < n_modes; ++k) out << ",mode_" << k;
    out << "\n";
    for (std::size_t i = 0; i <= ens.grid().n_steps; ++i) {
        CsvRow row(out);
        row << i << ens.grid().time(i);
        const auto m = ens.mean_state(i);
        for (std::size_t k = 0; k < n_modes; ++k) row << m[k];
    }
}

AdjointEnsemble adjoint_for(const ExperimentConfig& cfg, const Problem& p, const PathEnsemble& ens) {
    return cfg.adjoint_solver == "exact-linear" ? solve_adjoint_exact_linear(p, ens)
                                                : solve_adjoint(p, ens, make_regression(cfg));
}

bool exact_oracle_applies(const Problem& p) { return p.scenario().f.is_affine() && !p.scenario().g; }

void run_simulate(const ExperimentConfig& cfg, const Problem& p, const ControlProcess& u, const Artifacts& a,
                  Summary& s) {
    const auto ens = simulate_ensemble(p, u);
    {
        auto out = a.open("mean_state.csv");
        write_mean_state(out, ens);
    }
    {
        auto out = a.open("paths.csv");
        const std::size_t n = std::min(cfg.dump_paths, ens.paths.size());
        write_path_csv(out, std::span<const StatePath>(ens.paths.data(), n));
    }
    const auto j = cost_evaluate(p, ens).value;
    s.fact("cost = " + format_double(j.mean) + " (se " + format_double(j.se) + ")");
    double sup = 0.0;
    for (const auto& path : ens.paths) sup = std::max(sup, path.sup_norm());
    s.fact("max_sup_norm = " + format_double(sup));
}

void run_adjoint(const ExperimentConfig& cfg, const Problem& p, const ControlProcess& u, const Artifacts& a,
                 Summary& s) {
    const auto ens = simulate_ensemble(p, u);
    const auto adj = adjoint_for(cfg, p, ens);
    const std::size_t n = p.grid().n_steps;
    {
        auto out = a.open("beta.csv");
        out << "step,time,beta_left,beta_right,beta_step_left,beta_step_right,beta_step_se_left,beta_step_se_right\n";
        for (std::size_t i = 0; i < n; ++i) {
            Control2 node{0.0, 0.0};
            for (const auto& ap : adj.paths) {
                node[0] += ap.beta(i)[0];
                node[1] += ap.beta(i)[1];
            }
            const double np = static_cast<double>(adj.n_paths());
            const auto step = adj.mean_beta_step(i);
            const Control2 se = adj.beta_step_se.empty() ? Control2{0.0, 0.0} : adj.beta_step_se[i];
            CsvRow(out) << i << p.grid().time(i) << node[0] / np << node[1] / np << step[0] << step[1] << se[0]
                        << se[1];
        }
    }
    {
        auto out = a.open("y_mean.csv");
        out << "step,time";
        for (std::size_t k = 0; k < p.n_modes(); ++k) out << ",mode_" << k;
        out << "\n";
        for (std::size_t i = 0; i <= n; ++i) {
            std::vector<double> m(p.n_modes(), 0.0);
            for (const auto& ap : adj.paths)
                for (std::size_t k = 0; k < m.size(); ++k) m[k] += ap.y(i)[k];
            CsvRow row(out);
            row << i << p.grid().time(i);
            for (double v : m) row << v / static_cast<double>(adj.n_paths());
        }
    }
    {
        auto out = a.open("diagnostics.csv");
        out << "step,features,rank,condition\n";
        for (const auto& d : adj.diagnostics) CsvRow(out) << d.step << d.features << d.rank << d.condition;
    }
    s.fact("solver = " + cfg.adjoint_solver);
    if (!adj.exact && exact_oracle_applies(p)) {
        const auto oracle = solve_adjoint_exact_linear(p, ens);
        s.check("oracle_relative_error", adjoint_relative_error(adj, oracle), "<=", cfg.oracle_error);
    }
}

ControlProcess block_direction(const TimeGrid& g, std::size_t block, std::size_t blocks, std::size_t side) {
    std::vector<Control2> v(g.n_steps, Control2{0.0, 0.0});
    const std::size_t lo = block * g.n_steps / blocks;
    const std::size_t hi = (block + 1) * g.n_steps / blocks;
    for (std::size_t i = lo; i < hi; ++i) v[i][side] = 1.0;
    return ControlProcess(g, std::move(v));
}

void run_grad_check(const ExperimentConfig& cfg, const Problem& p, const ControlProcess& u, const Artifacts& a,
                    Summary& s) {
    const auto noise = make_noise(p);
    const auto ens = simulate_ensemble(p, u, noise);
    const auto grad = gradient_adjoint(p, ens, adjoint_for(cfg, p, ens));
    {
        auto out = a.open("gradient.csv");
        out << "step,time,g_left,g_right,se_left,se_right\n";
        for (std::size_t i = 0; i < grad.g.size(); ++i)
            CsvRow(out) << i << p.grid().time(i) << grad.g[i][0] << grad.g[i][1] << grad.se[i][0] << grad.se[i][1];
    }
    FdOptions fd_opt;
    fd_opt.thetas = cfg.theta_ladder;
    auto out = a.open("directions.csv");
    out << "direction,side,t_start,t_end,adjoint,adjoint_se,fd,fd_se,richardson_error\n";
    double diff2 = 0.0;
    double norm2 = 0.0;
    std::size_t d = 0;
    for (std::size_t side = 0; side < 2; ++side)
        for (std::size_t b = 0; b < cfg.blocks; ++b, ++d) {
            const auto v = block_direction(p.grid(), b, cfg.blocks, side);
            const double adj = grad.directional(v);
            const auto fd = gradient_fd(p, u, v, noise, fd_opt);
            diff2 += (adj - fd.value) * (adj - fd.value);
            norm2 += fd.value * fd.value;
            CsvRow(out) << d << (side == 0 ? "left" : "right") << p.grid().time(b * p.grid().n_steps / cfg.blocks)
                        << p.grid().time((b + 1) * p.grid().n_steps / cfg.blocks) << adj << grad.directional_se(v)
                        << fd.value << fd.se << fd.richardson_error;
        }
    s.fact("directions = " + std::to_string(d));
    s.check("gradient_relative_l2", norm2 > 0.0 ? std::sqrt(diff2 / norm2) : std::sqrt(diff2), "<=",
            cfg.gradient_rel);
}

void run_spike_rates(const ExperimentConfig& cfg, const Problem& p, const ControlProcess& u, const Artifacts& a,
                     Summary& s) {
    const SpikeLadder ladder{cfg.t_bar, cfg.epsilon_ladder, cfg.spike_value};
    const auto r = spike_rate_study(p, u, ladder, {cfg.refine, cfg.refine});
    {
        auto out = a.open("rates.csv");
        write_rate_csv(out, r);
    }
    {
        auto out = a.open("refinements.csv");
        out << "label,delta_slope_change,eta_slope_change,max_relative_change\n";
        for (const auto& ref : r.refinements)
            CsvRow(out) << ref.label << ref.delta_slope_change << ref.eta_slope_change << ref.max_relative_change;
    }
    s.facts(summarize(r));
    s.check("delta_slope", r.delta_fit.slope, ">=", cfg.delta_slope_min);
    if (r.eta_vanishes)
        s.check("eta_slope", true, "eta vanishes identically");
    else
        s.check("eta_slope", r.eta_fit.slope, ">=", std::min(2.0 * r.delta_fit.slope, 2.0) - cfg.eta_margin);
}

void check_smp(const ExperimentConfig& cfg, const Problem& p, const ControlProcess& u, const Artifacts& a,
               Summary& s) {
    const auto ens = simulate_ensemble(p, u);
    const auto adj = adjoint_for(cfg, p, ens);
    const auto rep = verify_smp(p, ens, adj, cfg.gap_factor);
    {
        auto out = a.open("violations.csv");
        write_violation_csv(out, rep);
    }
    s.facts(summarize(rep));
    s.check("max_gap", rep.max_gap, "<=", cfg.gap_factor * rep.max_error);
    s.check("min_path_gap", rep.min_path_gap, ">=", 0.0);
}

void run_optimize(const ExperimentConfig& cfg, const Problem& p, const ControlProcess& u0, const Artifacts& a,
                  Summary& s) {
    const auto res = [&] {
        if (cfg.method == "projected-gradient") {
            ProjectedGradientOptions o;
            o.rho = cfg.rho;
            o.max_iters = cfg.max_iters;
            o.tol = cfg.tol;
            o.regression = make_regression(cfg);
            return optimize_projected_gradient(p, u0, o);
        }
        MsaOptions o;
        o.max_iters = cfg.max_iters;
        o.damping = cfg.damping;
        o.tol = cfg.tol;
        o.regression = make_regression(cfg);
        return optimize_msa(p, u0, o);
    }();
    {
        auto out = a.open("history.csv");
        write_history_csv(out, res);
    }
    {
        auto out = a.open("control.csv");
        write_control_csv(out, res.control);
    }
    s.fact("method = " + cfg.method);
    s.fact("status = " + std::string(to_string(res.status)));
    s.fact("iterations = " + std::to_string(res.history.size()));
    s.fact("initial_cost = " + format_double(res.history.front().cost));
    s.fact("cost = " + format_double(res.cost));
    s.check("descent", res.cost, "<=", res.history.front().cost);
    if (cfg.method == "projected-gradient")
        s.check("vi_residual", res.residual, "<=", cfg.tol * (1.0 + std::abs(res.cost)));
    else
        check_smp(cfg, p, res.control, a, s);
}

void run_regularity(const ExperimentConfig& cfg, const Problem& p, const ControlProcess& u, const Artifacts& a,
                    Summary& s) {
    const auto ens = simulate_ensemble(p, u);
    const auto r = regularity_profile(adjoint_for(cfg, p, ens), {cfg.window_fraction});
    {
        auto out = a.open("regularity.csv");
        out << "step,tau,mean_norm,envelope\n";
        for (std::size_t i = 0; i < r.tau.size(); ++i) CsvRow(out) << i << r.tau[i] << r.mean_norm[i] << r.envelope[i];
    }
    s.fact("raw_slope = " + format_double(r.raw_slope));
    s.fact("constant = " + format_double(r.constant));
    s.fact("fit_nodes = " + std::to_string(r.fit_nodes));
    s.check("slope_low", r.slope, ">=", cfg.regularity_low);
    s.check("slope_high", r.slope, "<=", cfg.regularity_high);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    fs::path dir(cfg.output);
    if (dir.is_relative() && !options.base_dir.empty()) dir = options.base_dir / dir;
    const Artifacts a{dir};
    RunResult result;
    result.directory = a.dir();
    Summary s;
    s.fact("experiment = " + std::string(to_string(cfg.experiment)));
    s.fact("seed = " + std::to_string(cfg.scenario.seed));
    std::string error;
    try {
        const Problem p = make_problem(cfg);
        const auto u = make_control(cfg, p, options.base_dir);
        switch (cfg.experiment) {
            case ExperimentKind::simulate: run_simulate(cfg, p, u, a, s); break;
            case ExperimentKind::adjoint: run_adjoint(cfg, p, u, a, s); break;
            case ExperimentKind::grad_check: run_grad_check(cfg, p, u, a, s); break;
            case ExperimentKind::spike_rates: run_spike_rates(cfg, p, u, a, s); break;
            case ExperimentKind::optimize: run_optimize(cfg, p, u, a, s); break;
            case ExperimentKind::verify_smp: check_smp(cfg, p, u, a, s); break;
            case ExperimentKind::regularity: run_regularity(cfg, p, u, a, s); break;
        }
    } catch (const Error& e) {
        error = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
        error = e.what();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    {
        auto out = a.open("manifest.txt");
        out << "version = " << code_version() << "\n"
            << "experiment = " << to_string(cfg.experiment) << "\n"
            << "seed = " << cfg.scenario.seed << "\n"
            << "wall_time_seconds = " << format_double(wall) << "\n"
            << "# config\n"
            << serialize_config(cfg);
    }
    if (!error.empty()) {
        auto out = a.open("error.txt");
        out << error << "\n";
        result.exit_status = 2;
        result.summary = "error: " + error + "\n";
        return result;
    }
    result.summary = s.str();
    auto out = a.open("summary.txt");
    out << result.summary;
    result.exit_status = s.passed() ? 0 : 1;
    return result;
}

}  // namespace smplab
