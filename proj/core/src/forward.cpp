#include "smplab/forward.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <random>
#include <string>

#include "smplab/csv.hpp"
#include "smplab/parallel.hpp"

namespace smplab {

// ---------------------------------------------------------------------------
// ControlProcess
// ---------------------------------------------------------------------------

ControlProcess::ControlProcess(TimeGrid grid, std::vector<Control2> values)
    : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.n_steps)
        throw Error(ErrorCode::grid_mismatch, "control has " + std::to_string(values_.size()) +
                                                  " values for a grid of " + std::to_string(grid_.n_steps) +
                                                  " steps");
    for (const auto& v : values_)
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]))
            throw Error(ErrorCode::invalid_argument, "control values must be finite");
}

ControlProcess ControlProcess::constant(TimeGrid grid, Control2 value) {
    return ControlProcess(grid, std::vector<Control2>(grid.n_steps, value));
}

ControlProcess ControlProcess::admissible(TimeGrid grid, std::vector<Control2> values, const ControlSet& set) {
    ControlProcess c(grid, std::move(values));
    for (std::size_t i = 0; i < c.size(); ++i)
        if (!set.contains(c[i]))
            throw Error(ErrorCode::invalid_argument, "control value at step " + std::to_string(i) + " is not in U_ad");
    c.admissible_ = true;
    return c;
}

ControlProcess ControlProcess::tagged(const ControlSet& set) const {
    ControlProcess c = *this;
    c.admissible_ = std::all_of(values_.begin(), values_.end(), [&](const Control2& v) { return set.contains(v); });
    return c;
}

namespace {

template <typename Op>
ControlProcess combine(const ControlProcess& a, const ControlProcess& b, Op op) {
    if (!(a.grid() == b.grid())) throw Error(ErrorCode::grid_mismatch, "controls live on different grids");
    std::vector<Control2> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = {op(a[i][0], b[i][0]), op(a[i][1], b[i][1])};
    return ControlProcess(a.grid(), std::move(v));
}

}  // namespace

ControlProcess operator+(const ControlProcess& a, const ControlProcess& b) {
    return combine(a, b, [](double x, double y) { return x + y; });
}

ControlProcess operator-(const ControlProcess& a, const ControlProcess& b) {
    return combine(a, b, [](double x, double y) { return x - y; });
}

ControlProcess operator*(double s, const ControlProcess& a) {
    std::vector<Control2> v(a.values());
    for (auto& x : v) x = {s * x[0], s * x[1]};
    return ControlProcess(a.grid(), std::move(v));
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

NoiseLineage NoiseLineage::of(const Problem& problem) {
    const auto& s = problem.scenario();
    return {s.seed,
            s.n_paths,
            problem.grid(),
            s.g ? problem.n_modes() : 0,
            s.boundary_noise.left,
            s.boundary_noise.right};
}

PathNoise::PathNoise(const NoiseLineage& lineage, std::size_t path)
    : path_(path), n_steps_(lineage.grid.n_steps), dim_(lineage.distributed_dim) {
    const auto lo = [](std::uint64_t x) { return static_cast<std::uint32_t>(x); };
    const auto hi = [](std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); };
    const std::uint64_t p = path;
    std::seed_seq seq{lo(lineage.seed), hi(lineage.seed), lo(p), hi(p), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;

    const double sqrt_h = std::sqrt(lineage.grid.step());
    const double sl = sqrt_h * lineage.left_intensity;
    const double sr = sqrt_h * lineage.right_intensity;
    boundary_.resize(2 * n_steps_);
    distributed_.resize(dim_ * n_steps_);
    for (std::size_t i = 0; i < n_steps_; ++i) {
        boundary_[2 * i] = sl * normal(rng);
        boundary_[2 * i + 1] = sr * normal(rng);
        for (std::size_t k = 0; k < dim_; ++k) distributed_[i * dim_ + k] = sqrt_h * normal(rng);
    }
}

PathNoise PathNoise::coarsened(std::size_t factor) const {
    if (factor == 0 || n_steps_ % factor != 0)
        throw Error(ErrorCode::grid_mismatch, "coarsening factor must divide the number of steps");
    PathNoise c;
    c.path_ = path_;
    c.n_steps_ = n_steps_ / factor;
    c.dim_ = dim_;
    c.boundary_.assign(2 * c.n_steps_, 0.0);
    c.distributed_.assign(dim_ * c.n_steps_, 0.0);
    for (std::size_t i = 0; i < n_steps_; ++i) {
        const std::size_t j = i / factor;
        c.boundary_[2 * j] += boundary_[2 * i];
        c.boundary_[2 * j + 1] += boundary_[2 * i + 1];
        for (std::size_t k = 0; k < dim_; ++k) c.distributed_[j * dim_ + k] += distributed_[i * dim_ + k];
    }
    return c;
}

PathNoise PathNoise::truncated(std::size_t dim) const {
    if (dim > dim_) throw Error(ErrorCode::invalid_argument, "cannot truncate noise to more modes than it has");
    PathNoise c;
    c.path_ = path_;
    c.n_steps_ = n_steps_;
    c.dim_ = dim;
    c.boundary_ = boundary_;
    c.distributed_.resize(dim * n_steps_);
    for (std::size_t i = 0; i < n_steps_; ++i)
        std::copy_n(distributed_.begin() + static_cast<std::ptrdiff_t>(i * dim_), dim,
                    c.distributed_.begin() + static_cast<std::ptrdiff_t>(i * dim));
    return c;
}

NoiseBundle::NoiseBundle(NoiseLineage lineage) : lineage_(lineage) {
    std::vector<std::unique_ptr<PathNoise>> tmp(lineage_.n_paths);
    parallel_for(lineage_.n_paths, [&](std::size_t p) { tmp[p] = std::make_unique<PathNoise>(lineage_, p); });
    paths_.reserve(tmp.size());
    for (auto& t : tmp) paths_.push_back(std::move(*t));
}

std::shared_ptr<const NoiseBundle> make_noise(const Problem& problem) {
    return std::make_shared<const NoiseBundle>(NoiseLineage::of(problem));
}

// ---------------------------------------------------------------------------
// StatePath
// ---------------------------------------------------------------------------

StatePath::StatePath(TimeGrid grid, std::size_t n_modes, std::size_t path)
    : grid_(grid), n_modes_(n_modes), path_(path), data_((grid.n_steps + 1) * n_modes, 0.0) {}

ModalVector StatePath::at(std::size_t i) const {
    const auto s = state(i);
    return ModalVector(std::vector<double>(s.begin(), s.end()));
}

double StatePath::sup_norm() const noexcept {
    double m = 0.0;
    for (std::size_t i = 0; i < n_nodes(); ++i) {
        double s = 0.0;
        for (double x : state(i)) s += x * x;
        m = std::max(m, s);
    }
    return std::sqrt(m);
}

ModalVector PathEnsemble::mean_state(std::size_t i) const {
    ModalVector m(paths.empty() ? 0 : paths.front().n_modes());
    for (const auto& p : paths) {
        const auto s = p.state(i);
        for (std::size_t k = 0; k < s.size(); ++k) m[k] += s[k];
    }
    if (!paths.empty()) m *= 1.0 / static_cast<double>(paths.size());
    return m;
}

// ---------------------------------------------------------------------------
// Stepper
// ---------------------------------------------------------------------------

namespace {

struct Scratch {
    std::vector<double> grid_a;
    std::vector<double> grid_b;
    std::vector<double> modal_a;
    std::vector<double> modal_b;

    void fit(std::size_t m, std::size_t n) {
        if (grid_a.size() != m) {
            grid_a.assign(m, 0.0);
            grid_b.assign(m, 0.0);
        }
        if (modal_a.size() != n) {
            modal_a.assign(n, 0.0);
            modal_b.assign(n, 0.0);
        }
    }
};

Scratch& scratch(const SpectralBasis& basis) {
    thread_local Scratch s;
    s.fit(basis.grid_size(), basis.n_modes());
    return s;
}

}  // namespace

Stepper::Stepper(const Problem& problem) : problem_(&problem), h_(problem.grid().step()) {
    const auto& basis = problem.basis();
    const std::size_t n = basis.n_modes();
    decay_.resize(n);
    phi_.resize(n);
    noise_scale_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double mu = basis.eigenvalue(k);
        decay_[k] = std::exp(mu * h_);
        if (k == 0) {
            phi_[k] = h_;
            noise_scale_[k] = 1.0;
        } else {
            phi_[k] = std::expm1(mu * h_) / mu;
            noise_scale_[k] = std::sqrt(std::expm1(2.0 * mu * h_) / (2.0 * mu) / h_);
        }
    }
    b_left_ = problem.boundary_map(Side::left).b_coeffs;
    b_right_ = problem.boundary_map(Side::right).b_coeffs;
}

void Stepper::advance(std::span<const double> x, const Control2& u, const PathNoise& noise, std::size_t i,
                      std::span<double> out) const {
    const auto& s = problem_->scenario();
    const auto& basis = s.basis;
    const std::size_t n = x.size();
    auto& w = scratch(basis);
    std::span<double> drift(w.modal_a);

    const bool need_grid = !s.f.is_affine() || s.g.has_value();
    if (need_grid) basis.to_grid(x, w.grid_a);

    if (s.f.is_affine()) {
        const double a = s.f.slope();
        for (std::size_t k = 0; k < n; ++k) drift[k] = a * x[k];
        drift[0] += s.f.intercept();
    } else {
        for (std::size_t j = 0; j < w.grid_b.size(); ++j) {
            w.grid_b[j] = s.f.value(w.grid_a[j]);
            if (!std::isfinite(w.grid_b[j])) detail::throw_non_finite_grid(basis, j, w.grid_a[j], w.grid_b[j]);
        }
        basis.to_modal(w.grid_b, drift);
    }

    const Control2 dw = noise.boundary(i);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = decay_[k] * x[k] + phi_[k] * (drift[k] + b_left_[k] * u[0] + b_right_[k] * u[1]) +
                 noise_scale_[k] * (b_left_[k] * dw[0] + b_right_[k] * dw[1]);
    }

    if (s.g) {
        std::span<double> gw(w.modal_b);
        basis.to_grid(noise.distributed(i), w.grid_b);
        for (std::size_t j = 0; j < w.grid_b.size(); ++j) w.grid_b[j] *= s.g->value(w.grid_a[j]);
        basis.to_modal(w.grid_b, gw);
        for (std::size_t k = 0; k < n; ++k) out[k] += decay_[k] * gw[k];
    }

    for (std::size_t k = 0; k < n; ++k)
        if (!std::isfinite(out[k]))
            throw Error(ErrorCode::blow_up, "non-finite state at step " + std::to_string(i + 1) + " (mode " +
                                                std::to_string(k) + ")");
}

void Stepper::linearize(std::span<const double> xbar, Linearization& lin) const {
    const auto& s = problem_->scenario();
    const bool f_grid = !s.f.is_affine();
    const bool g_grid = s.g && !s.g->is_affine();
    lin.f_prime.clear();
    lin.g_prime.clear();
    if (!f_grid && !g_grid) return;
    auto& w = scratch(s.basis);
    s.basis.to_grid(xbar, w.grid_a);
    if (f_grid) {
        lin.f_prime.resize(w.grid_a.size());
        for (std::size_t j = 0; j < w.grid_a.size(); ++j) lin.f_prime[j] = s.f.derivative(w.grid_a[j]);
    }
    if (g_grid) {
        lin.g_prime.resize(w.grid_a.size());
        for (std::size_t j = 0; j < w.grid_a.size(); ++j) lin.g_prime[j] = s.g->derivative(w.grid_a[j]);
    }
}

void Stepper::apply_fx(const Linearization& lin, std::span<const double> v, std::span<double> out) const {
    const auto& s = problem_->scenario();
    if (s.f.is_affine()) {
        const double a = s.f.slope();
        for (std::size_t k = 0; k < v.size(); ++k) out[k] = a * v[k];
        return;
    }
    auto& w = scratch(s.basis);
    s.basis.to_grid(v, w.grid_a);
    for (std::size_t j = 0; j < w.grid_a.size(); ++j) w.grid_a[j] *= lin.f_prime[j];
    s.basis.to_modal(w.grid_a, out);
}

void Stepper::apply_gx_noise(const Linearization& lin, std::span<const double> v, const PathNoise& noise,
                             std::size_t i, std::span<double> out) const {
    const auto& s = problem_->scenario();
    if (!s.g) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    auto& w = scratch(s.basis);
    s.basis.to_grid(v, w.grid_a);
    s.basis.to_grid(noise.distributed(i), w.grid_b);
    if (s.g->is_affine()) {
        const double a = s.g->slope();
        for (std::size_t j = 0; j < w.grid_a.size(); ++j) w.grid_a[j] *= a * w.grid_b[j];
    } else {
        for (std::size_t j = 0; j < w.grid_a.size(); ++j) w.grid_a[j] *= lin.g_prime[j] * w.grid_b[j];
    }
    s.basis.to_modal(w.grid_a, out);
}

void Stepper::advance_variation(std::span<const double> xt, const Linearization& lin, const Control2& d,
                                const PathNoise& noise, std::size_t i, std::span<double> out) const {
    const std::size_t n = xt.size();
    thread_local std::vector<double> fx;
    thread_local std::vector<double> gx;
    fx.resize(n);
    gx.resize(n);
    apply_fx(lin, xt, fx);
    apply_gx_noise(lin, xt, noise, i, gx);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = decay_[k] * xt[k] + phi_[k] * (fx[k] + b_left_[k] * d[0] + b_right_[k] * d[1]) + decay_[k] * gx[k];
    for (std::size_t k = 0; k < n; ++k)
        if (!std::isfinite(out[k]))
            throw Error(ErrorCode::blow_up, "non-finite first variation at step " + std::to_string(i + 1));
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

namespace {

void require_grid(const Problem& problem, const TimeGrid& grid, const char* what) {
    if (!(problem.grid() == grid)) throw Error(ErrorCode::grid_mismatch, std::string(what) + " grid does not match the scenario");
}

[[noreturn]] void rethrow_with_path(const Error& e, std::size_t path) {
    throw Error(e.code(), "path " + std::to_string(path) + ": " + e.what());
}

}  // namespace

StatePath simulate_path(const Problem& problem, const ControlProcess& u, const PathNoise& noise) {
    require_grid(problem, u.grid(), "control");
    if (noise.n_steps() != u.grid().n_steps)
        throw Error(ErrorCode::grid_mismatch, "noise has a different number of steps than the control");
    const Stepper stepper(problem);
    StatePath path(u.grid(), problem.n_modes(), noise.path());
    const auto& x0 = problem.scenario().initial_state;
    std::copy(x0.coeffs().begin(), x0.coeffs().end(), path.state(0).begin());
    try {
        for (std::size_t i = 0; i < u.size(); ++i) stepper.advance(path.state(i), u[i], noise, i, path.state(i + 1));
    } catch (const Error& e) {
        rethrow_with_path(e, noise.path());
    }
    return path;
}

PathEnsemble simulate_ensemble(const Problem& problem, const ControlProcess& u) {
    return simulate_ensemble(problem, u, make_noise(problem));
}

PathEnsemble simulate_ensemble(const Problem& problem, const ControlProcess& u,
                               std::shared_ptr<const NoiseBundle> noise) {
    if (!noise) throw Error(ErrorCode::invalid_argument, "simulate_ensemble: null noise");
    if (!(noise->lineage() == NoiseLineage::of(problem)))
        throw Error(ErrorCode::lineage_mismatch, "noise lineage does not match the scenario");
    require_grid(problem, u.grid(), "control");
    std::vector<std::optional<StatePath>> tmp(noise->n_paths());
    parallel_for(tmp.size(), [&](std::size_t p) { tmp[p].emplace(simulate_path(problem, u, noise->path(p))); });
    PathEnsemble ens{std::move(noise), u, {}};
    ens.paths.reserve(tmp.size());
    for (auto& t : tmp) ens.paths.push_back(std::move(*t));
    return ens;
}

StatePath first_variation_path(const Problem& problem, const StatePath& base, const ControlProcess& direction,
                               const PathNoise& noise) {
    require_grid(problem, direction.grid(), "direction");
    if (!(base.grid() == direction.grid())) throw Error(ErrorCode::grid_mismatch, "base path and direction grids differ");
    if (base.path() != noise.path())
        throw Error(ErrorCode::lineage_mismatch, "first variation needs the base path's own noise");
    const Stepper stepper(problem);
    StatePath xt(base.grid(), base.n_modes(), base.path());
    Linearization lin;
    try {
        for (std::size_t i = 0; i < direction.size(); ++i) {
            stepper.linearize(base.state(i), lin);
            stepper.advance_variation(xt.state(i), lin, direction[i], noise, i, xt.state(i + 1));
        }
    } catch (const Error& e) {
        rethrow_with_path(e, base.path());
    }
    return xt;
}

std::vector<StatePath> first_variation_ensemble(const Problem& problem, const PathEnsemble& base,
                                                const ControlProcess& direction) {
    std::vector<std::optional<StatePath>> tmp(base.n_paths());
    parallel_for(tmp.size(), [&](std::size_t p) {
        tmp[p].emplace(first_variation_path(problem, base.paths[p], direction, base.noise->path(p)));
    });
    std::vector<StatePath> out;
    out.reserve(tmp.size());
    for (auto& t : tmp) out.push_back(std::move(*t));
    return out;
}

Remainder remainder_path(const StatePath& x_eps, const StatePath& x_bar, const StatePath& x_tilde) {
    if (!(x_eps.grid() == x_bar.grid()) || !(x_eps.grid() == x_tilde.grid()) || x_eps.n_modes() != x_bar.n_modes() ||
        x_eps.n_modes() != x_tilde.n_modes())
        throw Error(ErrorCode::grid_mismatch, "remainder_path: paths live on different grids");
    if (x_eps.path() != x_bar.path() || x_eps.path() != x_tilde.path())
        throw Error(ErrorCode::lineage_mismatch, "remainder_path: paths come from different noise paths");
    Remainder r{StatePath(x_eps.grid(), x_eps.n_modes(), x_eps.path()), 0.0};
    for (std::size_t i = 0; i < x_eps.n_nodes(); ++i) {
        const auto a = x_eps.state(i);
        const auto b = x_bar.state(i);
        const auto c = x_tilde.state(i);
        auto e = r.eta.state(i);
        for (std::size_t k = 0; k < e.size(); ++k) e[k] = a[k] - b[k] - c[k];
    }
    r.sup_norm = r.eta.sup_norm();
    return r;
}

void write_path_csv(std::ostream& out, std::span<const StatePath> paths) {
    out << "path,step,time,mode,coefficient\n";
    for (const auto& p : paths)
        for (std::size_t i = 0; i < p.n_nodes(); ++i) {
            const auto s = p.state(i);
            for (std::size_t k = 0; k < s.size(); ++k) CsvRow(out) << p.path() << i << p.grid().time(i) << k << s[k];
        }
}

}  // namespace smplab
