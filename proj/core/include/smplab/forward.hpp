#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "smplab/model.hpp"

namespace smplab {

/// Piecewise-constant control u_i on [t_i, t_{i+1}).
class ControlProcess {
public:
    ControlProcess(TimeGrid grid, std::vector<Control2> values);

    static ControlProcess constant(TimeGrid grid, Control2 value);
    /// Tags the control admissible; throws invalid_argument if a value is
    /// outside `set`.
    static ControlProcess admissible(TimeGrid grid, std::vector<Control2> values, const ControlSet& set);

    [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] const Control2& operator[](std::size_t i) const { return values_[i]; }
    [[nodiscard]] const std::vector<Control2>& values() const noexcept { return values_; }
    [[nodiscard]] bool is_admissible() const noexcept { return admissible_; }

    /// Same values, re-tagged against `set` (admissible iff every value lies in it).
    [[nodiscard]] ControlProcess tagged(const ControlSet& set) const;

    friend bool operator==(const ControlProcess&, const ControlProcess&) = default;

private:
    TimeGrid grid_;
    std::vector<Control2> values_;
    bool admissible_ = false;
};

[[nodiscard]] ControlProcess operator+(const ControlProcess& a, const ControlProcess& b);
[[nodiscard]] ControlProcess operator-(const ControlProcess& a, const ControlProcess& b);
[[nodiscard]] ControlProcess operator*(double s, const ControlProcess& a);

/// Everything that determines a path's noise: regenerating with equal
/// lineage gives bit-identical increments.
struct NoiseLineage {
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    TimeGrid grid;
    std::size_t distributed_dim = 0;  ///< N when g is on, else 0
    double left_intensity = 0.0;
    double right_intensity = 0.0;

    static NoiseLineage of(const Problem& problem);
    friend bool operator==(const NoiseLineage&, const NoiseLineage&) = default;
};

/// Increments of one path. Boundary increments are already scaled to
/// variance h·intensity²; distributed increments have variance h per mode.
/// Both boundary normals are drawn at every step even when an intensity is
/// zero, so switching a side on or off leaves the other stream unchanged.
class PathNoise {
public:
    PathNoise(const NoiseLineage& lineage, std::size_t path);

    [[nodiscard]] std::size_t path() const noexcept { return path_; }
    [[nodiscard]] std::size_t n_steps() const noexcept { return n_steps_; }
    [[nodiscard]] std::size_t distributed_dim() const noexcept { return dim_; }
    [[nodiscard]] Control2 boundary(std::size_t i) const { return {boundary_[2 * i], boundary_[2 * i + 1]}; }
    [[nodiscard]] std::span<const double> distributed(std::size_t i) const {
        return {distributed_.data() + i * dim_, dim_};
    }

    /// The same Brownian path on a grid `factor` times coarser: increments
    /// summed over consecutive blocks. Used for step-size refinement with
    /// common random numbers.
    [[nodiscard]] PathNoise coarsened(std::size_t factor) const;
    /// Keeps the first `dim` distributed modes (mode refinement with common
    /// random numbers).
    [[nodiscard]] PathNoise truncated(std::size_t dim) const;

private:
    PathNoise() = default;

    std::size_t path_ = 0;
    std::size_t n_steps_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> boundary_;
    std::vector<double> distributed_;
};

/// Materialized noise of an ensemble.
class NoiseBundle {
public:
    explicit NoiseBundle(NoiseLineage lineage);

    [[nodiscard]] const NoiseLineage& lineage() const noexcept { return lineage_; }
    [[nodiscard]] std::size_t n_paths() const noexcept { return paths_.size(); }
    [[nodiscard]] const PathNoise& path(std::size_t p) const { return paths_.at(p); }

private:
    NoiseLineage lineage_;
    std::vector<PathNoise> paths_;
};

/// Modal coefficients at the n_steps+1 nodes of one path.
class StatePath {
public:
    StatePath(TimeGrid grid, std::size_t n_modes, std::size_t path);

    [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t n_modes() const noexcept { return n_modes_; }
    [[nodiscard]] std::size_t n_nodes() const noexcept { return grid_.n_steps + 1; }
    [[nodiscard]] std::size_t path() const noexcept { return path_; }

    [[nodiscard]] std::span<double> state(std::size_t i) { return {data_.data() + i * n_modes_, n_modes_}; }
    [[nodiscard]] std::span<const double> state(std::size_t i) const {
        return {data_.data() + i * n_modes_, n_modes_};
    }
    [[nodiscard]] ModalVector at(std::size_t i) const;
    [[nodiscard]] std::span<const double> terminal() const { return state(grid_.n_steps); }

    /// max_i |X_i|_H
    [[nodiscard]] double sup_norm() const noexcept;

private:
    TimeGrid grid_;
    std::size_t n_modes_;
    std::size_t path_;
    std::vector<double> data_;
};

struct PathEnsemble {
    std::shared_ptr<const NoiseBundle> noise;
    ControlProcess control;
    std::vector<StatePath> paths;

    [[nodiscard]] const TimeGrid& grid() const noexcept { return control.grid(); }
    [[nodiscard]] std::size_t n_paths() const noexcept { return paths.size(); }
    [[nodiscard]] const NoiseLineage& lineage() const { return noise->lineage(); }
    /// Cross-path mean at node i (fixed summation order).
    [[nodiscard]] ModalVector mean_state(std::size_t i) const;
};

/// Frozen derivative data of one step of a base path: f'(X̄_i) and g'(X̄_i)
/// on the grid, or their constant values when the coefficient is affine.
struct Linearization {
    std::vector<double> f_prime;  ///< grid samples; empty when f is affine
    std::vector<double> g_prime;  ///< grid samples; empty when g is affine or off
};

/// One exponential-Euler step of the truncated state equation and of its
/// linearization. Holds the per-mode factors e^{μh}, φ_k(h) and √(ψ_k(h)/h).
class Stepper {
public:
    explicit Stepper(const Problem& problem);

    [[nodiscard]] const Problem& problem() const noexcept { return *problem_; }
    [[nodiscard]] double step() const noexcept { return h_; }
    [[nodiscard]] std::span<const double> decay() const noexcept { return decay_; }  ///< e^{μ_k h}
    [[nodiscard]] std::span<const double> phi() const noexcept { return phi_; }
    [[nodiscard]] std::span<const double> b_left() const noexcept { return b_left_; }
    [[nodiscard]] std::span<const double> b_right() const noexcept { return b_right_; }

    /// X_{i+1} from X_i. `out` must not alias `x`. Throws blow_up if the new
    /// state is not finite.
    void advance(std::span<const double> x, const Control2& u, const PathNoise& noise, std::size_t i,
                 std::span<double> out) const;

    void linearize(std::span<const double> xbar, Linearization& lin) const;

    /// X̃_{i+1} from X̃_i: frozen F_x, G_x, forcing (λ−A)D·d, no additive noise.
    void advance_variation(std::span<const double> xt, const Linearization& lin, const Control2& d,
                           const PathNoise& noise, std::size_t i, std::span<double> out) const;

    /// out = F_x(X̄)·v (self-adjoint on modal coefficients).
    void apply_fx(const Linearization& lin, std::span<const double> v, std::span<double> out) const;

    /// out = P(g'(X̄)·w·v) with w the distributed increment of step i; the
    /// map v -> out is symmetric. Zero when g is off.
    void apply_gx_noise(const Linearization& lin, std::span<const double> v, const PathNoise& noise,
                        std::size_t i, std::span<double> out) const;

private:
    const Problem* problem_;
    double h_;
    std::vector<double> decay_;
    std::vector<double> phi_;
    std::vector<double> noise_scale_;  ///< √(ψ_k/h)
    std::vector<double> b_left_;
    std::vector<double> b_right_;
};

/// Noise for the scenario's lineage, all paths materialized.
[[nodiscard]] std::shared_ptr<const NoiseBundle> make_noise(const Problem& problem);

[[nodiscard]] StatePath simulate_path(const Problem& problem, const ControlProcess& u, const PathNoise& noise);

/// Simulates every path of the scenario; parallel over paths, output
/// independent of scheduling. Errors carry the failing path index.
[[nodiscard]] PathEnsemble simulate_ensemble(const Problem& problem, const ControlProcess& u);
/// Same, reusing existing noise (common random numbers).
[[nodiscard]] PathEnsemble simulate_ensemble(const Problem& problem, const ControlProcess& u,
                                             std::shared_ptr<const NoiseBundle> noise);

/// First variation along `base` in direction `direction`, started at 0.
[[nodiscard]] StatePath first_variation_path(const Problem& problem, const StatePath& base,
                                             const ControlProcess& direction, const PathNoise& noise);
[[nodiscard]] std::vector<StatePath> first_variation_ensemble(const Problem& problem, const PathEnsemble& base,
                                                              const ControlProcess& direction);

struct Remainder {
    StatePath eta;
    double sup_norm = 0.0;
};

/// η = X^ε − X̄ − X̃.
[[nodiscard]] Remainder remainder_path(const StatePath& x_eps, const StatePath& x_bar, const StatePath& x_tilde);

/// Path dump: path,step,time,mode,coefficient.
void write_path_csv(std::ostream& out, std::span<const StatePath> paths);

}  // namespace smplab
