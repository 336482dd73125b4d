#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "smplab/adjoint.hpp"
#include "smplab/cost.hpp"
#include "smplab/forward.hpp"

namespace smplab {

// ---------------------------------------------------------------------------
// Spike variations
// ---------------------------------------------------------------------------

/// u^ε = v on [t̄, t̄+ε), ū elsewhere.
struct SpikeSpec {
    double t_bar = 0.0;
    double epsilon = 0.0;
    Control2 v{0.0, 0.0};
};

enum class SpikeAlignment {
    strict,       ///< t̄ and ε must be multiples of h; exactly ε/h steps change
    whole_steps,  ///< steps lying entirely inside [t̄, t̄+ε) change, others keep ū
};

/// Throws invalid_argument when ε ≤ 0, the window leaves [0, T], v is not in
/// `set`, or (strict) the window is not step-aligned. The result is tagged
/// admissible against `set`.
[[nodiscard]] ControlProcess spike_control(const ControlProcess& u_bar, const SpikeSpec& spec, const ControlSet& set,
                                           SpikeAlignment alignment = SpikeAlignment::strict);

/// Half-open step range [first, last) changed by a spike.
struct StepRange {
    std::size_t first = 0;
    std::size_t last = 0;
    [[nodiscard]] std::size_t size() const noexcept { return last - first; }
};
[[nodiscard]] StepRange spike_steps(const TimeGrid& grid, const SpikeSpec& spec, SpikeAlignment alignment);

/// Least-squares line through (log x, log y) with the slope's standard error.
struct LogLogFit {
    double slope = 0.0;
    double slope_se = 0.0;
    double intercept = 0.0;
    [[nodiscard]] double ci_low() const noexcept { return slope - 2.0 * slope_se; }
    [[nodiscard]] double ci_high() const noexcept { return slope + 2.0 * slope_se; }
};
[[nodiscard]] LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y);

struct SpikeLadder {
    double t_bar = 0.0;
    std::vector<double> epsilons;  ///< strictly decreasing multiples of h
    Control2 v{0.0, 0.0};
};

struct RateOptions {
    bool refine_modes = true;  ///< rerun with N/2 modes (noise truncated)
    bool refine_step = true;   ///< rerun with step 2h (noise coarsened)
};

struct RefinementDelta {
    std::string label;  ///< "modes N/2" or "step 2h"
    double delta_slope_change = 0.0;  ///< refined fit slope minus the base slope
    double eta_slope_change = 0.0;
    double max_relative_change = 0.0;  ///< max over ε of |Δ_ref − Δ|/Δ
};

struct RateReport {
    std::vector<double> epsilons;
    std::vector<Estimate> delta;     ///< E sup_t |X^ε − X̄|_H
    std::vector<Estimate> eta;       ///< E sup_t |η^ε|_H
    std::vector<Estimate> xtilde_p2; ///< E sup_t |X̃^ε|²
    std::vector<Estimate> xtilde_p4; ///< E sup_t |X̃^ε|⁴
    LogLogFit delta_fit;
    LogLogFit eta_fit;  ///< slope 0 when η vanishes identically
    bool eta_vanishes = false;
    std::vector<RefinementDelta> refinements;
    /// Largest MC standard error of Δ against half the smallest gap between
    /// consecutive Δ values; exceeding it is reported, not fatal.
    bool mc_resolved = true;
    std::string mc_note;
};

/// Simulates X̄, X^ε, X̃^ε and η^ε for every ε of the ladder with one noise
/// path shared by all ε, then fits log-log slopes. `u_bar` must live on the
/// problem's grid.
[[nodiscard]] RateReport spike_rate_study(const Problem& problem, const ControlProcess& u_bar,
                                          const SpikeLadder& ladder, const RateOptions& options = {});

// ---------------------------------------------------------------------------
// Hamiltonian and the maximum condition
// ---------------------------------------------------------------------------

struct HamiltonianValue {
    double value = 0.0;
    double pairing = 0.0;  ///< ⟨β, v⟩
    double running = 0.0;  ///< l(x, v)
};

/// H = ⟨β, v⟩ − l(x, v). The step index is the time slot; the registry costs
/// are autonomous.
[[nodiscard]] HamiltonianValue hamiltonian(std::size_t step, std::span<const double> x, const Control2& v,
                                           const Control2& beta, const CostSpec& cost);

struct StepGap {
    std::size_t step = 0;
    double time = 0.0;
    double gap = 0.0;    ///< max_v H̄(v) − H̄(ū) for the cross-path mean Hamiltonian
    double error = 0.0;  ///< MC + regression error of that gap
    Control2 argmax{0.0, 0.0};
    double path_gap_max = 0.0;   ///< max over paths of the per-path gap
    double path_gap_mean = 0.0;
};

struct ViolationReport {
    std::vector<StepGap> steps;
    double max_gap = 0.0;
    double mean_gap = 0.0;     ///< time average
    double max_error = 0.0;
    double min_path_gap = 0.0; ///< never below zero: ū is always a candidate
    std::size_t worst_step = 0;
    /// Steps whose gap exceeds `factor`·error for the factor passed to
    /// verify_smp.
    std::vector<std::size_t> violations;
};

/// Pointwise maximum condition along (ensemble, adjoint) over the control
/// set's probe points: all points of a finite set, vertices and edge
/// midpoints of a box.
[[nodiscard]] ViolationReport verify_smp(const Problem& problem, const PathEnsemble& ensemble,
                                         const AdjointEnsemble& adjoint, double factor = 10.0);

// ---------------------------------------------------------------------------
// Duality and gradients
// ---------------------------------------------------------------------------

enum class Pairing {
    step,  ///< β_step: exact for the discretized problem
    node,  ///< BᵀY_i at the left node: the continuous-time integrand
};

struct DualityResidual {
    Estimate value;
    double terminal = 0.0;  ///< E⟨X̃_T, h_x(X̄_T)⟩
    double running = 0.0;   ///< E Σ h⟨l_x, X̃_i⟩
    double boundary = 0.0;  ///< E Σ h⟨β_i, d_i⟩
};

/// E⟨X̃_T, h_x⟩ + E Σ h⟨l_x, X̃_i⟩ + E Σ h⟨β_i, d_i⟩, which vanishes for the
/// exact adjoint. `x_tilde` must come from first_variation_ensemble on
/// `ensemble` in `direction`.
[[nodiscard]] DualityResidual duality_residual(const Problem& problem, const PathEnsemble& ensemble,
                                               std::span<const StatePath> x_tilde, const AdjointEnsemble& adjoint,
                                               const ControlProcess& direction, Pairing pairing = Pairing::step);

/// g_i = mean l_u(u_i) − mean β_step_i, so that dJ(u + θv)/dθ = Σ h⟨g_i, v_i⟩.
struct ControlGradient {
    TimeGrid grid;
    std::vector<Control2> g;
    std::vector<Control2> se;  ///< MC + regression error per step

    [[nodiscard]] double directional(const ControlProcess& v) const;
    [[nodiscard]] double directional_se(const ControlProcess& v) const;
    [[nodiscard]] double l2_norm() const;
};

/// Throws hypothesis_failed unless the control set is a box.
[[nodiscard]] ControlGradient gradient_adjoint(const Problem& problem, const PathEnsemble& ensemble,
                                               const AdjointEnsemble& adjoint);

struct FdOptions {
    std::vector<double> thetas{1e-2, 5e-3, 2.5e-3};  ///< decreasing
};

struct FdResult {
    double value = 0.0;         ///< Richardson-extrapolated central difference
    double richardson_error = 0.0;
    double noise_floor = 0.0;   ///< rounding level of the finest difference
    double se = 0.0;            ///< MC standard error of the per-path differences
    std::vector<double> central;  ///< raw central difference per θ
};

/// Central differences (J(u+θv) − J(u−θv))/2θ on `noise` for every θ, then
/// Richardson extrapolation in θ².
[[nodiscard]] FdResult gradient_fd(const Problem& problem, const ControlProcess& u, const ControlProcess& v,
                                   std::shared_ptr<const NoiseBundle> noise, const FdOptions& options = {});

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

struct IterationRecord {
    std::size_t iteration = 0;
    double cost = 0.0;
    double cost_se = 0.0;
    double residual = 0.0;  ///< VI residual (projected gradient) or max gap (MSA)
    double step = 0.0;      ///< ρ (projected gradient) or changed steps (MSA)
    bool accepted = true;
};

enum class OptimizerStatus { converged, max_iterations, cycling, stalled, diverged };

[[nodiscard]] const char* to_string(OptimizerStatus s) noexcept;

struct OptimizationResult {
    ControlProcess control;
    double cost = 0.0;
    double residual = 0.0;
    OptimizerStatus status = OptimizerStatus::max_iterations;
    std::vector<IterationRecord> history;
};

/// max over box vertices v of Σ_i h·⟨−g_i, v − u_i⟩₊, taken per step.
[[nodiscard]] double vi_residual(const ControlGradient& g, const ControlProcess& u, const ControlSet& box);

struct ProjectedGradientOptions {
    double rho = 1.0;
    std::size_t max_iters = 200;
    double tol = 1e-3;           ///< on residual/(1+|J|)
    bool monotone = true;        ///< halve ρ on a non-decreasing step and retry
    std::size_t max_halvings = 30;
    RegressionBasis regression;
};

/// Projected gradient u ← Proj(u − ρ·g) on fixed noise. In monotone mode a
/// step that does not lower J is retried with ρ/2; otherwise five consecutive
/// cost increases stop the run with status diverged.
[[nodiscard]] OptimizationResult optimize_projected_gradient(const Problem& problem, const ControlProcess& u0,
                                                             const ProjectedGradientOptions& options = {});

struct MsaOptions {
    std::size_t max_iters = 50;
    double damping = 0.0;  ///< probability of keeping the old value at a step
    double tol = 0.0;      ///< stop when the max gap is at most tol
    /// Accept an update only if it lowers J. A rejected update is redrawn
    /// with the damping moved halfway to 1 (max_rejections draws), then every
    /// single-step change with positive Hamiltonian gain is tried, largest
    /// gain first. If none lowers J the run stops as stalled: no single-step
    /// change then lowers J.
    bool descent_safeguard = true;
    std::size_t max_rejections = 8;
    RegressionBasis regression;
};

/// Successive approximations on a finite control set: forward solve, adjoint
/// solve, pointwise argmax of the mean Hamiltonian. Without the descent
/// safeguard a repeated control sequence returns the best-cost iterate with
/// status cycling; with it, an update that never lowers J gives stalled.
[[nodiscard]] OptimizationResult optimize_msa(const Problem& problem, const ControlProcess& u0,
                                              const MsaOptions& options = {});

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

/// epsilon,delta,delta_se,eta,eta_se,xtilde_p2,xtilde_p4
void write_rate_csv(std::ostream& out, const RateReport& r);
/// step,time,gap,error,argmax_left,argmax_right,path_gap_max,path_gap_mean
void write_violation_csv(std::ostream& out, const ViolationReport& r);
/// iteration,cost,cost_se,residual,step,accepted
void write_history_csv(std::ostream& out, const OptimizationResult& r);
/// step,time,control_left,control_right
void write_control_csv(std::ostream& out, const ControlProcess& u);

[[nodiscard]] std::string summarize(const RateReport& r);
[[nodiscard]] std::string summarize(const ViolationReport& r);

}  // namespace smplab
