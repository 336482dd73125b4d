#pragma once

#include <iosfwd>
#include <vector>

#include "smplab/cost.hpp"
#include "smplab/forward.hpp"

namespace smplab {

/// Conditional expectations Ê_i[·] by cross-sectional ridge regression on
/// affine features (1, X_{i,0}, …, X_{i,n_reg−1}).
struct RegressionBasis {
    std::size_t n_reg = 8;
    double ridge = 1e-8;  ///< on the standardized slopes; the intercept is not penalized
    /// Throw rank_deficient when the feature correlation matrix has condition
    /// number above 1e12. Otherwise nearly collinear directions are dropped
    /// (truncated pseudo-inverse) and only reported.
    bool strict = false;
};

struct RegressionDiagnostics {
    std::size_t step = 0;
    std::size_t features = 0;  ///< non-constant feature columns kept, intercept excluded
    std::size_t rank = 0;
    double condition = 1.0;
};

/// Backward solution along one forward path.
///
///   y         Y_i at the n+1 nodes, Y_n = −h_x(X_n)
///   z         Y_{i+1} − Ê_i[Y_{i+1}] per step: the martingale increment,
///             i.e. Z's action on the realized noise
///   gz        G_x(X_i)ᵀZ_i per step (g on only)
///   beta      BᵀY_i = D*(λ−A)*Y_i at every node
///   beta_step (1/h)·BᵀΦ·Ê_i[Y_{i+1}] per step, the pairing that enters the
///             gradient and the Hamiltonian of the discretized problem
class AdjointPath {
public:
    AdjointPath(TimeGrid grid, std::size_t n_modes, std::size_t path, bool with_gz);

    [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t n_modes() const noexcept { return n_modes_; }
    [[nodiscard]] std::size_t path() const noexcept { return path_; }

    [[nodiscard]] std::span<double> y(std::size_t i) { return {y_.data() + i * n_modes_, n_modes_}; }
    [[nodiscard]] std::span<const double> y(std::size_t i) const { return {y_.data() + i * n_modes_, n_modes_}; }
    [[nodiscard]] std::span<double> z(std::size_t i) { return {z_.data() + i * n_modes_, n_modes_}; }
    [[nodiscard]] std::span<const double> z(std::size_t i) const { return {z_.data() + i * n_modes_, n_modes_}; }
    [[nodiscard]] bool has_gz() const noexcept { return !gz_.empty(); }
    [[nodiscard]] std::span<double> gz(std::size_t i) { return {gz_.data() + i * n_modes_, n_modes_}; }
    [[nodiscard]] std::span<const double> gz(std::size_t i) const { return {gz_.data() + i * n_modes_, n_modes_}; }

    [[nodiscard]] Control2& beta(std::size_t i) { return beta_[i]; }
    [[nodiscard]] const Control2& beta(std::size_t i) const { return beta_[i]; }
    [[nodiscard]] Control2& beta_step(std::size_t i) { return beta_step_[i]; }
    [[nodiscard]] const Control2& beta_step(std::size_t i) const { return beta_step_[i]; }

private:
    TimeGrid grid_;
    std::size_t n_modes_;
    std::size_t path_;
    std::vector<double> y_;
    std::vector<double> z_;
    std::vector<double> gz_;
    std::vector<Control2> beta_;
    std::vector<Control2> beta_step_;
};

struct AdjointEnsemble {
    std::shared_ptr<const NoiseBundle> noise;
    ControlProcess control;
    std::vector<AdjointPath> paths;
    std::vector<RegressionDiagnostics> diagnostics;  ///< per step, empty for the exact solver
    /// Regression standard error of the cross-path mean of beta_step, per step
    /// and side (zero for the exact solver).
    std::vector<Control2> beta_step_se;
    bool exact = false;

    [[nodiscard]] std::size_t n_paths() const noexcept { return paths.size(); }
    [[nodiscard]] const TimeGrid& grid() const noexcept { return control.grid(); }
    [[nodiscard]] Control2 mean_beta_step(std::size_t i) const;
};

/// Least-squares Monte-Carlo solution of the adjoint equation of the
/// discretized problem along `ensemble` (control and cost taken from the
/// ensemble and the problem). The scheme is the exact transpose of the
/// forward step, so it is explicit and needs no fixed-point iteration:
///
///   Ŷ_i = Ê_i[Y_{i+1}]
///   Y_i = e^{hA}Ŷ_i + F_x(X_i)ᵀΦŶ_i + Ê_i[P(g'(X_i)·ΔW_i·e^{hA}Y_{i+1})] − h·l_x(X_i, u_i)
///
/// Throws invalid_argument when the effective feature count exceeds
/// n_paths/10, rank_deficient in strict mode.
[[nodiscard]] AdjointEnsemble solve_adjoint(const Problem& problem, const PathEnsemble& ensemble,
                                            const RegressionBasis& basis = {});

/// Oracle for affine f, g off: Y_i = S_i X_i + s_i with S, s from the
/// conditional-mean recursion of the Gaussian linear dynamics. No regression.
/// Throws not_applicable otherwise.
[[nodiscard]] AdjointEnsemble solve_adjoint_exact_linear(const Problem& problem, const PathEnsemble& ensemble);

/// (Σ_k b_k^left·y_k, Σ_k b_k^right·y_k)
[[nodiscard]] Control2 boundary_pairing(std::span<const double> y, const BoundaryMap& left, const BoundaryMap& right);
[[nodiscard]] std::vector<Control2> boundary_pairing(const AdjointPath& adj, const BoundaryMap& left,
                                                     const BoundaryMap& right);

/// ‖ensemble‖ = sqrt(mean_p Σ_i h|Y_i^p|²); relative error of `a` against `b`.
[[nodiscard]] double adjoint_relative_error(const AdjointEnsemble& a, const AdjointEnsemble& b);

struct RegularityOptions {
    double window_fraction = 1.0 / 64.0;  ///< fit nodes with h ≤ T − t_i ≤ fraction·T
};

struct RegularityReport {
    /// Slope of log of the running-max envelope of E‖β‖ (max over nodes
    /// farther from T inside the window) against log(T−t). Never positive.
    double slope = 0.0;
    double raw_slope = 0.0;  ///< same fit on E‖β‖ itself
    double constant = 0.0;   ///< C in E‖β‖ ≈ C·(T−t)^slope
    std::size_t fit_nodes = 0;
    std::vector<double> tau;          ///< T − t_i for i = 0..n−1
    std::vector<double> mean_norm;    ///< E‖β_i‖
    std::vector<double> envelope;     ///< inside the window; NaN outside
};

/// Fits the blow-up of the boundary pairing near T on [0, T−h] (never at T).
/// Throws invalid_argument with fewer than 8 nodes in the window.
[[nodiscard]] RegularityReport regularity_profile(const AdjointEnsemble& adjoint, const RegularityOptions& options = {});

/// Dumps: path,step,time,mode,y and path,step,time,side,beta.
void write_adjoint_csv(std::ostream& y_out, std::ostream& beta_out, const AdjointEnsemble& adjoint);

}  // namespace smplab
