#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smplab/spectral.hpp"

namespace smplab {

/// A control value u = (u¹, u²): fluxes imposed at x = 0 and x = 1.
using Control2 = std::array<double, 2>;

// ---------------------------------------------------------------------------
// Coefficient registry
// ---------------------------------------------------------------------------

enum class ScalarKind { linear, affine, tanh_saturated, truncated_cubic, quadratic };

/// Scalar reaction or noise-gain function from the registry, always paired
/// with its derivative and declared Lipschitz constants.
///
///   linear(a)                 a·y
///   affine(a, b)              a·y + b
///   tanh-saturated(a, s=1)    a·s·tanh(y/s)          (slope a at 0, saturates at ±a·s)
///   truncated-cubic(a, R=1)   a·y³ on [−R,R], C¹ linear continuation outside
///   quadratic(a)              a·y²                   (not globally Lipschitz; audit witness)
class ScalarFunction {
public:
    /// Throws Error(config) for an unknown id or a wrong parameter count.
    static ScalarFunction make(std::string_view id, std::vector<double> params);
    static ScalarFunction linear(double a) { return make("linear", {a}); }
    static ScalarFunction tanh_saturated(double a, double s = 1.0) { return make("tanh-saturated", {a, s}); }

    [[nodiscard]] ScalarKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::vector<double>& params() const noexcept { return params_; }
    [[nodiscard]] std::string id() const;

    [[nodiscard]] double value(double y) const noexcept;
    [[nodiscard]] double derivative(double y) const noexcept;
    [[nodiscard]] double operator()(double y) const noexcept { return value(y); }

    [[nodiscard]] bool is_affine() const noexcept {
        return kind_ == ScalarKind::linear || kind_ == ScalarKind::affine;
    }
    /// Only meaningful when is_affine().
    [[nodiscard]] double slope() const noexcept { return params_[0]; }
    [[nodiscard]] double intercept() const noexcept { return kind_ == ScalarKind::affine ? params_[1] : 0.0; }

    /// Declared global Lipschitz constant of the function. For the quadratic
    /// kind this is the constant on [−base_radius, base_radius] only.
    [[nodiscard]] double lipschitz(double base_radius) const noexcept;
    /// Declared Lipschitz constant of the derivative.
    [[nodiscard]] double derivative_lipschitz() const noexcept;
    [[nodiscard]] bool globally_lipschitz() const noexcept { return kind_ != ScalarKind::quadratic; }

private:
    ScalarFunction(ScalarKind kind, std::vector<double> params) : kind_(kind), params_(std::move(params)) {}

    ScalarKind kind_;
    std::vector<double> params_;
};

[[nodiscard]] const char* to_string(ScalarKind kind) noexcept;

// ---------------------------------------------------------------------------
// Control set U_ad
// ---------------------------------------------------------------------------

class ControlSet {
public:
    enum class Kind { finite_set, box };

    static ControlSet finite(std::vector<Control2> values);
    static ControlSet box(Control2 lower, Control2 upper);
    /// {−1, 0, 1} × {−1, 0, 1}.
    static ControlSet ternary();

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::vector<Control2>& values() const noexcept { return values_; }
    [[nodiscard]] Control2 lower() const noexcept { return lower_; }
    [[nodiscard]] Control2 upper() const noexcept { return upper_; }

    [[nodiscard]] bool contains(const Control2& v, double tol = 1e-12) const noexcept;
    /// Boxes are convex; a finite set only when it has a single point.
    [[nodiscard]] bool is_convex() const noexcept { return kind_ == Kind::box || values_.size() == 1; }
    /// Finite set: all points. Box: the four vertices then the four edge
    /// midpoints.
    [[nodiscard]] std::vector<Control2> probe_points() const;
    [[nodiscard]] std::vector<Control2> vertices() const;
    /// Euclidean projection; box only.
    [[nodiscard]] Control2 project(const Control2& v) const;

private:
    Kind kind_ = Kind::box;
    std::vector<Control2> values_;
    Control2 lower_{0.0, 0.0};
    Control2 upper_{0.0, 0.0};
};

// ---------------------------------------------------------------------------
// Cost functional J = E Σ h·l(X_i, u_i) + E h(X_T)
// ---------------------------------------------------------------------------

/// Running cost l(t, x, u) = q|x − z|²_H + ⟨c, x⟩ + r|u|² + ⟨w, u⟩; every
/// term is optional (zero weight / empty vector). Modal vectors shorter than
/// the basis are zero-padded.
struct RunningCost {
    double tracking_weight = 0.0;  ///< q
    ModalVector tracking_target;   ///< z
    ModalVector linear;            ///< c
    double control_weight = 0.0;   ///< r
    Control2 control_linear{0.0, 0.0};  ///< w
};

/// Terminal cost h(x) = q_T|x − z_T|²_H + ⟨c_T, x⟩.
struct TerminalCost {
    double tracking_weight = 0.0;
    ModalVector tracking_target;
    ModalVector linear;
};

struct CostSpec {
    RunningCost running;
    TerminalCost terminal;

    [[nodiscard]] double running_value(std::span<const double> x, const Control2& u) const;
    /// l_x written into `out` (length of x).
    void running_gradient_x(std::span<const double> x, std::span<double> out) const;
    [[nodiscard]] Control2 running_gradient_u(const Control2& u) const noexcept;
    /// Control-dependent part r|u|² + ⟨w, u⟩ (the part that differs between
    /// candidate controls at a fixed state).
    [[nodiscard]] double running_control_part(const Control2& u) const noexcept;

    [[nodiscard]] double terminal_value(std::span<const double> x) const;
    void terminal_gradient_x(std::span<const double> x, std::span<double> out) const;

    /// True when l_x and h_x are affine in x (always the case for this
    /// registry; kept as the hook for the exact-linear adjoint).
    [[nodiscard]] bool affine_state_gradients() const noexcept { return true; }
};

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// Intensities of the two boundary noises (diagonal √Q).
struct BoundaryNoise {
    double left = 0.0;
    double right = 0.0;
    [[nodiscard]] bool enabled() const noexcept { return left != 0.0 || right != 0.0; }
};

struct Scenario {
    SpectralBasis basis;
    double horizon = 1.0;
    std::size_t n_steps = 128;
    ScalarFunction f = ScalarFunction::linear(0.0);
    std::optional<ScalarFunction> g;  ///< nullopt: no distributed noise
    BoundaryNoise boundary_noise;
    ControlSet control_set = ControlSet::box({-1.0, -1.0}, {1.0, 1.0});
    ModalVector initial_state;
    std::size_t n_paths = 1;
    std::uint64_t seed = 0;
};

struct TimeGrid {
    double horizon = 1.0;
    std::size_t n_steps = 1;

    [[nodiscard]] double step() const noexcept { return horizon / static_cast<double>(n_steps); }
    [[nodiscard]] double time(std::size_t i) const noexcept {
        return horizon * static_cast<double>(i) / static_cast<double>(n_steps);
    }
    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Scenario + cost with the derived boundary maps. Construction checks the
/// structural invariants (T > 0, n_steps ≥ 2, n_paths ≥ 1, sizes) and pads
/// the initial state and cost vectors to the basis size.
class Problem {
public:
    Problem(Scenario scenario, CostSpec cost);

    [[nodiscard]] const Scenario& scenario() const noexcept { return scenario_; }
    [[nodiscard]] const CostSpec& cost() const noexcept { return cost_; }
    [[nodiscard]] const SpectralBasis& basis() const noexcept { return scenario_.basis; }
    [[nodiscard]] std::size_t n_modes() const noexcept { return scenario_.basis.n_modes(); }
    [[nodiscard]] TimeGrid grid() const noexcept { return {scenario_.horizon, scenario_.n_steps}; }
    [[nodiscard]] const BoundaryMap& boundary_map(Side side) const noexcept {
        return side == Side::left ? left_ : right_;
    }

    /// Same problem with a different scenario (e.g. another step count or
    /// path count); the cost is kept.
    [[nodiscard]] Problem with_scenario(Scenario s) const { return Problem(std::move(s), cost_); }

private:
    Scenario scenario_;
    CostSpec cost_;
    BoundaryMap left_;
    BoundaryMap right_;
};

// ---------------------------------------------------------------------------
// Hypothesis audit
// ---------------------------------------------------------------------------

enum class CheckStatus { structural_pass, sampled_pass, fail, not_applicable };

[[nodiscard]] const char* to_string(CheckStatus s) noexcept;

struct HypothesisCheck {
    std::string id;  ///< "A.1" … "C.3", plus "C" for the convexity requirement
    CheckStatus status = CheckStatus::not_applicable;
    std::string detail;
};

struct ValidationReport {
    std::vector<HypothesisCheck> checks;

    [[nodiscard]] bool passed() const noexcept;
    [[nodiscard]] const HypothesisCheck& find(std::string_view id) const;
    [[nodiscard]] std::string to_text() const;
};

struct AuditOptions {
    double radius = 4.0;             ///< base sampling range [−R, R] / H-ball radius
    std::size_t samples = 100000;    ///< random pairs per range
    std::size_t escalations = 4;     ///< ranges R, 4R, 16R, … for the global (A) audits
    bool convex_case = false;        ///< audit (C) as well
};

/// Reports (A.1)–(A.5), (B.1)–(B.2) and, when requested, (C.1)–(C.3). Failed
/// hypotheses are reported, not thrown. Sampling is seeded by the scenario
/// seed.
[[nodiscard]] ValidationReport validate_scenario(const Scenario& s, const CostSpec& c, const AuditOptions& options = {});

/// Structural part of (C) used as a precondition by the convex-case
/// machinery: box control set. Throws Error(hypothesis_failed) otherwise.
void require_convex_case(const Problem& problem);

}  // namespace smplab
