#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smplab/smp.hpp"

namespace smplab {

enum class ExperimentKind { simulate, adjoint, grad_check, spike_rates, optimize, verify_smp, regularity };

/// "simulate", "adjoint", "grad-check", "spike-rates", "optimize", "verify-smp", "regularity".
[[nodiscard]] const char* to_string(ExperimentKind kind) noexcept;
[[nodiscard]] std::optional<ExperimentKind> parse_experiment_kind(std::string_view name) noexcept;
[[nodiscard]] const std::vector<ExperimentKind>& all_experiments();

/// Scenario section, kept as plain values so configs compare and round-trip.
struct ScenarioConfig {
    std::string preset = "none";
    std::size_t n_modes = 32;
    std::size_t grid_size = 64;  ///< 2·n_modes when absent
    double lambda = 1.0;
    double horizon = 1.0;
    std::size_t n_steps = 128;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 1;
    std::string f = "linear";
    std::vector<double> f_params{0.0};
    std::string g = "off";
    std::vector<double> g_params;
    Control2 boundary_noise{0.0, 0.0};
    std::string control_set = "box";  ///< box, ternary or finite
    Control2 control_lower{-1.0, -1.0};
    Control2 control_upper{1.0, 1.0};
    std::vector<double> control_values;  ///< finite: flattened pairs
    std::vector<double> initial_state;

    friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

struct CostConfig {
    double tracking_weight = 0.0;
    std::vector<double> tracking_target;
    std::vector<double> state_linear;
    double control_weight = 0.0;
    Control2 control_linear{0.0, 0.0};
    double terminal_weight = 0.0;
    std::vector<double> terminal_target;
    std::vector<double> terminal_linear;

    friend bool operator==(const CostConfig&, const CostConfig&) = default;
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::simulate;
    std::string output = "out";
    ScenarioConfig scenario;
    CostConfig cost;

    std::string control_source = "constant";  ///< constant or file
    Control2 control_value{0.0, 0.0};
    std::string control_file;  ///< control.csv as written by optimize

    std::size_t n_reg = 8;
    double ridge = 1e-8;
    std::string adjoint_solver = "regression";  ///< or exact-linear

    std::size_t dump_paths = 4;

    std::vector<double> theta_ladder{1e-2, 5e-3, 2.5e-3};
    std::size_t blocks = 4;  ///< grad-check directions: indicator blocks per side

    double t_bar = 0.25;
    std::vector<double> epsilon_ladder;
    Control2 spike_value{1.0, 1.0};
    bool refine = true;

    std::string method;  ///< projected-gradient or msa
    double rho = 1.0;
    std::size_t max_iters = 200;
    double damping = 0.0;
    double tol = 1e-3;

    double gap_factor = 10.0;
    double window_fraction = 1.0 / 64.0;

    double oracle_error = 1e-2;
    double gradient_rel = 1e-2;
    double delta_slope_min = 0.5;
    double eta_margin = 0.1;
    double regularity_low = -0.35;
    double regularity_high = 0.0;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct ConfigIssue {
    std::size_t line = 0;  ///< 0 when the issue has no single source line
    std::string message;
    [[nodiscard]] std::string to_string() const;
};

struct ParseResult {
    std::optional<ExperimentConfig> config;
    std::vector<ConfigIssue> errors;
    [[nodiscard]] bool ok() const noexcept { return config.has_value(); }
    [[nodiscard]] std::string error_text() const;
};

struct ParseOverrides {
    std::optional<ExperimentKind> experiment;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
};

/// Line-oriented `section.key = value`, `#` to end of line is a comment,
/// lists are comma-separated. `scenario.preset` loads a named scenario first;
/// explicit keys override it wherever they appear. Every error is collected.
[[nodiscard]] ParseResult parse_config(std::string_view text, const ParseOverrides& overrides = {});

/// Every key, in a fixed order, numbers with 17 significant digits.
[[nodiscard]] std::string serialize_config(const ExperimentConfig& cfg);

/// Reads and parses a file; I/O failures become an error on line 0.
[[nodiscard]] ParseResult load_config(const std::filesystem::path& path, const ParseOverrides& overrides = {});

/// linear, tanh, tanh-mult, lq-box, ternary, rough-terminal, smooth-terminal.
[[nodiscard]] const std::vector<std::string>& preset_names();
/// Default config with the preset's scenario and cost sections. Throws
/// Error(config) for an unknown name.
[[nodiscard]] ExperimentConfig preset_config(std::string_view name);

[[nodiscard]] Scenario make_scenario(const ExperimentConfig& cfg);
[[nodiscard]] CostSpec make_cost(const ExperimentConfig& cfg);
[[nodiscard]] Problem make_problem(const ExperimentConfig& cfg);
[[nodiscard]] RegressionBasis make_regression(const ExperimentConfig& cfg);

/// Reads step,time,control_left,control_right rows; the row count must match
/// the grid.
[[nodiscard]] ControlProcess read_control_csv(std::istream& in, const TimeGrid& grid);

/// The control named by the control section, relative files resolved against
/// `base_dir`, tagged against the scenario's control set.
[[nodiscard]] ControlProcess make_control(const ExperimentConfig& cfg, const Problem& problem,
                                          const std::filesystem::path& base_dir = {});

}  // namespace smplab
