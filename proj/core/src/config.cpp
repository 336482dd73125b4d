#include "smplab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "smplab/csv.hpp"
#include "smplab/error.hpp"

namespace smplab {

namespace {

constexpr std::pair<ExperimentKind, const char*> kKindNames[] = {
    {ExperimentKind::simulate, "simulate"},       {ExperimentKind::adjoint, "adjoint"},
    {ExperimentKind::grad_check, "grad-check"},   {ExperimentKind::spike_rates, "spike-rates"},
    {ExperimentKind::optimize, "optimize"},       {ExperimentKind::verify_smp, "verify-smp"},
    {ExperimentKind::regularity, "regularity"},
};

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::optional<double> to_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    const std::string buf(s);
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<std::uint64_t> to_u64(std::string_view s) {
    s = trim(s);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<std::vector<double>> to_list(std::string_view s) {
    std::vector<double> out;
    s = trim(s);
    if (s.empty()) return out;
    while (true) {
        const auto comma = s.find(',');
        const auto v = to_double(s.substr(0, comma));
        if (!v) return std::nullopt;
        out.push_back(*v);
        if (comma == std::string_view::npos) return out;
        s.remove_prefix(comma + 1);
    }
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_double(v[i]);
    }
    return s;
}

/// One configurable key: a setter that reports a type error as a string and
/// a getter producing the canonical text.
struct Key {
    std::string name;
    std::function<std::optional<std::string>(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename M>
Key real_key(std::string name, M member) {
    return {std::move(name),
            [member](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
                const auto d = to_double(v);
                if (!d) return "expected a finite number";
                member(c) = *d;
                return std::nullopt;
            },
            [member](const ExperimentConfig& c) { return format_double(member(c)); }};
}

template <typename M>
Key count_key(std::string name, M member) {
    return {std::move(name),
            [member](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
                const auto d = to_u64(v);
                if (!d) return "expected a non-negative integer";
                member(c) = static_cast<std::size_t>(*d);
                return std::nullopt;
            },
            [member](const ExperimentConfig& c) { return std::to_string(member(c)); }};
}

template <typename M>
Key text_key(std::string name, M member) {
    return {std::move(name),
            [member](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
                member(c) = std::string(trim(v));
                return std::nullopt;
            },
            [member](const ExperimentConfig& c) { return member(c); }};
}

template <typename M>
Key list_key(std::string name, M member) {
    return {std::move(name),
            [member](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
                auto l = to_list(v);
                if (!l) return "expected a comma-separated list of finite numbers";
                member(c) = std::move(*l);
                return std::nullopt;
            },
            [member](const ExperimentConfig& c) { return join(member(c)); }};
}

template <typename M>
Key pair_key(std::string name, M member) {
    return {std::move(name),
            [member](ExperimentConfig& c, std::string_view v) -> std::optional<std::string> {
                const auto l = to_list(v);
                if (!l || l->size() != 2) return "expected two numbers";
                member(c) = {(*l)[0], (*l)[1]};
                return std::nullopt;
            },
            [member](const ExperimentConfig& c) {
                const auto& p = member(c);
                return join({p[0], p[1]});
            }};
}

#define SMPLAB_FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Key>& keys() {
    static const std::vector<Key> k = [] {
        std::vector<Key> v;
        v.push_back({"experiment.kind",
                     [](ExperimentConfig& c, std::string_view s) -> std::optional<std::string> {
                         const auto kind = parse_experiment_kind(trim(s));
                         if (!kind) return "unknown experiment '" + std::string(trim(s)) + "'";
                         c.experiment = *kind;
                         return std::nullopt;
                     },
                     [](const ExperimentConfig& c) { return std::string(to_string(c.experiment)); }});
        v.push_back(text_key("experiment.output", SMPLAB_FIELD(output)));
        v.push_back(text_key("scenario.preset", SMPLAB_FIELD(scenario.preset)));
        v.push_back(count_key("scenario.n_modes", SMPLAB_FIELD(scenario.n_modes)));
        v.push_back(count_key("scenario.grid_size", SMPLAB_FIELD(scenario.grid_size)));
        v.push_back(real_key("scenario.lambda", SMPLAB_FIELD(scenario.lambda)));
        v.push_back(real_key("scenario.horizon", SMPLAB_FIELD(scenario.horizon)));
        v.push_back(count_key("scenario.n_steps", SMPLAB_FIELD(scenario.n_steps)));
        v.push_back(count_key("scenario.n_paths", SMPLAB_FIELD(scenario.n_paths)));
        v.push_back({"scenario.seed",
                     [](ExperimentConfig& c, std::string_view s) -> std::optional<std::string> {
                         const auto d = to_u64(s);
                         if (!d) return "expected an unsigned 64-bit integer";
                         c.scenario.seed = *d;
                         return std::nullopt;
                     },
                     [](const ExperimentConfig& c) { return std::to_string(c.scenario.seed); }});
        v.push_back(text_key("scenario.f", SMPLAB_FIELD(scenario.f)));
        v.push_back(list_key("scenario.f_params", SMPLAB_FIELD(scenario.f_params)));
        v.push_back(text_key("scenario.g", SMPLAB_FIELD(scenario.g)));
        v.push_back(list_key("scenario.g_params", SMPLAB_FIELD(scenario.g_params)));
        v.push_back(pair_key("scenario.boundary_noise", SMPLAB_FIELD(scenario.boundary_noise)));
        v.push_back(text_key("scenario.control_set", SMPLAB_FIELD(scenario.control_set)));
        v.push_back(pair_key("scenario.control_lower", SMPLAB_FIELD(scenario.control_lower)));
        v.push_back(pair_key("scenario.control_upper", SMPLAB_FIELD(scenario.control_upper)));
        v.push_back(list_key("scenario.control_values", SMPLAB_FIELD(scenario.control_values)));
        v.push_back(list_key("scenario.initial_state", SMPLAB_FIELD(scenario.initial_state)));
        v.push_back(real_key("cost.tracking_weight", SMPLAB_FIELD(cost.tracking_weight)));
        v.push_back(list_key("cost.tracking_target", SMPLAB_FIELD(cost.tracking_target)));
        v.push_back(list_key("cost.state_linear", SMPLAB_FIELD(cost.state_linear)));
        v.push_back(real_key("cost.control_weight", SMPLAB_FIELD(cost.control_weight)));
        v.push_back(pair_key("cost.control_linear", SMPLAB_FIELD(cost.control_linear)));
        v.push_back(real_key("cost.terminal_weight", SMPLAB_FIELD(cost.terminal_weight)));
        v.push_back(list_key("cost.terminal_target", SMPLAB_FIELD(cost.terminal_target)));
        v.push_back(list_key("cost.terminal_linear", SMPLAB_FIELD(cost.terminal_linear)));
        v.push_back(text_key("control.source", SMPLAB_FIELD(control_source)));
        v.push_back(pair_key("control.value", SMPLAB_FIELD(control_value)));
        v.push_back(text_key("control.file", SMPLAB_FIELD(control_file)));
        v.push_back(count_key("regression.n_reg", SMPLAB_FIELD(n_reg)));
        v.push_back(real_key("regression.ridge", SMPLAB_FIELD(ridge)));
        v.push_back(text_key("adjoint.solver", SMPLAB_FIELD(adjoint_solver)));
        v.push_back(count_key("simulate.dump_paths", SMPLAB_FIELD(dump_paths)));
        v.push_back(list_key("gradcheck.theta_ladder", SMPLAB_FIELD(theta_ladder)));
        v.push_back(count_key("gradcheck.blocks", SMPLAB_FIELD(blocks)));
        v.push_back(real_key("spike.t_bar", SMPLAB_FIELD(t_bar)));
        v.push_back(list_key("spike.epsilon_ladder", SMPLAB_FIELD(epsilon_ladder)));
        v.push_back(pair_key("spike.value", SMPLAB_FIELD(spike_value)));
        v.push_back({"spike.refine",
                     [](ExperimentConfig& c, std::string_view s) -> std::optional<std::string> {
                         s = trim(s);
                         if (s != "true" && s != "false") return "expected true or false";
                         c.refine = s == "true";
                         return std::nullopt;
                     },
                     [](const ExperimentConfig& c) { return std::string(c.refine ? "true" : "false"); }});
        v.push_back(text_key("optimize.method", SMPLAB_FIELD(method)));
        v.push_back(real_key("optimize.rho", SMPLAB_FIELD(rho)));
        v.push_back(count_key("optimize.max_iters", SMPLAB_FIELD(max_iters)));
        v.push_back(real_key("optimize.damping", SMPLAB_FIELD(damping)));
        v.push_back(real_key("optimize.tol", SMPLAB_FIELD(tol)));
        v.push_back(real_key("verify.gap_factor", SMPLAB_FIELD(gap_factor)));
        v.push_back(real_key("regularity.window_fraction", SMPLAB_FIELD(window_fraction)));
        v.push_back(real_key("threshold.oracle_error", SMPLAB_FIELD(oracle_error)));
        v.push_back(real_key("threshold.gradient_rel", SMPLAB_FIELD(gradient_rel)));
        v.push_back(real_key("threshold.delta_slope_min", SMPLAB_FIELD(delta_slope_min)));
        v.push_back(real_key("threshold.eta_margin", SMPLAB_FIELD(eta_margin)));
        v.push_back(real_key("threshold.regularity_low", SMPLAB_FIELD(regularity_low)));
        v.push_back(real_key("threshold.regularity_high", SMPLAB_FIELD(regularity_high)));
        return v;
    }();
    return k;
}

#undef SMPLAB_FIELD

const Key* find_key(std::string_view name) {
    for (const auto& k : keys())
        if (k.name == name) return &k;
    return nullptr;
}

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

void lq_cost(CostConfig& c) {
    c = CostConfig{};
    c.tracking_weight = 1.0;
    c.tracking_target = {0.5, -0.25};
    c.control_weight = 0.1;
    c.terminal_weight = 0.5;
    c.terminal_linear = {0.0, 0.3};
}

void linear_preset(ExperimentConfig& c) {
    auto& s = c.scenario;
    s.n_modes = 32;
    s.grid_size = 64;
    s.n_steps = 128;
    s.n_paths = 1000;
    s.f = "linear";
    s.f_params = {-0.5};
    s.g = "off";
    s.g_params.clear();
    s.boundary_noise = {0.5, 0.5};
    s.control_set = "box";
    s.control_lower = {-1.0, -1.0};
    s.control_upper = {1.0, 1.0};
    s.control_values.clear();
    s.initial_state = {0.3, 0.5, -0.2};
    lq_cost(c.cost);
}

void apply_preset(ExperimentConfig& c, std::string_view name) {
    linear_preset(c);
    auto& s = c.scenario;
    if (name == "linear") {
    } else if (name == "tanh") {
        s.f = "tanh-saturated";
        s.f_params = {2.0, 0.5};
    } else if (name == "tanh-mult") {
        s.f = "tanh-saturated";
        s.f_params = {2.0, 0.5};
        s.g = "linear";
        s.g_params = {0.3};
    } else if (name == "lq-box") {
        s.control_lower = {-1.0, -0.05};
        s.control_upper = {1.0, 0.05};
        c.cost.tracking_target = {2.0};
    } else if (name == "ternary") {
        s.control_set = "ternary";
    } else if (name == "rough-terminal" || name == "smooth-terminal") {
        s.n_modes = 64;
        s.grid_size = 128;
        s.n_steps = 2048;
        s.n_paths = 1;
        s.boundary_noise = {0.0, 0.0};
        s.initial_state = {0.5, 0.2};
        c.cost = CostConfig{};
        if (name == "rough-terminal") {
            c.cost.terminal_linear.assign(64, 0.0);
            for (std::size_t k = 1; k < 64; ++k) c.cost.terminal_linear[k] = 1.0 / static_cast<double>(k);
        } else {
            c.cost.state_linear = {1.0, 0.5, 0.25};
        }
    } else {
        throw Error(ErrorCode::config, "unknown preset '" + std::string(name) + "'");
    }
    s.preset = std::string(name);
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

struct Validator {
    const ExperimentConfig& c;
    const std::map<std::string, std::size_t>& lines;
    std::vector<ConfigIssue>& errors;

    void fail(const std::string& key, const std::string& msg) const {
        const auto it = lines.find(key);
        errors.push_back({it == lines.end() ? 0 : it->second, key + ": " + msg});
    }
    void positive(const std::string& key, double v) const {
        if (!(v > 0.0)) fail(key, "must be positive");
    }
    void registry(const std::string& key, const std::string& id, const std::vector<double>& params) const {
        try {
            (void)ScalarFunction::make(id, params);
        } catch (const Error& e) {
            fail(key, e.what());
        }
    }
    void missing(const std::string& key) const {
        const auto dot = key.find('.');
        errors.push_back({0, "missing key " + key.substr(dot + 1) + " (section " + key.substr(0, dot) + ")"});
    }
};

std::optional<ControlSet> control_set_of(const ScenarioConfig& s, std::string* why) {
    try {
        if (s.control_set == "box") return ControlSet::box(s.control_lower, s.control_upper);
        if (s.control_set == "ternary") return ControlSet::ternary();
        if (s.control_set == "finite") {
            if (s.control_values.empty() || s.control_values.size() % 2 != 0)
                throw Error(ErrorCode::config, "control_values must hold a nonempty list of pairs");
            std::vector<Control2> v;
            for (std::size_t i = 0; i < s.control_values.size(); i += 2)
                v.push_back({s.control_values[i], s.control_values[i + 1]});
            return ControlSet::finite(std::move(v));
        }
        throw Error(ErrorCode::config, "unknown control set '" + s.control_set + "' (box, ternary, finite)");
    } catch (const Error& e) {
        if (why) *why = e.what();
        return std::nullopt;
    }
}

void validate(const ExperimentConfig& c, const std::map<std::string, std::size_t>& lines,
              std::vector<ConfigIssue>& errors) {
    const Validator v{c, lines, errors};
    const auto& s = c.scenario;

    if (c.output.empty()) v.fail("experiment.output", "must not be empty");
    v.positive("scenario.n_modes", static_cast<double>(s.n_modes));
    if (s.grid_size < 2 * s.n_modes) v.fail("scenario.grid_size", "must be at least 2·n_modes");
    v.positive("scenario.lambda", s.lambda);
    v.positive("scenario.horizon", s.horizon);
    if (s.n_steps < 2) v.fail("scenario.n_steps", "must be at least 2");
    v.positive("scenario.n_paths", static_cast<double>(s.n_paths));
    v.registry("scenario.f", s.f, s.f_params);
    if (s.g != "off") v.registry("scenario.g", s.g, s.g_params);
    if (s.boundary_noise[0] < 0.0 || s.boundary_noise[1] < 0.0)
        v.fail("scenario.boundary_noise", "intensities must be non-negative");
    if (s.initial_state.size() > s.n_modes) v.fail("scenario.initial_state", "longer than n_modes");

    std::string why;
    const auto set = control_set_of(s, &why);
    if (!set) v.fail("scenario.control_set", why);

    if (c.cost.tracking_weight < 0.0) v.fail("cost.tracking_weight", "must be non-negative");
    if (c.cost.control_weight < 0.0) v.fail("cost.control_weight", "must be non-negative");
    if (c.cost.terminal_weight < 0.0) v.fail("cost.terminal_weight", "must be non-negative");
    for (const auto& [key, vec] : {std::pair{"cost.tracking_target", &c.cost.tracking_target},
                                   std::pair{"cost.state_linear", &c.cost.state_linear},
                                   std::pair{"cost.terminal_target", &c.cost.terminal_target},
                                   std::pair{"cost.terminal_linear", &c.cost.terminal_linear}})
        if (vec->size() > s.n_modes) v.fail(key, "longer than n_modes");

    if (c.control_source == "constant") {
        if (set && !set->contains(c.control_value)) v.fail("control.value", "not in the control set");
    } else if (c.control_source == "file") {
        if (c.control_file.empty()) v.missing("control.file");
    } else {
        v.fail("control.source", "expected constant or file");
    }

    v.positive("regression.n_reg", static_cast<double>(c.n_reg));
    if (c.ridge < 0.0) v.fail("regression.ridge", "must be non-negative");
    if (c.adjoint_solver != "regression" && c.adjoint_solver != "exact-linear")
        v.fail("adjoint.solver", "expected regression or exact-linear");

    v.positive("verify.gap_factor", c.gap_factor);
    if (!(c.window_fraction > 0.0 && c.window_fraction <= 1.0))
        v.fail("regularity.window_fraction", "must lie in (0, 1]");
    v.positive("threshold.oracle_error", c.oracle_error);
    v.positive("threshold.gradient_rel", c.gradient_rel);
    if (c.regularity_low > c.regularity_high) v.fail("threshold.regularity_low", "exceeds regularity_high");

    const double h = s.horizon / static_cast<double>(std::max<std::size_t>(s.n_steps, 1));
    switch (c.experiment) {
        case ExperimentKind::adjoint:
            if (c.adjoint_solver == "exact-linear" && (s.g != "off" || (s.f != "linear" && s.f != "affine")))
                v.fail("adjoint.solver", "exact-linear needs an affine f and g off");
            break;
        case ExperimentKind::grad_check:
            if (set && set->kind() != ControlSet::Kind::box) v.fail("scenario.control_set", "grad-check needs a box");
            if (c.theta_ladder.empty()) v.missing("gradcheck.theta_ladder");
            for (std::size_t i = 0; i < c.theta_ladder.size(); ++i)
                if (!(c.theta_ladder[i] > 0.0) || (i && c.theta_ladder[i] >= c.theta_ladder[i - 1]))
                    v.fail("gradcheck.theta_ladder", "must be positive and strictly decreasing");
            v.positive("gradcheck.blocks", static_cast<double>(c.blocks));
            if (c.blocks > s.n_steps) v.fail("gradcheck.blocks", "more blocks than steps");
            break;
        case ExperimentKind::spike_rates: {
            if (c.epsilon_ladder.empty()) {
                v.missing("spike.epsilon_ladder");
                break;
            }
            if (c.epsilon_ladder.size() < 2) v.fail("spike.epsilon_ladder", "needs at least two values");
            for (std::size_t i = 0; i < c.epsilon_ladder.size(); ++i) {
                const double e = c.epsilon_ladder[i];
                if (!(e > 0.0) || (i && e >= c.epsilon_ladder[i - 1]))
                    v.fail("spike.epsilon_ladder", "must be positive and strictly decreasing");
                else if (std::abs(e / h - std::round(e / h)) > 1e-9 * (e / h))
                    v.fail("spike.epsilon_ladder", format_double(e) + " is not a multiple of the step");
            }
            if (c.t_bar < 0.0 || (!c.epsilon_ladder.empty() && c.t_bar + c.epsilon_ladder.front() > s.horizon + 1e-12))
                v.fail("spike.t_bar", "spike window leaves [0, T]");
            if (set && !set->contains(c.spike_value)) v.fail("spike.value", "not in the control set");
            break;
        }
        case ExperimentKind::optimize:
            if (c.method.empty()) {
                v.missing("optimize.method");
            } else if (c.method == "projected-gradient") {
                if (set && set->kind() != ControlSet::Kind::box)
                    v.fail("optimize.method", "projected-gradient needs a box control set");
                v.positive("optimize.rho", c.rho);
            } else if (c.method == "msa") {
                if (set && set->kind() != ControlSet::Kind::finite_set)
                    v.fail("optimize.method", "msa needs a finite control set");
                if (!(c.damping >= 0.0 && c.damping < 1.0)) v.fail("optimize.damping", "must lie in [0, 1)");
            } else {
                v.fail("optimize.method", "expected projected-gradient or msa");
            }
            v.positive("optimize.max_iters", static_cast<double>(c.max_iters));
            if (c.tol < 0.0) v.fail("optimize.tol", "must be non-negative");
            break;
        default:
            break;
    }
}

}  // namespace

const char* to_string(ExperimentKind kind) noexcept {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "?";
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view name) noexcept {
    for (const auto& [k, n] : kKindNames)
        if (name == n) return k;
    return std::nullopt;
}

const std::vector<ExperimentKind>& all_experiments() {
    static const std::vector<ExperimentKind> v = [] {
        std::vector<ExperimentKind> out;
        for (const auto& [k, n] : kKindNames) out.push_back(k);
        return out;
    }();
    return v;
}

std::string ConfigIssue::to_string() const {
    return line ? "line " + std::to_string(line) + ": " + message : message;
}

std::string ParseResult::error_text() const {
    std::string s;
    for (const auto& e : errors) s += e.to_string() + "\n";
    return s;
}

ParseResult parse_config(std::string_view text, const ParseOverrides& overrides) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

    struct Entry {
        std::size_t line;
        std::string key;
        std::string value;
    };
    std::vector<Entry> entries;
    std::map<std::string, std::size_t> lines;
    ParseResult result;

    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            result.errors.push_back({line_no, "expected 'section.key = value'"});
            continue;
        }
        const std::string key(trim(line.substr(0, eq)));
        if (!find_key(key)) {
            result.errors.push_back({line_no, "unknown key " + key});
            continue;
        }
        if (const auto it = lines.find(key); it != lines.end()) {
            result.errors.push_back(
                {line_no, "duplicate key " + key + " (lines " + std::to_string(it->second) + " and " +
                              std::to_string(line_no) + ")"});
            continue;
        }
        lines[key] = line_no;
        entries.push_back({line_no, key, std::string(trim(line.substr(eq + 1)))});
    }

    ExperimentConfig cfg;
    for (const auto& e : entries)
        if (e.key == "scenario.preset" && e.value != "none") {
            try {
                apply_preset(cfg, e.value);
            } catch (const Error& err) {
                result.errors.push_back({e.line, err.what()});
            }
        }
    for (const auto& e : entries)
        if (const auto err = find_key(e.key)->set(cfg, e.value))
            result.errors.push_back({e.line, e.key + ": " + *err});
    if (!lines.contains("scenario.grid_size")) cfg.scenario.grid_size = 2 * cfg.scenario.n_modes;

    if (overrides.experiment) cfg.experiment = *overrides.experiment;
    if (overrides.seed) cfg.scenario.seed = *overrides.seed;
    if (overrides.output) cfg.output = *overrides.output;

    if (result.errors.empty()) validate(cfg, lines, result.errors);
    if (result.errors.empty()) result.config = std::move(cfg);
    return result;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& k : keys()) {
        const auto v = k.get(cfg);
        out += k.name + (v.empty() ? " =\n" : " = " + v + "\n");
    }
    return out;
}

ParseResult load_config(const std::filesystem::path& path, const ParseOverrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        ParseResult r;
        r.errors.push_back({0, "cannot read " + path.string()});
        return r;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> n{"linear",  "tanh",           "tanh-mult",      "lq-box",
                                            "ternary", "rough-terminal", "smooth-terminal"};
    return n;
}

ExperimentConfig preset_config(std::string_view name) {
    ExperimentConfig c;
    apply_preset(c, name);
    return c;
}

Scenario make_scenario(const ExperimentConfig& cfg) {
    const auto& s = cfg.scenario;
    std::string why;
    auto set = control_set_of(s, &why);
    if (!set) throw Error(ErrorCode::config, why);
    Scenario out{.basis = build_basis(s.n_modes, s.lambda, s.grid_size),
                 .horizon = s.horizon,
                 .n_steps = s.n_steps,
                 .f = ScalarFunction::make(s.f, s.f_params),
                 .g = std::nullopt,
                 .boundary_noise = {s.boundary_noise[0], s.boundary_noise[1]},
                 .control_set = std::move(*set),
                 .initial_state = ModalVector(s.initial_state.empty() ? std::vector<double>(1, 0.0) : s.initial_state),
                 .n_paths = s.n_paths,
                 .seed = s.seed};
    if (s.g != "off") out.g = ScalarFunction::make(s.g, s.g_params);
    return out;
}

CostSpec make_cost(const ExperimentConfig& cfg) {
    const auto& c = cfg.cost;
    auto vec = [](const std::vector<double>& v) { return v.empty() ? ModalVector() : ModalVector(v); };
    CostSpec out;
    out.running.tracking_weight = c.tracking_weight;
    out.running.tracking_target = vec(c.tracking_target);
    out.running.linear = vec(c.state_linear);
    out.running.control_weight = c.control_weight;
    out.running.control_linear = c.control_linear;
    out.terminal.tracking_weight = c.terminal_weight;
    out.terminal.tracking_target = vec(c.terminal_target);
    out.terminal.linear = vec(c.terminal_linear);
    return out;
}

Problem make_problem(const ExperimentConfig& cfg) { return Problem(make_scenario(cfg), make_cost(cfg)); }

RegressionBasis make_regression(const ExperimentConfig& cfg) {
    RegressionBasis b;
    b.n_reg = cfg.n_reg;
    b.ridge = cfg.ridge;
    return b;
}

ControlProcess read_control_csv(std::istream& in, const TimeGrid& grid) {
    std::string line;
    if (!std::getline(in, line) || line != "step,time,control_left,control_right")
        throw Error(ErrorCode::config, "control file: expected header step,time,control_left,control_right");
    std::vector<Control2> values;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cols = to_list(line);
        if (!cols || cols->size() != 4 || (*cols)[0] != static_cast<double>(values.size()))
            throw Error(ErrorCode::config, "control file: malformed row " + std::to_string(row));
        values.push_back({(*cols)[2], (*cols)[3]});
    }
    if (values.size() != grid.n_steps)
        throw Error(ErrorCode::grid_mismatch, "control file has " + std::to_string(values.size()) +
                                                  " steps, the scenario " + std::to_string(grid.n_steps));
    return ControlProcess(grid, std::move(values));
}

ControlProcess make_control(const ExperimentConfig& cfg, const Problem& problem, const std::filesystem::path& base_dir) {
    const auto& set = problem.scenario().control_set;
    if (cfg.control_source == "constant") return ControlProcess::constant(problem.grid(), cfg.control_value).tagged(set);
    std::filesystem::path p(cfg.control_file);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::config, "cannot read control file " + p.string());
    auto u = read_control_csv(in, problem.grid()).tagged(set);
    if (!u.is_admissible()) throw Error(ErrorCode::invalid_argument, "control file values leave the control set");
    return u;
}

}  // namespace smplab
