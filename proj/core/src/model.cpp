#include "smplab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace smplab {

// ---------------------------------------------------------------------------
// ScalarFunction
// ---------------------------------------------------------------------------

namespace {

struct KindInfo {
    ScalarKind kind;
    std::string_view id;
    std::size_t min_params;
    std::size_t max_params;
};

constexpr std::array<KindInfo, 5> kKinds{{
    {ScalarKind::linear, "linear", 1, 1},
    {ScalarKind::affine, "affine", 2, 2},
    {ScalarKind::tanh_saturated, "tanh-saturated", 1, 2},
    {ScalarKind::truncated_cubic, "truncated-cubic", 1, 2},
    {ScalarKind::quadratic, "quadratic", 1, 1},
}};

// max |d/dy sech²(y)| = 4/(3√3)
constexpr double kSech2SlopeMax = 4.0 / (3.0 * std::numbers::sqrt3);

}  // namespace

const char* to_string(ScalarKind kind) noexcept {
    for (const auto& k : kKinds)
        if (k.kind == kind) return k.id.data();
    return "unknown";
}

ScalarFunction ScalarFunction::make(std::string_view id, std::vector<double> params) {
    for (const auto& k : kKinds) {
        if (k.id != id) continue;
        if (params.size() < k.min_params || params.size() > k.max_params) {
            std::ostringstream msg;
            msg << "coefficient '" << id << "' takes " << k.min_params;
            if (k.max_params != k.min_params) msg << "-" << k.max_params;
            msg << " parameter(s), got " << params.size();
            throw Error(ErrorCode::config, msg.str());
        }
        for (double p : params)
            if (!std::isfinite(p)) throw Error(ErrorCode::config, "coefficient parameters must be finite");
        if (k.kind == ScalarKind::tanh_saturated || k.kind == ScalarKind::truncated_cubic) {
            if (params.size() == 1) params.push_back(1.0);
            if (!(params[1] > 0.0))
                throw Error(ErrorCode::config, std::string(id) + ": scale parameter must be positive");
        }
        return ScalarFunction(k.kind, std::move(params));
    }
    throw Error(ErrorCode::config, "unknown coefficient id '" + std::string(id) + "'");
}

std::string ScalarFunction::id() const { return to_string(kind_); }

double ScalarFunction::value(double y) const noexcept {
    const double a = params_[0];
    switch (kind_) {
        case ScalarKind::linear: return a * y;
        case ScalarKind::affine: return a * y + params_[1];
        case ScalarKind::tanh_saturated: {
            const double s = params_[1];
            return a * s * std::tanh(y / s);
        }
        case ScalarKind::truncated_cubic: {
            const double r = params_[1];
            if (std::abs(y) <= r) return a * y * y * y;
            const double sign = y > 0.0 ? 1.0 : -1.0;
            return sign * a * (r * r * r + 3.0 * r * r * (std::abs(y) - r));
        }
        case ScalarKind::quadratic: return a * y * y;
    }
    return 0.0;
}

double ScalarFunction::derivative(double y) const noexcept {
    const double a = params_[0];
    switch (kind_) {
        case ScalarKind::linear:
        case ScalarKind::affine: return a;
        case ScalarKind::tanh_saturated: {
            const double c = std::cosh(y / params_[1]);
            return a / (c * c);
        }
        case ScalarKind::truncated_cubic: {
            const double r = params_[1];
            const double m = std::min(std::abs(y), r);
            return 3.0 * a * m * m;
        }
        case ScalarKind::quadratic: return 2.0 * a * y;
    }
    return 0.0;
}

double ScalarFunction::lipschitz(double base_radius) const noexcept {
    const double a = std::abs(params_[0]);
    switch (kind_) {
        case ScalarKind::linear:
        case ScalarKind::affine:
        case ScalarKind::tanh_saturated: return a;
        case ScalarKind::truncated_cubic: return 3.0 * a * params_[1] * params_[1];
        case ScalarKind::quadratic: return 2.0 * a * base_radius;
    }
    return 0.0;
}

double ScalarFunction::derivative_lipschitz() const noexcept {
    const double a = std::abs(params_[0]);
    switch (kind_) {
        case ScalarKind::linear:
        case ScalarKind::affine: return 0.0;
        case ScalarKind::tanh_saturated: return a / params_[1] * kSech2SlopeMax;
        case ScalarKind::truncated_cubic: return 6.0 * a * params_[1];
        case ScalarKind::quadratic: return 2.0 * a;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// ControlSet
// ---------------------------------------------------------------------------

ControlSet ControlSet::finite(std::vector<Control2> values) {
    if (values.empty()) throw Error(ErrorCode::invalid_argument, "finite control set must be nonempty");
    for (const auto& v : values)
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]))
            throw Error(ErrorCode::invalid_argument, "control values must be finite");
    ControlSet s;
    s.kind_ = Kind::finite_set;
    s.values_ = std::move(values);
    s.lower_ = s.upper_ = s.values_.front();
    for (const auto& v : s.values_)
        for (int d = 0; d < 2; ++d) {
            s.lower_[d] = std::min(s.lower_[d], v[d]);
            s.upper_[d] = std::max(s.upper_[d], v[d]);
        }
    return s;
}

ControlSet ControlSet::box(Control2 lower, Control2 upper) {
    for (int d = 0; d < 2; ++d)
        if (!(lower[d] <= upper[d]) || !std::isfinite(lower[d]) || !std::isfinite(upper[d]))
            throw Error(ErrorCode::invalid_argument, "box control set bounds must be finite and ordered");
    ControlSet s;
    s.kind_ = Kind::box;
    s.lower_ = lower;
    s.upper_ = upper;
    return s;
}

ControlSet ControlSet::ternary() {
    std::vector<Control2> v;
    for (double a : {-1.0, 0.0, 1.0})
        for (double b : {-1.0, 0.0, 1.0}) v.push_back({a, b});
    return finite(std::move(v));
}

bool ControlSet::contains(const Control2& v, double tol) const noexcept {
    if (kind_ == Kind::box)
        return v[0] >= lower_[0] - tol && v[0] <= upper_[0] + tol && v[1] >= lower_[1] - tol &&
               v[1] <= upper_[1] + tol;
    return std::any_of(values_.begin(), values_.end(), [&](const Control2& w) {
        return std::abs(w[0] - v[0]) <= tol && std::abs(w[1] - v[1]) <= tol;
    });
}

std::vector<Control2> ControlSet::vertices() const {
    if (kind_ == Kind::finite_set) return values_;
    return {{lower_[0], lower_[1]}, {upper_[0], lower_[1]}, {lower_[0], upper_[1]}, {upper_[0], upper_[1]}};
}

std::vector<Control2> ControlSet::probe_points() const {
    if (kind_ == Kind::finite_set) return values_;
    auto pts = vertices();
    const double m0 = 0.5 * (lower_[0] + upper_[0]);
    const double m1 = 0.5 * (lower_[1] + upper_[1]);
    pts.push_back({m0, lower_[1]});
    pts.push_back({m0, upper_[1]});
    pts.push_back({lower_[0], m1});
    pts.push_back({upper_[0], m1});
    return pts;
}

Control2 ControlSet::project(const Control2& v) const {
    if (kind_ != Kind::box) throw Error(ErrorCode::not_applicable, "projection requires a box control set");
    return {std::clamp(v[0], lower_[0], upper_[0]), std::clamp(v[1], lower_[1], upper_[1])};
}

// ---------------------------------------------------------------------------
// CostSpec
// ---------------------------------------------------------------------------

namespace {

double at(const ModalVector& v, std::size_t k) { return k < v.size() ? v[k] : 0.0; }

double tracking_value(double q, const ModalVector& z, std::span<const double> x) {
    if (q == 0.0) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - at(z, k);
        s += d * d;
    }
    return q * s;
}

}  // namespace

double CostSpec::running_value(std::span<const double> x, const Control2& u) const {
    return tracking_value(running.tracking_weight, running.tracking_target, x) + dot(running.linear.span(), x) +
           running_control_part(u);
}

void CostSpec::running_gradient_x(std::span<const double> x, std::span<double> out) const {
    const double q2 = 2.0 * running.tracking_weight;
    for (std::size_t k = 0; k < x.size(); ++k)
        out[k] = q2 * (x[k] - at(running.tracking_target, k)) + at(running.linear, k);
}

Control2 CostSpec::running_gradient_u(const Control2& u) const noexcept {
    const double r2 = 2.0 * running.control_weight;
    return {r2 * u[0] + running.control_linear[0], r2 * u[1] + running.control_linear[1]};
}

double CostSpec::running_control_part(const Control2& u) const noexcept {
    return running.control_weight * (u[0] * u[0] + u[1] * u[1]) + running.control_linear[0] * u[0] +
           running.control_linear[1] * u[1];
}

double CostSpec::terminal_value(std::span<const double> x) const {
    return tracking_value(terminal.tracking_weight, terminal.tracking_target, x) + dot(terminal.linear.span(), x);
}

void CostSpec::terminal_gradient_x(std::span<const double> x, std::span<double> out) const {
    const double q2 = 2.0 * terminal.tracking_weight;
    for (std::size_t k = 0; k < x.size(); ++k)
        out[k] = q2 * (x[k] - at(terminal.tracking_target, k)) + at(terminal.linear, k);
}

// ---------------------------------------------------------------------------
// Problem
// ---------------------------------------------------------------------------

Problem::Problem(Scenario scenario, CostSpec cost) : scenario_(std::move(scenario)), cost_(std::move(cost)) {
    const auto& s = scenario_;
    if (!(s.horizon > 0.0) || !std::isfinite(s.horizon))
        throw Error(ErrorCode::invalid_argument, "scenario: horizon must be positive");
    if (s.n_steps < 2) throw Error(ErrorCode::invalid_argument, "scenario: n_steps must be >= 2");
    if (s.n_paths < 1) throw Error(ErrorCode::invalid_argument, "scenario: n_paths must be >= 1");
    if (!(s.boundary_noise.left >= 0.0) || !(s.boundary_noise.right >= 0.0))
        throw Error(ErrorCode::invalid_argument, "scenario: noise intensities must be >= 0");
    const std::size_t n = s.basis.n_modes();
    if (s.initial_state.size() > n)
        throw Error(ErrorCode::invalid_argument, "scenario: initial state has more modes than the basis");
    scenario_.initial_state = s.initial_state.resized(n);
    for (auto* v : {&cost_.running.tracking_target, &cost_.running.linear, &cost_.terminal.tracking_target,
                    &cost_.terminal.linear}) {
        if (v->size() > n) throw Error(ErrorCode::invalid_argument, "cost: vector has more modes than the basis");
        *v = v->resized(n);
    }
    left_ = neumann_map(s.basis, Side::left);
    right_ = neumann_map(s.basis, Side::right);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

const char* to_string(CheckStatus s) noexcept {
    switch (s) {
        case CheckStatus::structural_pass: return "structural-pass";
        case CheckStatus::sampled_pass: return "sampled-pass";
        case CheckStatus::fail: return "fail";
        case CheckStatus::not_applicable: return "not-applicable";
    }
    return "unknown";
}

bool ValidationReport::passed() const noexcept {
    return std::none_of(checks.begin(), checks.end(),
                        [](const HypothesisCheck& c) { return c.status == CheckStatus::fail; });
}

const HypothesisCheck& ValidationReport::find(std::string_view id) const {
    for (const auto& c : checks)
        if (c.id == id) return c;
    throw Error(ErrorCode::invalid_argument, "no hypothesis check named " + std::string(id));
}

std::string ValidationReport::to_text() const {
    std::ostringstream out;
    for (const auto& c : checks) {
        out << "(" << c.id << ") " << to_string(c.status);
        if (!c.detail.empty()) out << ": " << c.detail;
        out << '\n';
    }
    out << "overall: " << (passed() ? "pass" : "fail") << '\n';
    return out.str();
}

namespace {

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(6);
    s << x;
    return s.str();
}

struct Witness {
    double worst_ratio = 0.0;
    double a = 0.0;
    double b = 0.0;
    double range = 0.0;
};

// Empirical Lipschitz ratio of a scalar map over escalating ranges. Returns
// the first witness exceeding `declared`, or the overall worst ratio.
template <typename Fn>
std::pair<bool, Witness> scalar_audit(Fn&& fn, double declared, const AuditOptions& opt, std::size_t escalations,
                                      std::mt19937_64& rng) {
    Witness w;
    double range = opt.radius;
    const double slack = declared * (1.0 + 1e-9) + 1e-12;
    for (std::size_t e = 0; e < escalations; ++e, range *= 4.0) {
        std::uniform_real_distribution<double> dist(-range, range);
        for (std::size_t i = 0; i < opt.samples; ++i) {
            const double a = dist(rng);
            const double b = dist(rng);
            if (a == b) continue;
            const double ratio = std::abs(fn(a) - fn(b)) / std::abs(a - b);
            if (ratio > w.worst_ratio) w = {ratio, a, b, range};
        }
        if (w.worst_ratio > slack) return {false, w};
    }
    return {true, w};
}

std::string witness_text(const Witness& w, double declared) {
    return "witness pair (" + fmt(w.a) + ", " + fmt(w.b) + ") on [-" + fmt(w.range) + ", " + fmt(w.range) +
           "] has ratio " + fmt(w.worst_ratio) + " > declared " + fmt(declared);
}

// Random H-ball sample of dimension n with norm ≤ radius.
ModalVector ball_sample(std::size_t n, double radius, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    ModalVector v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = nd(rng);
    const double r = radius * std::pow(ud(rng), 1.0 / static_cast<double>(n));
    const double norm = v.norm();
    if (norm > 0.0) v *= r / norm;
    return v;
}

template <typename Fn>
double vector_audit(Fn&& ratio_of, std::size_t n, double radius, std::size_t samples, std::mt19937_64& rng) {
    double worst = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const ModalVector a = ball_sample(n, radius, rng);
        const ModalVector b = ball_sample(n, radius, rng);
        worst = std::max(worst, ratio_of(a, b));
    }
    return worst;
}

}  // namespace

ValidationReport validate_scenario(const Scenario& s, const CostSpec& c, const AuditOptions& opt) {
    ValidationReport report;
    std::mt19937_64 rng(s.seed ^ 0x9e3779b97f4a7c15ULL);
    auto add = [&](std::string id, CheckStatus st, std::string detail) {
        report.checks.push_back({std::move(id), st, std::move(detail)});
    };

    add("A.1", CheckStatus::structural_pass,
        "Neumann Laplacian on (0,1): self-adjoint, analytic contraction semigroup (M = 1, omega = 0), lambda = " +
            fmt(s.basis.lambda()));

    // (A.2): F and G globally Lipschitz
    {
        std::string detail;
        bool ok = true;
        const double lf = s.f.lipschitz(opt.radius);
        auto [pf, wf] = scalar_audit([&](double y) { return s.f.value(y); }, lf, opt, opt.escalations, rng);
        if (!pf) {
            ok = false;
            detail = "f: " + witness_text(wf, lf);
        } else {
            detail = "f: max ratio " + fmt(wf.worst_ratio) + " <= L = " + fmt(lf);
        }
        if (s.g) {
            const double lg = s.g->lipschitz(opt.radius);
            auto [pg, wg] = scalar_audit([&](double y) { return s.g->value(y); }, lg, opt, opt.escalations, rng);
            if (!pg) {
                ok = false;
                detail += "; g: " + witness_text(wg, lg);
            } else {
                detail += "; g: max ratio " + fmt(wg.worst_ratio) + " <= L = " + fmt(lg) + " (gamma = 1/4 in 1D)";
            }
        } else {
            detail += "; g off";
        }
        add("A.2", ok ? CheckStatus::sampled_pass : CheckStatus::fail, detail);
    }

    // (A.3): F_x and G_x Lipschitz
    {
        std::string detail;
        bool ok = true;
        const double lf = s.f.derivative_lipschitz();
        auto [pf, wf] = scalar_audit([&](double y) { return s.f.derivative(y); }, lf, opt, opt.escalations, rng);
        if (!pf) {
            ok = false;
            detail = "f': " + witness_text(wf, lf);
        } else {
            detail = "f': max ratio " + fmt(wf.worst_ratio) + " <= " + fmt(lf);
        }
        if (s.g) {
            const double lg = s.g->derivative_lipschitz();
            auto [pg, wg] =
                scalar_audit([&](double y) { return s.g->derivative(y); }, lg, opt, opt.escalations, rng);
            if (!pg) {
                ok = false;
                detail += "; g': " + witness_text(wg, lg);
            } else {
                detail += "; g': max ratio " + fmt(wg.worst_ratio) + " <= " + fmt(lg);
            }
        }
        add("A.3", ok ? CheckStatus::sampled_pass : CheckStatus::fail, detail);
    }

    add("A.4", CheckStatus::structural_pass,
        "Neumann maps d^1, d^2 lie in H^{2 alpha}(0,1) = D((lambda-A)^alpha) for alpha < 3/4; |b_k| <= sqrt(2)");

    add("A.5", CheckStatus::structural_pass,
        "diagonal Q with intensities (" + fmt(s.boundary_noise.left) + ", " + fmt(s.boundary_noise.right) +
            "); |e^{tA}(lambda-A)D_1 sqrt(Q)| ~ t^{-1/4}, beta = 1/4 < 1/2");

    const std::size_t n = s.basis.n_modes();
    auto padded = [&](const ModalVector& v) { return v.resized(n); };
    CostSpec cp = c;
    cp.running.tracking_target = padded(c.running.tracking_target);
    cp.running.linear = padded(c.running.linear);
    cp.terminal.tracking_target = padded(c.terminal.tracking_target);
    cp.terminal.linear = padded(c.terminal.linear);
    const std::size_t vec_samples = std::max<std::size_t>(1, opt.samples / 10);
    const double slack = 1.0 + 1e-9;

    // (B.1): l and l_x Lipschitz in x on the H-ball, l Lipschitz in u on the
    // control set's bounding box.
    {
        const auto& r = cp.running;
        const double lx = 2.0 * r.tracking_weight * (opt.radius + r.tracking_target.norm()) + r.linear.norm();
        const double lxx = 2.0 * std::abs(r.tracking_weight);
        const double worst_l = vector_audit(
            [&](const ModalVector& a, const ModalVector& b) {
                const double d = (a - b).norm();
                return d > 0.0 ? std::abs(cp.running_value(a.span(), {0, 0}) - cp.running_value(b.span(), {0, 0})) / d
                               : 0.0;
            },
            n, opt.radius, vec_samples, rng);
        const double worst_lx = vector_audit(
            [&](const ModalVector& a, const ModalVector& b) {
                ModalVector ga(n), gb(n);
                cp.running_gradient_x(a.span(), ga.span());
                cp.running_gradient_x(b.span(), gb.span());
                const double d = (a - b).norm();
                return d > 0.0 ? (ga - gb).norm() / d : 0.0;
            },
            n, opt.radius, vec_samples, rng);
        const Control2 lo = s.control_set.lower();
        const Control2 hi = s.control_set.upper();
        const double umax = std::hypot(std::max(std::abs(lo[0]), std::abs(hi[0])),
                                       std::max(std::abs(lo[1]), std::abs(hi[1])));
        const double lu = 2.0 * std::abs(r.control_weight) * umax + std::hypot(r.control_linear[0], r.control_linear[1]);
        double worst_u = 0.0;
        std::uniform_real_distribution<double> u0(lo[0], hi[0] > lo[0] ? hi[0] : lo[0] + 1e-300);
        std::uniform_real_distribution<double> u1(lo[1], hi[1] > lo[1] ? hi[1] : lo[1] + 1e-300);
        for (std::size_t i = 0; i < vec_samples; ++i) {
            const Control2 a{u0(rng), u1(rng)};
            const Control2 b{u0(rng), u1(rng)};
            const double d = std::hypot(a[0] - b[0], a[1] - b[1]);
            if (d > 0.0)
                worst_u = std::max(worst_u, std::abs(cp.running_control_part(a) - cp.running_control_part(b)) / d);
        }
        const bool ok = worst_l <= lx * slack + 1e-12 && worst_lx <= lxx * slack + 1e-12 && worst_u <= lu * slack + 1e-12;
        add("B.1", ok ? CheckStatus::sampled_pass : CheckStatus::fail,
            "on the H-ball of radius " + fmt(opt.radius) + ": |dl|/|dx| max " + fmt(worst_l) + " (L " + fmt(lx) +
                "), |dl_x|/|dx| max " + fmt(worst_lx) + " (L " + fmt(lxx) + "), |dl|/|du| max " + fmt(worst_u) +
                " (L " + fmt(lu) + ")");
    }

    // (B.2): h and h_x Lipschitz on the ball
    {
        const auto& t = cp.terminal;
        const double lh = 2.0 * t.tracking_weight * (opt.radius + t.tracking_target.norm()) + t.linear.norm();
        const double lhx = 2.0 * std::abs(t.tracking_weight);
        const double worst_h = vector_audit(
            [&](const ModalVector& a, const ModalVector& b) {
                const double d = (a - b).norm();
                return d > 0.0 ? std::abs(cp.terminal_value(a.span()) - cp.terminal_value(b.span())) / d : 0.0;
            },
            n, opt.radius, vec_samples, rng);
        const double worst_hx = vector_audit(
            [&](const ModalVector& a, const ModalVector& b) {
                ModalVector ga(n), gb(n);
                cp.terminal_gradient_x(a.span(), ga.span());
                cp.terminal_gradient_x(b.span(), gb.span());
                const double d = (a - b).norm();
                return d > 0.0 ? (ga - gb).norm() / d : 0.0;
            },
            n, opt.radius, vec_samples, rng);
        const bool ok = worst_h <= lh * slack + 1e-12 && worst_hx <= lhx * slack + 1e-12;
        add("B.2", ok ? CheckStatus::sampled_pass : CheckStatus::fail,
            "on the H-ball of radius " + fmt(opt.radius) + ": |dh|/|dx| max " + fmt(worst_h) + " (L " + fmt(lh) +
                "), |dh_x|/|dx| max " + fmt(worst_hx) + " (L " + fmt(lhx) + ")");
    }

    if (!opt.convex_case) {
        for (const char* id : {"C", "C.1", "C.2", "C.3"}) add(id, CheckStatus::not_applicable, "convex case not requested");
        return report;
    }

    if (s.control_set.is_convex())
        add("C", CheckStatus::structural_pass, "control set is convex");
    else
        add("C", CheckStatus::fail, "control set not convex");

    // (C.1): F_x and G_x bounded, sup |f'| over escalating ranges
    {
        auto sup_abs = [&](const ScalarFunction& fn) {
            double worst = 0.0;
            double range = opt.radius;
            double last = 0.0;
            bool growing = false;
            for (std::size_t e = 0; e < opt.escalations; ++e, range *= 4.0) {
                std::uniform_real_distribution<double> dist(-range, range);
                for (std::size_t i = 0; i < opt.samples / 10; ++i) worst = std::max(worst, std::abs(fn.derivative(dist(rng))));
                worst = std::max(worst, std::abs(fn.derivative(range)));
                if (e > 0 && worst > 1.5 * last + 1e-12) growing = true;
                last = worst;
            }
            return std::pair{worst, growing};
        };
        auto [fw, fg] = sup_abs(s.f);
        bool ok = !fg && s.f.globally_lipschitz();
        std::string detail = "sup|f'| ~ " + fmt(fw) + (fg ? " (grows with the sampling range)" : "");
        if (s.g) {
            auto [gw, gg] = sup_abs(*s.g);
            ok = ok && !gg && s.g->globally_lipschitz();
            detail += "; sup|g'| ~ " + fmt(gw) + (gg ? " (grows with the sampling range)" : "");
        }
        add("C.1", ok ? CheckStatus::sampled_pass : CheckStatus::fail, detail);
    }

    // (C.2): l_u exists (registry) and linear growth of l_x, l_u
    {
        const auto& r = cp.running;
        const double k = 2.0 * std::abs(r.tracking_weight) * (1.0 + r.tracking_target.norm()) + r.linear.norm() +
                         2.0 * std::abs(r.control_weight) + std::hypot(r.control_linear[0], r.control_linear[1]);
        double worst = 0.0;
        std::normal_distribution<double> un;
        for (std::size_t i = 0; i < vec_samples; ++i) {
            const ModalVector x = ball_sample(n, opt.radius, rng);
            const Control2 u{opt.radius * un(rng), opt.radius * un(rng)};
            ModalVector gx(n);
            cp.running_gradient_x(x.span(), gx.span());
            const Control2 gu = cp.running_gradient_u(u);
            const double lhs = gx.norm() + std::hypot(gu[0], gu[1]);
            worst = std::max(worst, lhs / (1.0 + x.norm() + std::hypot(u[0], u[1])));
        }
        add("C.2", worst <= k * slack + 1e-12 ? CheckStatus::sampled_pass : CheckStatus::fail,
            "l_u registered; (|l_x|+|l_u|)/(1+|x|+|u|) max " + fmt(worst) + " <= K = " + fmt(k));
    }

    // (C.3): h_x affine, linear growth
    add("C.3", CheckStatus::structural_pass, "h_x is affine in x (linear growth)");

    return report;
}

void require_convex_case(const Problem& problem) {
    if (!problem.scenario().control_set.is_convex())
        throw Error(ErrorCode::hypothesis_failed, "convex-case machinery requires a convex control set (C)");
}

}  // namespace smplab
