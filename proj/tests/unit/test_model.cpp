#include <cmath>
#include <numbers>

#include "doctest.h"
#include "smplab/cost.hpp"
#include "smplab/model.hpp"
#include "support.hpp"

using namespace smplab;
using doctest::Approx;

TEST_CASE("registry: values, derivatives and declared constants") {
    const auto t = ScalarFunction::make("tanh-saturated", {2.0, 0.5});
    CHECK(t.value(0.3) == Approx(2.0 * 0.5 * std::tanh(0.6)));
    const double eps = 1e-6;
    for (double y : {-3.0, -0.2, 0.0, 0.7, 2.5}) {
        for (const auto& f : {t, ScalarFunction::make("truncated-cubic", {1.5, 0.8}),
                              ScalarFunction::make("affine", {-0.5, 0.25}), ScalarFunction::make("quadratic", {1.0})}) {
            const double fd = (f.value(y + eps) - f.value(y - eps)) / (2 * eps);
            CHECK(f.derivative(y) == Approx(fd).epsilon(1e-6).scale(1.0));
        }
    }
    CHECK(t.lipschitz(1.0) == 2.0);
    CHECK(t.derivative_lipschitz() == Approx(2.0 / 0.5 * 4.0 / (3.0 * std::sqrt(3.0))));
    const auto c = ScalarFunction::make("truncated-cubic", {1.0});
    CHECK(c.params().size() == 2);
    CHECK(c.value(2.0) == Approx(1.0 + 3.0 * 1.0));
    CHECK(ScalarFunction::linear(0.3).is_affine());
    CHECK(ScalarFunction::make("affine", {1.0, 2.0}).intercept() == 2.0);
    CHECK_FALSE(ScalarFunction::make("quadratic", {1.0}).globally_lipschitz());
}

TEST_CASE("registry: malformed ids and parameters") {
    CHECK_THROWS_AS(ScalarFunction::make("cubic", {1.0}), Error);
    CHECK_THROWS_AS(ScalarFunction::make("linear", {}), Error);
    CHECK_THROWS_AS(ScalarFunction::make("affine", {1.0}), Error);
    CHECK_THROWS_AS(ScalarFunction::make("tanh-saturated", {1.0, -1.0}), Error);
    try {
        (void)ScalarFunction::make("bogus", {});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
    }
}

TEST_CASE("control sets") {
    const auto tern = ControlSet::ternary();
    CHECK(tern.values().size() == 9);
    CHECK_FALSE(tern.is_convex());
    CHECK(tern.contains({0.0, -1.0}));
    CHECK_FALSE(tern.contains({0.5, 0.0}));
    CHECK(ControlSet::finite({{0.2, 0.3}}).is_convex());

    const auto box = ControlSet::box({-1.0, 0.0}, {1.0, 2.0});
    CHECK(box.is_convex());
    CHECK(box.probe_points().size() == 8);
    const auto p = box.project({3.0, -1.0});
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 0.0);
    CHECK_THROWS_AS(ControlSet::box({1.0, 0.0}, {0.0, 1.0}), Error);
    CHECK_THROWS_AS(ControlSet::finite({}), Error);
    CHECK_THROWS_AS((void)tern.project({0.1, 0.1}), Error);
}

TEST_CASE("cost gradients") {
    CostSpec c;
    c.running.tracking_weight = 1.0;
    c.running.control_weight = 1.0;
    c.terminal.linear = ModalVector(std::vector<double>{0.5, -1.0, 0.0});
    const std::vector<double> x{1.0, 2.0, -3.0};
    std::vector<double> g(3);
    c.running_gradient_x(x, g);
    // l = |x|² -> l_x = 2x, with zero-length target
    for (std::size_t k = 0; k < 3; ++k) CHECK(g[k] == 2.0 * x[k]);
    const auto gu = c.running_gradient_u({0.3, -0.4});
    CHECK(gu[0] == Approx(0.6));
    CHECK(gu[1] == Approx(-0.8));
    c.terminal_gradient_x(x, g);
    CHECK(g[0] == 0.5);
    CHECK(g[1] == -1.0);
    CHECK(c.terminal_value(x) == Approx(0.5 - 2.0));
    CHECK(c.running_value(x, {0.0, 0.0}) == Approx(14.0));
}

TEST_CASE("problem construction checks invariants") {
    auto s = test::quiet_scenario(8, 16);
    s.initial_state = ModalVector(std::vector<double>{1.0, 2.0});
    CostSpec c;
    c.running.linear = ModalVector(std::vector<double>{1.0});
    const Problem p(s, c);
    CHECK(p.scenario().initial_state.size() == 8);
    CHECK(p.cost().running.linear.size() == 8);
    CHECK(p.grid().step() == Approx(1.0 / 16));

    auto bad = s;
    bad.n_steps = 1;
    CHECK_THROWS_AS(Problem(bad, c), Error);
    bad = s;
    bad.horizon = 0.0;
    CHECK_THROWS_AS(Problem(bad, c), Error);
    bad = s;
    bad.initial_state = ModalVector(9);
    CHECK_THROWS_AS(Problem(bad, c), Error);
}

TEST_CASE("validation: linear scenario passes every applicable check") {
    auto s = test::quiet_scenario(8, 16);
    s.f = ScalarFunction::linear(-0.5);
    CostSpec c;
    c.running.tracking_weight = 1.0;
    c.running.control_weight = 0.1;
    c.terminal.tracking_weight = 1.0;
    AuditOptions opt;
    opt.samples = 20000;
    opt.convex_case = true;
    const auto report = validate_scenario(s, c, opt);
    CHECK(report.passed());
    CHECK(report.find("A.1").status == CheckStatus::structural_pass);
    CHECK(report.find("A.2").status == CheckStatus::sampled_pass);
    CHECK(report.find("B.1").status == CheckStatus::sampled_pass);
    CHECK(report.find("C").status == CheckStatus::structural_pass);
    CHECK(report.to_text().find("overall: pass") != std::string::npos);
}

TEST_CASE("validation: quadratic reaction fails (A.2) with a witness") {
    auto s = test::quiet_scenario(8, 16);
    s.f = ScalarFunction::make("quadratic", {1.0});
    AuditOptions opt;
    opt.samples = 20000;
    const auto report = validate_scenario(s, CostSpec{}, opt);
    CHECK_FALSE(report.passed());
    const auto& a2 = report.find("A.2");
    CHECK(a2.status == CheckStatus::fail);
    CHECK(a2.detail.find("witness") != std::string::npos);
    CHECK(report.find("C.1").status == CheckStatus::not_applicable);
}

TEST_CASE("validation: finite control set in the convex case") {
    auto s = test::quiet_scenario(8, 16);
    s.control_set = ControlSet::ternary();
    AuditOptions opt;
    opt.samples = 5000;
    opt.convex_case = true;
    const auto report = validate_scenario(s, CostSpec{}, opt);
    CHECK(report.find("C").status == CheckStatus::fail);
    CHECK(report.find("C").detail == "control set not convex");
    CHECK_THROWS_AS(require_convex_case(Problem(s, CostSpec{})), Error);
}

TEST_CASE("validation is deterministic for a fixed seed") {
    auto s = test::quiet_scenario(8, 16);
    s.f = ScalarFunction::tanh_saturated(1.0);
    AuditOptions opt;
    opt.samples = 5000;
    CHECK(validate_scenario(s, CostSpec{}, opt).to_text() == validate_scenario(s, CostSpec{}, opt).to_text());
}
