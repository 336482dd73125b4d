#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "smplab/adjoint.hpp"
#include "support.hpp"

using namespace smplab;
using doctest::Approx;

namespace {

ControlProcess zero_control(const Problem& p) { return ControlProcess::constant(p.grid(), {0.0, 0.0}); }

Scenario noisy_linear(std::size_t n_modes, std::size_t n_steps, std::size_t n_paths) {
    auto s = test::quiet_scenario(n_modes, n_steps);
    s.f = ScalarFunction::linear(-0.5);
    s.boundary_noise = {1.0, 0.5};
    s.initial_state = ModalVector(std::vector<double>{0.2, 0.4, -0.3});
    s.n_paths = n_paths;
    s.seed = 17;
    return s;
}

CostSpec tracking_cost() {
    CostSpec c;
    c.running.tracking_weight = 1.0;
    c.running.tracking_target = ModalVector(std::vector<double>{0.5, -0.25});
    c.running.control_weight = 0.1;
    c.terminal.tracking_weight = 0.5;
    c.terminal.linear = ModalVector(std::vector<double>{0.0, 0.3});
    return c;
}

}  // namespace

TEST_CASE("linear terminal cost gives a deterministic adjoint with no martingale part") {
    auto s = noisy_linear(8, 64, 200);
    s.f = ScalarFunction::linear(0.0);
    CostSpec c;
    c.terminal.linear = ModalVector(std::vector<double>{1.0, 0.5, 0.0, -0.25});
    const Problem p(s, c);
    const auto ens = simulate_ensemble(p, zero_control(p));
    const auto adj = solve_adjoint(p, ens);
    for (std::size_t i = 0; i <= 64; i += 8) {
        const auto expect = semigroup_apply(p.basis(), 1.0 - p.grid().time(i), p.cost().terminal.linear);
        for (std::size_t k = 0; k < 8; ++k) {
            double mean = 0.0;
            double var = 0.0;
            for (const auto& ap : adj.paths) mean += ap.y(i)[k];
            mean /= 200.0;
            for (const auto& ap : adj.paths) var += std::pow(ap.y(i)[k] - mean, 2);
            var /= 199.0;
            CHECK(var <= 1e-6);
            CHECK(mean == Approx(-expect[k]).epsilon(1e-12).scale(1.0));
        }
    }
    double zmax = 0.0;
    for (const auto& ap : adj.paths)
        for (std::size_t i = 0; i < 64; ++i)
            for (double z : ap.z(i)) zmax = std::max(zmax, std::abs(z));
    CHECK(zmax <= 1e-12);
}

TEST_CASE("linear running cost: discrete and continuous closed forms") {
    // |μ_2|h/2 < 1e-3 so the step-h left-endpoint sum is within 1e-3 of the
    // integral for the modes checked
    const std::size_t steps = 32768;
    auto s = test::quiet_scenario(8, steps);
    CostSpec c;
    c.running.linear = ModalVector(std::vector<double>{1.0, 0.5, 0.2});
    const Problem p(s, c);
    const auto ens = simulate_ensemble(p, zero_control(p));
    const auto adj = solve_adjoint(p, ens);
    const double h = p.grid().step();
    for (std::size_t i = 0; i < steps; i += 2048) {
        const double tau = 1.0 - p.grid().time(i);
        for (std::size_t k = 0; k < 3; ++k) {
            const double mu = p.basis().eigenvalue(k);
            const double ck = c.running.linear[k];
            const double y = adj.paths[0].y(i)[k];
            // h·Σ_{j<n−i} e^{μjh}
            const double discrete = k == 0 ? -ck * tau : -ck * h * std::expm1(mu * tau) / std::expm1(mu * h);
            const double continuous = k == 0 ? -ck * tau : -ck * std::expm1(mu * tau) / mu;
            CHECK(y == Approx(discrete).epsilon(1e-11).scale(1e-12));
            CHECK(std::abs(y - continuous) <= 1e-3 * std::abs(continuous) + 1e-14);
        }
    }
}

TEST_CASE("terminal condition holds exactly on every path") {
    const auto s = noisy_linear(8, 32, 100);
    const Problem p(s, tracking_cost());
    const auto ens = simulate_ensemble(p, zero_control(p));
    const auto adj = solve_adjoint(p, ens);
    for (std::size_t q = 0; q < 100; ++q) {
        std::vector<double> hx(8);
        p.cost().terminal_gradient_x(ens.paths[q].terminal(), hx);
        for (std::size_t k = 0; k < 8; ++k) CHECK(adj.paths[q].y(32)[k] == -hx[k]);
    }
}

TEST_CASE("regression adjoint agrees with the exact-linear oracle and improves with paths") {
    std::vector<double> errs;
    for (std::size_t paths : {500u, 2000u}) {
        auto s = noisy_linear(8, 32, paths);
        s.boundary_noise = {0.2, 0.1};
        const Problem p(s, tracking_cost());
        const auto ens = simulate_ensemble(p, ControlProcess::constant(p.grid(), {0.2, -0.4}));
        RegressionBasis rb;
        rb.n_reg = 8;
        const auto approx = solve_adjoint(p, ens, rb);
        const auto exact = solve_adjoint_exact_linear(p, ens);
        errs.push_back(adjoint_relative_error(approx, exact));
    }
    MESSAGE("relative errors " << errs[0] << " " << errs[1]);
    CHECK(errs[1] <= 1e-2);
    CHECK(errs[1] < errs[0]);
}

TEST_CASE("exact-linear oracle: degenerate case and measurability at time 0") {
    auto s = noisy_linear(8, 64, 50);
    s.f = ScalarFunction::linear(0.0);
    CostSpec c;
    c.terminal.linear = ModalVector(std::vector<double>{0.3, 1.0});
    const Problem p(s, c);
    const auto ens = simulate_ensemble(p, zero_control(p));
    const auto adj = solve_adjoint_exact_linear(p, ens);
    CHECK(adj.exact);
    const auto expect = semigroup_apply(p.basis(), 0.5, p.cost().terminal.linear);
    for (std::size_t k = 0; k < 8; ++k) CHECK(adj.paths[7].y(32)[k] == Approx(-expect[k]).epsilon(1e-13).scale(1.0));

    const Problem q(noisy_linear(8, 64, 50), tracking_cost());
    const auto e2 = simulate_ensemble(q, zero_control(q));
    const auto a2 = solve_adjoint_exact_linear(q, e2);
    for (std::size_t j = 1; j < 50; ++j)
        for (std::size_t k = 0; k < 8; ++k) CHECK(a2.paths[j].y(0)[k] == a2.paths[0].y(0)[k]);

    auto nl = noisy_linear(8, 16, 20);
    nl.f = ScalarFunction::tanh_saturated(1.0);
    const Problem pn(nl, tracking_cost());
    CHECK_THROWS_AS((void)solve_adjoint_exact_linear(pn, simulate_ensemble(pn, zero_control(pn))), Error);
}

TEST_CASE("boundary pairing") {
    const auto basis = build_basis(8, 1.0, 16);
    const auto l = neumann_map(basis, Side::left);
    const auto r = neumann_map(basis, Side::right);
    const auto e0 = ModalVector::unit(8, 0);
    auto b = boundary_pairing(e0.span(), l, r);
    CHECK(b[0] == Approx(-1.0));
    CHECK(b[1] == Approx(1.0));
    b = boundary_pairing(ModalVector(8).span(), l, r);
    CHECK(b[0] == 0.0);
    CHECK(b[1] == 0.0);
    ModalVector y1(std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
    ModalVector y2(std::vector<double>{1.0, -1.0, 2.0, 0.0, 0.0, 3.0, 0.0, -2.0});
    const auto lhs = boundary_pairing((2.0 * y1 + (-3.0) * y2).span(), l, r);
    const auto b1 = boundary_pairing(y1.span(), l, r);
    const auto b2 = boundary_pairing(y2.span(), l, r);
    CHECK(std::abs(lhs[0] - (2.0 * b1[0] - 3.0 * b2[0])) <= 1e-14 * 10);
    CHECK(std::abs(lhs[1] - (2.0 * b1[1] - 3.0 * b2[1])) <= 1e-14 * 10);
}

TEST_CASE("martingale increments are unbiased step by step") {
    const auto s = noisy_linear(8, 32, 1000);
    const Problem p(s, tracking_cost());
    const auto ens = simulate_ensemble(p, zero_control(p));
    const auto adj = solve_adjoint(p, ens);
    for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t k = 0; k < 8; ++k) {
            double mean = 0.0;
            double ss = 0.0;
            for (const auto& ap : adj.paths) mean += ap.z(i)[k];
            mean /= 1000.0;
            for (const auto& ap : adj.paths) ss += std::pow(ap.z(i)[k] - mean, 2);
            const double se = std::sqrt(ss / 999.0 / 1000.0);
            CHECK(std::abs(mean) <= 3.0 * se + 1e-15);
        }
}

TEST_CASE("regression guards") {
    const auto s = noisy_linear(8, 16, 40);
    const Problem p(s, tracking_cost());
    const auto ens = simulate_ensemble(p, zero_control(p));
    CHECK_THROWS_AS((void)solve_adjoint(p, ens), Error);
    RegressionBasis strict;
    strict.n_reg = 2;
    strict.strict = true;
    const Problem q(noisy_linear(8, 16, 400), tracking_cost());
    // at the first step only two noise directions have entered the state, so a
    // wide basis is collinear there
    RegressionBasis wide;
    wide.n_reg = 8;
    wide.strict = true;
    try {
        (void)solve_adjoint(q, simulate_ensemble(q, zero_control(q)), wide);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::rank_deficient);
        CHECK(std::string(e.what()).find("condition number") != std::string::npos);
    }
    CHECK_NOTHROW((void)solve_adjoint(q, simulate_ensemble(q, zero_control(q)), strict));
}

TEST_CASE("multiplicative noise: adjoint carries G_x^T Z") {
    auto s = noisy_linear(8, 32, 400);
    s.g = ScalarFunction::make("affine", {0.5, 0.3});
    const Problem p(s, tracking_cost());
    const auto ens = simulate_ensemble(p, zero_control(p));
    const auto adj = solve_adjoint(p, ens);
    CHECK(adj.paths[0].has_gz());
    double gmax = 0.0;
    for (const auto& ap : adj.paths)
        for (std::size_t i = 0; i < 32; ++i)
            for (double v : ap.gz(i)) gmax = std::max(gmax, std::abs(v));
    CHECK(gmax > 0.0);
    CHECK(std::isfinite(gmax));
}

TEST_CASE("regularity profile: no terminal layer, smooth and rough terminal data") {
    auto make = [](const CostSpec& c) {
        auto s = test::quiet_scenario(64, 2048);
        s.f = ScalarFunction::linear(-0.5);
        s.initial_state = ModalVector(std::vector<double>{0.5, 0.2});
        const Problem p(s, c);
        const auto ens = simulate_ensemble(p, ControlProcess::constant(p.grid(), {0.0, 0.0}));
        return regularity_profile(solve_adjoint(p, ens));
    };
    CostSpec none;
    none.running.linear = ModalVector(std::vector<double>{1.0, 0.5, 0.25});
    const auto flat = make(none);
    CHECK(std::abs(flat.slope) <= 0.05);
    CHECK(flat.raw_slope > 0.5);

    CostSpec smooth;
    smooth.terminal.linear = ModalVector::unit(64, 0);
    const auto bounded = make(smooth);
    CHECK(std::abs(bounded.slope) <= 0.05);

    CostSpec rough;
    std::vector<double> tail(64, 0.0);
    for (std::size_t k = 1; k < 64; ++k) tail[k] = 1.0 / static_cast<double>(k);
    rough.terminal.linear = ModalVector(tail);
    const auto blow = make(rough);
    MESSAGE("rough terminal slope " << blow.slope);
    CHECK(blow.slope >= -0.35);
    CHECK(blow.slope <= 0.0);
    CHECK(blow.slope < -0.1);
    CHECK(blow.fit_nodes >= 8);

    const Problem small(test::quiet_scenario(8, 64), CostSpec{});
    const auto ens = simulate_ensemble(small, zero_control(small));
    CHECK_THROWS_AS((void)regularity_profile(solve_adjoint(small, ens)), Error);
}

TEST_CASE("adjoint dump") {
    auto s = test::quiet_scenario(2, 2);
    CostSpec c;
    c.terminal.linear = ModalVector(std::vector<double>{1.0, 0.0});
    const Problem p(s, c);
    const auto adj = solve_adjoint(p, simulate_ensemble(p, zero_control(p)));
    std::ostringstream y, b;
    write_adjoint_csv(y, b, adj);
    CHECK(y.str().rfind("path,step,time,mode,y\n0,0,0,0,-1\n", 0) == 0);
    CHECK(b.str().rfind("path,step,time,side,beta\n0,0,0,left,1\n0,0,0,right,-1\n", 0) == 0);
}
