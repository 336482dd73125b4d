#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "smplab/cost.hpp"
#include "smplab/forward.hpp"
#include "support.hpp"

using namespace smplab;
using doctest::Approx;

namespace {

const double kPi2 = std::numbers::pi * std::numbers::pi;

ControlProcess zero_control(const Problem& p) { return ControlProcess::constant(p.grid(), {0.0, 0.0}); }

double max_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

}  // namespace

TEST_CASE("homogeneous linear part is integrated exactly") {
    auto s = test::quiet_scenario(8, 64);
    s.initial_state = ModalVector::unit(8, 1);
    const Problem p(s, CostSpec{});
    const auto ens = simulate_ensemble(p, zero_control(p));
    const auto xt = ens.paths[0].terminal();
    CHECK(xt[1] == Approx(std::exp(-kPi2)).epsilon(1e-13));
    for (std::size_t k : {0, 2, 3}) CHECK(xt[k] == 0.0);
}

TEST_CASE("scheme is step-size independent on the diagonal part") {
    auto s = test::quiet_scenario(8, 10);
    s.initial_state = ModalVector(std::vector<double>{0.3, 1.0, -0.5, 0.2, 0, 0, 0, 0.1});
    const Problem coarse(s, CostSpec{});
    s.n_steps = 10000;
    const Problem fine(s, CostSpec{});
    const auto a = simulate_ensemble(coarse, ControlProcess::constant(coarse.grid(), {0.4, -0.7}));
    const auto b = simulate_ensemble(fine, ControlProcess::constant(fine.grid(), {0.4, -0.7}));
    CHECK(max_diff(a.paths[0].terminal(), b.paths[0].terminal()) <= 1e-12);
}

TEST_CASE("left flux drains mass at unit rate") {
    const auto s = test::quiet_scenario(8, 50, 2.0);
    const Problem p(s, CostSpec{});
    const auto ens = simulate_ensemble(p, ControlProcess::constant(p.grid(), {1.0, 0.0}));
    for (std::size_t i = 0; i <= 50; ++i) CHECK(ens.paths[0].state(i)[0] == Approx(-p.grid().time(i)).epsilon(1e-13));
}

TEST_CASE("boundary noise variance follows the Ito isometry") {
    auto s = test::quiet_scenario(8, 64);
    s.boundary_noise = {1.0, 0.0};
    s.n_paths = 4000;
    s.seed = 2024;
    const Problem p(s, CostSpec{});
    const auto ens = simulate_ensemble(p, zero_control(p));
    const auto& map = p.boundary_map(Side::left);
    for (std::size_t i : {16u, 32u, 64u}) {
        const double t = p.grid().time(i);
        for (std::size_t k = 0; k < 8; ++k) {
            const double mu = p.basis().eigenvalue(k);
            const double psi = k == 0 ? t : std::expm1(2.0 * mu * t) / (2.0 * mu);
            const double expect = map.b_coeffs[k] * map.b_coeffs[k] * psi;
            std::vector<double> sq(ens.n_paths());
            for (std::size_t q = 0; q < ens.n_paths(); ++q) sq[q] = std::pow(ens.paths[q].state(i)[k], 2);
            const auto est = estimate(sq);
            CHECK(std::abs(est.mean - expect) <= 5.0 * est.se);
        }
    }
}

TEST_CASE("ensemble determinism and path-index equivalence") {
    auto s = test::quiet_scenario(8, 32);
    s.f = ScalarFunction::tanh_saturated(-1.0);
    s.g = ScalarFunction::make("affine", {0.3, 0.2});
    s.boundary_noise = {0.5, 0.5};
    s.n_paths = 5;
    s.seed = 99;
    const Problem p(s, CostSpec{});
    const auto u = ControlProcess::constant(p.grid(), {0.2, -0.1});
    const auto a = simulate_ensemble(p, u);
    const auto b = simulate_ensemble(p, u);
    for (std::size_t q = 0; q < 5; ++q)
        for (std::size_t i = 0; i <= 32; ++i) CHECK(max_diff(a.paths[q].state(i), b.paths[q].state(i)) == 0.0);
    const auto single = simulate_path(p, u, PathNoise(NoiseLineage::of(p), 0));
    CHECK(max_diff(single.terminal(), a.paths[0].terminal()) == 0.0);
    CHECK(max_diff(a.paths[0].terminal(), a.paths[1].terminal()) > 0.0);
}

TEST_CASE("noise increments have variance h per mode") {
    auto s = test::quiet_scenario(8, 16);
    s.g = ScalarFunction::linear(1.0);
    s.boundary_noise = {2.0, 0.0};
    s.n_paths = 2000;
    const Problem p(s, CostSpec{});
    const NoiseBundle bundle(NoiseLineage::of(p));
    const double h = p.grid().step();
    std::vector<double> sq(bundle.n_paths());
    for (std::size_t k = 0; k < 8; ++k) {
        for (std::size_t q = 0; q < sq.size(); ++q) sq[q] = std::pow(bundle.path(q).distributed(3)[k], 2);
        const auto e = estimate(sq);
        CHECK(std::abs(e.mean - h) <= 5.0 * e.se);
    }
    for (std::size_t q = 0; q < sq.size(); ++q) sq[q] = std::pow(bundle.path(q).boundary(5)[0], 2);
    const auto e = estimate(sq);
    CHECK(std::abs(e.mean - 4.0 * h) <= 5.0 * e.se);
    for (std::size_t q = 0; q < sq.size(); ++q) CHECK(bundle.path(q).boundary(5)[1] == 0.0);
}

TEST_CASE("mean of noisy linear paths matches the noise-free path") {
    auto s = test::quiet_scenario(8, 32);
    s.f = ScalarFunction::linear(-0.5);
    s.initial_state = ModalVector(std::vector<double>{0.5, 0.3});
    s.boundary_noise = {1.0, 1.0};
    s.n_paths = 3000;
    const Problem noisy(s, CostSpec{});
    auto q = s;
    q.boundary_noise = {};
    q.n_paths = 1;
    const Problem quiet(q, CostSpec{});
    const auto u = ControlProcess::constant(noisy.grid(), {0.3, 0.1});
    const auto ens = simulate_ensemble(noisy, u);
    const auto ref = simulate_ensemble(quiet, u);
    for (std::size_t k = 0; k < 8; ++k) {
        std::vector<double> v(ens.n_paths());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = ens.paths[j].terminal()[k];
        const auto e = estimate(v);
        CHECK(std::abs(e.mean - ref.paths[0].terminal()[k]) <= 5.0 * e.se + 1e-14);
    }
}

TEST_CASE("mode 0 is a martingale under multiplicative noise") {
    auto s = test::quiet_scenario(8, 32);
    s.g = ScalarFunction::make("affine", {0.5, 1.0});
    s.initial_state = ModalVector(std::vector<double>{0.7, 0.2});
    s.n_paths = 3000;
    const Problem p(s, CostSpec{});
    const auto ens = simulate_ensemble(p, zero_control(p));
    std::vector<double> v(ens.n_paths());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = ens.paths[j].terminal()[0];
    const auto e = estimate(v);
    CHECK(e.se > 0.0);
    CHECK(std::abs(e.mean - 0.7) <= 5.0 * e.se);
}

TEST_CASE("first variation: zero direction and exact linearity") {
    auto s = test::quiet_scenario(16, 64);
    s.f = ScalarFunction::linear(-0.8);
    s.boundary_noise = {1.0, 0.5};
    s.n_paths = 4;
    const Problem p(s, CostSpec{});
    const auto ubar = ControlProcess::constant(p.grid(), {0.1, 0.2});
    std::vector<Control2> vals(64);
    for (std::size_t i = 0; i < 64; ++i) vals[i] = {std::sin(0.1 * i), i % 3 == 0 ? 1.0 : -0.5};
    const ControlProcess u(p.grid(), vals);
    const auto base = simulate_ensemble(p, ubar);
    const auto moved = simulate_ensemble(p, u, base.noise);

    const auto zero = first_variation_ensemble(p, base, ControlProcess::constant(p.grid(), {0.0, 0.0}));
    for (const auto& z : zero) CHECK(z.sup_norm() == 0.0);

    const auto xt = first_variation_ensemble(p, base, u - ubar);
    for (std::size_t q = 0; q < 4; ++q) {
        const auto r = remainder_path(moved.paths[q], base.paths[q], xt[q]);
        CHECK(r.sup_norm <= 1e-12);
    }
}

TEST_CASE("first variation with multiplicative affine noise is exact") {
    auto s = test::quiet_scenario(16, 64);
    s.f = ScalarFunction::linear(-0.3);
    s.g = ScalarFunction::linear(0.4);
    s.n_paths = 3;
    const Problem p(s, CostSpec{});
    const auto ubar = ControlProcess::constant(p.grid(), {0.0, 0.0});
    const auto u = ControlProcess::constant(p.grid(), {0.5, -0.5});
    const auto base = simulate_ensemble(p, ubar);
    const auto moved = simulate_ensemble(p, u, base.noise);
    const auto xt = first_variation_ensemble(p, base, u - ubar);
    for (std::size_t q = 0; q < 3; ++q) CHECK(remainder_path(moved.paths[q], base.paths[q], xt[q]).sup_norm <= 1e-12);
}

TEST_CASE("strong self-convergence on a nonlinear scenario") {
    // fixed truncation, boundary noise off; CRN across levels by coarsening
    // the finest noise
    auto make = [](std::size_t steps, bool g_on) {
        auto s = test::quiet_scenario(8, steps, 0.25);
        s.f = ScalarFunction::tanh_saturated(-2.0, 0.5);
        if (g_on) s.g = ScalarFunction::tanh_saturated(0.8);
        s.initial_state = ModalVector(std::vector<double>{0.5, 0.4, -0.2});
        s.n_paths = 100;
        return s;
    };
    for (bool g_on : {false, true}) {
        const std::size_t finest = 4096;
        const Problem fine(make(finest, g_on), CostSpec{});
        const NoiseBundle noise(NoiseLineage::of(fine));
        std::vector<double> diffs;
        for (std::size_t steps : {256u, 512u, 1024u}) {
            const Problem a(make(steps, g_on), CostSpec{});
            const Problem b(make(2 * steps, g_on), CostSpec{});
            double sum = 0.0;
            for (std::size_t q = 0; q < noise.n_paths(); ++q) {
                const auto& n = noise.path(q);
                const auto xa = simulate_path(a, ControlProcess::constant(a.grid(), {0.3, -0.3}), n.coarsened(finest / steps));
                const auto xb =
                    simulate_path(b, ControlProcess::constant(b.grid(), {0.3, -0.3}), n.coarsened(finest / (2 * steps)));
                double d = 0.0;
                for (std::size_t k = 0; k < 8; ++k) d += std::pow(xa.terminal()[k] - xb.terminal()[k], 2);
                sum += d;
            }
            diffs.push_back(std::sqrt(sum / static_cast<double>(noise.n_paths())));
        }
        const double rate = std::log2(diffs[0] / diffs[2]) / 2.0;
        MESSAGE(std::string(g_on ? "g on" : "g off") << ": self-convergence rate " << rate);
        CHECK(rate >= (g_on ? 0.5 : 1.0) - 0.05);
    }
}

TEST_CASE("coarsened noise sums increments") {
    auto s = test::quiet_scenario(4, 8);
    s.g = ScalarFunction::linear(1.0);
    s.boundary_noise = {1.0, 1.0};
    const Problem p(s, CostSpec{});
    const PathNoise n(NoiseLineage::of(p), 3);
    const auto c = n.coarsened(4);
    CHECK(c.n_steps() == 2);
    CHECK(c.boundary(1)[0] == Approx(n.boundary(4)[0] + n.boundary(5)[0] + n.boundary(6)[0] + n.boundary(7)[0]));
    CHECK(c.distributed(0)[2] ==
          Approx(n.distributed(0)[2] + n.distributed(1)[2] + n.distributed(2)[2] + n.distributed(3)[2]));
    CHECK_THROWS_AS((void)n.coarsened(3), Error);
}

TEST_CASE("blow-up is reported with path and step") {
    auto s = test::quiet_scenario(4, 16);
    s.f = ScalarFunction::linear(1e4);
    s.initial_state = ModalVector(std::vector<double>{1e300});
    const Problem p(s, CostSpec{});
    try {
        (void)simulate_ensemble(p, ControlProcess::constant(p.grid(), {0.0, 0.0}));
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::blow_up);
        CHECK(std::string(e.what()).find("path 0") != std::string::npos);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("grid and lineage mismatches are rejected") {
    const auto s = test::quiet_scenario(4, 16);
    const Problem p(s, CostSpec{});
    auto s2 = s;
    s2.n_steps = 8;
    const Problem p2(s2, CostSpec{});
    CHECK_THROWS_AS((void)simulate_ensemble(p, ControlProcess::constant(p2.grid(), {0.0, 0.0})), Error);
    const auto noise = make_noise(p2);
    CHECK_THROWS_AS((void)simulate_ensemble(p, ControlProcess::constant(p.grid(), {0.0, 0.0}), noise), Error);
    CHECK_THROWS_AS(ControlProcess::admissible(p.grid(), std::vector<Control2>(16, {2.0, 0.0}), s.control_set), Error);
}

TEST_CASE("path dump format") {
    auto s = test::quiet_scenario(2, 2);
    s.initial_state = ModalVector(std::vector<double>{1.0, 0.5});
    const Problem p(s, CostSpec{});
    const auto ens = simulate_ensemble(p, ControlProcess::constant(p.grid(), {0.0, 0.0}));
    std::ostringstream out;
    write_path_csv(out, ens.paths);
    const auto text = out.str();
    CHECK(text.rfind("path,step,time,mode,coefficient\n0,0,0,0,1\n0,0,0,1,0.5\n", 0) == 0);
    CHECK(text.find('\r') == std::string::npos);
}
