#include <benchmark/benchmark.h>

#include "smplab/config.hpp"

using namespace smplab;

namespace {

ExperimentConfig sized(const char* preset, std::size_t n_modes, std::size_t n_steps, std::size_t n_paths) {
    auto c = preset_config(preset);
    c.scenario.n_modes = n_modes;
    c.scenario.grid_size = 2 * n_modes;
    c.scenario.n_steps = n_steps;
    c.scenario.n_paths = n_paths;
    return c;
}

void BM_Transforms(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto basis = build_basis(n, 1.0, 2 * n);
    std::vector<double> modal(n, 0.1);
    std::vector<double> grid(2 * n);
    for (auto _ : state) {
        basis.to_grid(modal, grid);
        basis.to_modal(grid, modal);
        benchmark::DoNotOptimize(modal.data());
    }
}
BENCHMARK(BM_Transforms)->Arg(32)->Arg(64)->Arg(256);

void BM_StepperAdvance(benchmark::State& state) {
    const auto p = make_problem(sized(state.range(1) ? "tanh-mult" : "tanh", state.range(0), 64, 1));
    const Stepper stepper(p);
    const PathNoise noise(NoiseLineage::of(p), 0);
    std::vector<double> x(p.n_modes(), 0.1);
    std::vector<double> y(p.n_modes());
    for (auto _ : state) {
        stepper.advance(x, {0.5, -0.5}, noise, 0, y);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_StepperAdvance)->Args({64, 0})->Args({64, 1})->Args({256, 0});

void BM_SimulateEnsemble(benchmark::State& state) {
    const auto p = make_problem(sized("tanh", 32, 128, static_cast<std::size_t>(state.range(0))));
    const auto u = ControlProcess::constant(p.grid(), {0.2, -0.2});
    const auto noise = make_noise(p);
    for (auto _ : state) benchmark::DoNotOptimize(simulate_ensemble(p, u, noise));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateEnsemble)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_SolveAdjoint(benchmark::State& state) {
    const auto p = make_problem(sized("tanh", 16, 64, static_cast<std::size_t>(state.range(0))));
    const auto ens = simulate_ensemble(p, ControlProcess::constant(p.grid(), {0.2, -0.2}));
    RegressionBasis rb;
    rb.n_reg = 16;
    for (auto _ : state) benchmark::DoNotOptimize(solve_adjoint(p, ens, rb));
}
BENCHMARK(BM_SolveAdjoint)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_GradientFd(benchmark::State& state) {
    const auto p = make_problem(sized("linear", 16, 64, 500));
    const auto u = ControlProcess::constant(p.grid(), {0.2, -0.2});
    const auto v = ControlProcess::constant(p.grid(), {1.0, 0.0});
    const auto noise = make_noise(p);
    for (auto _ : state) benchmark::DoNotOptimize(gradient_fd(p, u, v, noise));
}
BENCHMARK(BM_GradientFd)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
