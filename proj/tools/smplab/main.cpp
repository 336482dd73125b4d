#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "smplab/experiment.hpp"

namespace {

using namespace smplab;

struct CommonArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out) {
    cmd->add_option("--config", args.config, "configuration file")->required()->check(CLI::ExistingFile);
    if (with_out) cmd->add_option("--out", args.out, "output directory (overrides experiment.output)");
    cmd->add_option("--seed", args.seed, "seed override");
}

std::optional<ExperimentConfig> load(const CommonArgs& args, std::optional<ExperimentKind> kind) {
    ParseOverrides o;
    o.experiment = kind;
    o.seed = args.seed;
    if (!args.out.empty()) o.output = std::filesystem::absolute(args.out).string();
    const auto r = load_config(args.config, o);
    if (!r.ok()) {
        std::cerr << args.config << ":\n" << r.error_text();
        return std::nullopt;
    }
    return r.config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Boundary-controlled stochastic heat equation: simulation, adjoint and maximum-principle checks"};
    app.set_version_flag("--version", std::string(code_version()));
    app.require_subcommand(1);

    CommonArgs args;
    std::optional<ExperimentKind> chosen;
    for (const auto kind : all_experiments()) {
        auto* cmd = app.add_subcommand(to_string(kind), std::string("run the ") + to_string(kind) + " experiment");
        add_common(cmd, args, true);
        cmd->callback([&chosen, kind] { chosen = kind; });
    }

    CommonArgs vargs;
    bool convex = false;
    auto* validate = app.add_subcommand("validate", "print the hypothesis audit of a configuration");
    add_common(validate, vargs, false);
    validate->add_flag("--convex", convex, "audit the convex-case hypotheses as well");

    std::string preset;
    auto* show = app.add_subcommand("preset", "print a preset scenario as a complete configuration");
    show->add_option("name", preset, "preset name")->required()->check(CLI::IsMember(preset_names()));

    CLI11_PARSE(app, argc, argv);

    try {
        if (show->parsed()) {
            std::cout << serialize_config(preset_config(preset));
            return 0;
        }
        if (validate->parsed()) {
            const auto cfg = load(vargs, std::nullopt);
            if (!cfg) return 2;
            AuditOptions opt;
            opt.convex_case = convex || cfg->experiment == ExperimentKind::grad_check ||
                              (cfg->experiment == ExperimentKind::optimize && cfg->method == "projected-gradient");
            const auto report = validate_scenario(make_scenario(*cfg), make_cost(*cfg), opt);
            std::cout << report.to_text();
            return report.passed() ? 0 : 1;
        }
        const auto cfg = load(args, chosen);
        if (!cfg) return 2;
        const auto res = run_experiment(*cfg, {std::filesystem::path(args.config).parent_path()});
        std::cout << res.summary;
        if (res.exit_status == 2) std::cerr << "see " << (res.directory / "error.txt").string() << "\n";
        return res.exit_status;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
