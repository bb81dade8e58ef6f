#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "nlevel/errors.hpp"
#include "nlevel/runner.hpp"

namespace {

struct Flags {
    std::string config;
    std::string out = ".";
    std::vector<double> epsilons;
    int threads = 0;
};

int env_threads() {
    const char* s = std::getenv("NLEVEL_THREADS");
    if (!s) return 0;
    try {
        return std::max(0, std::stoi(s));
    } catch (const std::exception&) {
        return 0;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adiabatic S-matrix solver and exponential asymptotics toolkit"};
    app.require_subcommand(1);
    Flags flags;
    for (const auto& name : nlevel::task_names()) {
        CLI::App* sub = app.add_subcommand(name, "Run the " + name + " task");
        sub->add_option("--config", flags.config, "Run configuration (JSON)")->required();
        sub->add_option("--out", flags.out, "Output directory");
        sub->add_option("--epsilon", flags.epsilons, "Override the epsilon list")->delimiter(',');
        sub->add_option("--threads", flags.threads, "Worker threads (default: config, then NLEVEL_THREADS)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    const std::string task = app.get_subcommands().front()->get_name();
    try {
        nlevel::RunOverrides ov;
        if (!flags.epsilons.empty()) ov.epsilons = flags.epsilons;
        if (flags.threads > 0) ov.threads = flags.threads;
        nlevel::RunConfig cfg =
            nlevel::resolve_config(nlevel::load_config_file(flags.config), task, ov, env_threads());
        cfg.out_dir = flags.out;
        const int code = nlevel::run(cfg, std::cerr);
        if (code == 2) std::cerr << "validation failed, see " << (cfg.out_dir / "report.json").string() << '\n';
        return code;
    } catch (const nlevel::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
