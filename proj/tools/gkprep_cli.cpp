// Command-line surface: analytic, simulate, single-link, cost and sweep
// experiments, driven by a JSON config with flag overrides.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gkprep/runio.hpp"

namespace {

struct Flags {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    int threads = 0;
    int precision = 0;
    std::uint64_t budget = 0;
};

void add_common_flags(CLI::App* cmd, Flags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file")->required();
    cmd->add_option("--seed", flags.seed, "master seed (overrides config)");
    cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
    cmd->add_option("--threads", flags.threads, "worker count (overrides config)");
    cmd->add_option("--precision", flags.precision,
                    "solver precision in decimal digits (overrides config)");
    cmd->add_option("--budget", flags.budget, "trial budget cap (overrides config)");
}

int dispatch(const std::string& kind, const Flags& flags, const CLI::App* cmd) {
    using namespace gkprep;

    io::json cfg = io::load_config(flags.config_path);
    if (!cfg.is_object()) throw io::config_error("config must be a JSON object");
    if (cfg.contains("kind")) {
        if (cfg.at("kind").get<std::string>() != kind)
            throw io::config_error("config kind does not match the subcommand");
    } else {
        cfg["kind"] = kind;
    }

    io::CommonOptions defaults;
    if (cmd->count("--seed")) cfg["seed"] = flags.seed;
    if (cmd->count("--out")) cfg["out"] = flags.out_dir;
    if (cmd->count("--threads")) cfg["threads"] = flags.threads;
    if (cmd->count("--precision")) cfg["precision"] = flags.precision;
    if (cmd->count("--budget")) cfg["budget"] = flags.budget;

    return io::run_config(cfg, defaults);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GKP repeater chain simulation and cost optimization toolkit"};
    app.require_subcommand(1);

    const char* kinds[] = {"analytic", "simulate", "single-link", "cost", "sweep"};
    const char* descriptions[] = {
        "achievable-distance table from the analytical GKP chain model",
        "Monte-Carlo chain estimate (JSON output)",
        "logical error probability versus loss for the single-link schemes",
        "per-distance cost-optimal repeater layouts",
        "run a list of configured experiments"};

    Flags flags[5];
    CLI::App* cmds[5];
    for (int i = 0; i < 5; ++i) {
        cmds[i] = app.add_subcommand(kinds[i], descriptions[i]);
        add_common_flags(cmds[i], flags[i]);
    }

    CLI11_PARSE(app, argc, argv);

    int which = -1;
    for (int i = 0; i < 5; ++i)
        if (cmds[i]->parsed()) which = i;

    try {
        return dispatch(kinds[which], flags[which], cmds[which]);
    } catch (const gkprep::io::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return gkprep::io::kExitConfigError;
    } catch (const gkprep::rescaling::precision_exhausted_error& e) {
        std::cerr << "precision exhausted: " << e.what() << "\n";
        return gkprep::io::kExitPrecisionExhausted;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return gkprep::io::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
