#include "dtwin/config.hpp"
#include "dtwin/errors.hpp"
#include "dtwin/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;

struct CliArgs {
    std::string config_path;
    std::optional<long> seed;
    std::string out_dir;
    bool resimulate_oh = false;
    bool dump_config = false;
};

dtwin::PipelineConfig resolve_config(const CliArgs& args) {
    dtwin::PipelineConfig cfg =
        args.config_path.empty() ? dtwin::PipelineConfig{} : dtwin::load_config(args.config_path);
    if (args.seed) cfg.seed = static_cast<std::uint64_t>(*args.seed);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    dtwin::finalize_thermal(cfg);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dtwin - deterministic district digital-twin simulator and analytics"};
    app.require_subcommand(0, 1);
    app.fallthrough();  // allow global flags after the subcommand

    CliArgs args;
    app.add_option("--config", args.config_path, "configuration file (key = value lines)");
    app.add_option("--seed", args.seed, "override the configured seed");
    app.add_option("--out", args.out_dir, "override the output directory");
    app.add_flag("--resimulate-oh", args.resimulate_oh,
                 "re-simulate indoor overheating hours for microgrid interventions");
    app.add_flag("--dump-config", args.dump_config,
                 "print the full configuration (all keys with current values) and exit");

    const char* stage_names[] = {"generate", "simulate", "sense", "fuse",
                                 "calibrate", "graph", "equity", "intervene"};
    for (const char* name : stage_names)
        app.add_subcommand(name, std::string("run the ") + name + " stage");
    app.add_subcommand("pipeline", "run every stage in order and emit the summary");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = resolve_config(args);
        if (args.dump_config) {
            std::cout << dtwin::config_to_text(cfg);
            return 0;
        }
        const auto subs = app.get_subcommands();
        if (subs.empty()) {
            std::cerr << "no subcommand given; see --help\n";
            return kExitConfig;
        }
        dtwin::PipelineOptions opts;
        opts.resimulate_oh = args.resimulate_oh;
        const std::string name = subs.front()->get_name();
        if (name == "pipeline") {
            dtwin::run_pipeline(cfg, opts);
        } else {
            dtwin::run_stage(dtwin::stage_from_name(name), cfg, opts);
        }
        return 0;
    } catch (const dtwin::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const dtwin::MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissing;
    } catch (const dtwin::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
