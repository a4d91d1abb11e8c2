// Command-line experiment driver.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure
// (non-contraction, collision, failed synthesis), 4 verification failure.

#include "vbflow/experiment.hpp"
#include "vbflow/util.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <string>

namespace {

int run(const std::string& subcommand, const std::string& config_path, const std::string& out_dir,
        const std::string& cache_dir, int threads) {
    using namespace vbflow;
    worker_count() = std::max(1, threads);
    try {
        ExperimentConfig cfg = load_config(config_path);

        // the subcommand must agree with the configured experiment kind
        static const std::map<std::string, ExperimentConfig::Kind> kinds = {
            {"potentials", ExperimentConfig::Kind::Potentials},
            {"simulate", ExperimentConfig::Kind::Simulate},
            {"steer", ExperimentConfig::Kind::Steer},
            {"verify", ExperimentConfig::Kind::Verify},
            {"scale-study", ExperimentConfig::Kind::ScaleStudy},
        };
        const auto it = kinds.find(subcommand);
        if (it == kinds.end()) throw ConfigError("unknown subcommand " + subcommand);
        if (cfg.kind != it->second)
            throw ConfigError("config experiment kind does not match the '" + subcommand +
                              "' subcommand");

        run_experiment(cfg, out_dir, cache_dir);
        std::printf("%s: artifacts written to %s\n", subcommand.c_str(), out_dir.c_str());
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const VerificationError& e) {
        std::fprintf(stderr, "verification failure: %s\n", e.what());
        return 4;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vbflow: rigid body in an unbounded vortical ideal flow"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", cache_dir;
    int threads = 1;
    app.add_option("--threads", threads, "worker cap for data-parallel loops");

    for (const char* name : {"potentials", "simulate", "steer", "verify", "scale-study"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment configuration (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--cache", cache_dir, "added-mass cache directory");
    }

    CLI11_PARSE(app, argc, argv);
    return run(app.get_subcommands().front()->get_name(), config_path, out_dir, cache_dir, threads);
}
