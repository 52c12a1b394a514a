// Command-line driver for the two-stream activity-recognition pipeline.
//
// Exit codes: 0 success, 1 unexpected error, 2 configuration error,
// 3 data/state error, 4 training divergence.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "harfuse/pipeline.hpp"

namespace {

void add_common_flags(CLI::App* cmd, harfuse::RunConfig& cfg) {
    cmd->add_option("--config", cfg.config_path, "pipeline config JSON");
    cmd->add_option("--seed", cfg.seed, "run seed (default 0)");
    cmd->add_option("--out", cfg.out_dir, "run output directory");
    cmd->add_option("--window-profile", cfg.window_profile,
                    "window preset: upfall|utd|berkeley|cmhad");
    cmd->add_option("--train-profile", cfg.train_profile,
                    "epoch budget preset: default|utd-vision");
    cmd->add_option("--fusion", cfg.fusion, "fusion method: average|max|both");
}

}  // namespace

int main(int argc, char** argv) {
    harfuse::RunConfig cfg;

    CLI::App app{"two-stream (pose + inertial) activity recognition with score fusion"};
    app.require_subcommand(1);

    struct Spec {
        const char* name;
        const char* help;
        bool stream_flag;
    };
    const Spec specs[] = {
        {"synth", "generate the synthetic dataset", false},
        {"preprocess", "align, normalize, window, split, and scale the dataset", false},
        {"train", "train the stream classifiers on preprocessed windows", true},
        {"evaluate", "score the test windows with the trained classifiers", false},
        {"fuse", "fuse stream scores and write metrics and reports", false},
        {"pipeline", "run synth through fuse end to end", false},
    };
    for (const auto& spec : specs) {
        CLI::App* cmd = app.add_subcommand(spec.name, spec.help);
        add_common_flags(cmd, cfg);
        if (spec.stream_flag)
            cmd->add_option("--stream", cfg.stream, "which stream to train: vision|inertial|both");
        cmd->callback([&cfg, name = std::string(spec.name)] { cfg.command = name; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        harfuse::run_command(cfg);
    } catch (const harfuse::ConfigError& e) {
        std::fprintf(stderr, "harfuse: config error: %s\n", e.what());
        return 2;
    } catch (const harfuse::TrainingDivergence& e) {
        std::fprintf(stderr, "harfuse: training diverged: %s\n", e.what());
        return 4;
    } catch (const harfuse::Error& e) {
        std::fprintf(stderr, "harfuse: error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "harfuse: unexpected error: %s\n", e.what());
        return 1;
    }
    std::printf("harfuse: %s completed (outputs in %s)\n", cfg.command.c_str(),
                cfg.out_dir.string().c_str());
    return 0;
}
