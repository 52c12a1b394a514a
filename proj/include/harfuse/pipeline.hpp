#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "harfuse/dataio.hpp"
#include "harfuse/fusion.hpp"
#include "harfuse/models.hpp"
#include "harfuse/synthetic.hpp"

namespace harfuse {

// Resolved run options: the data source (synthetic generator or a recorded
// dataset manifest) plus per-stream training budgets.
struct PipelineOptions {
    SyntheticConfig synth;        // used when manifest_path is empty
    std::string manifest_path;    // load recorded data when set
    std::string window_profile;   // "" = manifest / synth default
    TrainConfig vision_train;
    TrainConfig inertial_train;
};

// Parses the optional pipeline config JSON ("" gives pure defaults);
// train_profile supplies the epoch budgets the file may override.
PipelineOptions load_pipeline_options(const std::string& config_path,
                                      const std::string& train_profile);

struct RunConfig {
    std::string command;             // synth|preprocess|train|evaluate|fuse|pipeline
    std::string config_path;         // pipeline config JSON; "" = defaults
    std::string window_profile;      // CLI override; "" = config/manifest
    std::string train_profile = "default";
    std::string fusion = "both";     // average|max|both
    std::string stream = "both";     // train command: vision|inertial|both
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "harfuse_run";
};

// Windowed, scaled, split model inputs.
struct WindowSet {
    std::vector<std::string> class_names;
    Index window_len = 0;
    Index n_channels = 0;
    Tensor pose_train, pose_val, pose_test;              // [n x T x 50]
    Tensor inertial_train, inertial_val, inertial_test;  // [n x T x C]
    std::vector<int> y_train, y_val, y_test;
};

// Per sequence: subject selection, alignment to the lower native rate,
// keypoint normalization, sliding windows; then a stratified sequence-level
// split (so windows of one recording never straddle splits) and min-max
// scaling fitted on the training part only.
WindowSet preprocess_dataset(const Dataset& dataset, const WindowSpec& spec, std::uint64_t seed);

void save_windows(const WindowSet& ws, const std::filesystem::path& run_dir);
WindowSet load_windows(const std::filesystem::path& run_dir);  // StateError when missing

// Fixed-order text table: Inertial, Vision, Fusion (average), Fusion (max).
std::string comparison_table(const StreamComparison& cmp);

// Rebuilds the text table and every SVG from the CSV artifacts in run_dir;
// pure function of those files, so repeated calls are byte-identical.
void emit_reports(const std::filesystem::path& run_dir);

// Executes one command; on a stage error writes a FAILED marker naming the
// stage, then rethrows.
void run_command(const RunConfig& cfg);

}  // namespace harfuse
