#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "harfuse/common.hpp"
#include "harfuse/tensor.hpp"

namespace harfuse {

inline constexpr Index kNumJoints = 25;
inline constexpr Index kPoseFeatures = 2 * kNumJoints;  // x,y per joint
inline constexpr Index kNeckJoint = 1;
inline constexpr Index kMidHipJoint = 8;

struct Joint {
    Scalar x = 0;
    Scalar y = 0;
    Scalar c = 0;  // confidence in [0,1]; 0 means undetected (x = y = 0)
};

struct KeypointFrame {
    Scalar timestamp = 0;
    std::array<Joint, kNumJoints> joints{};
};

struct InertialSample {
    Scalar timestamp = 0;
    std::vector<Scalar> channels;  // ax, ay, az, gx, gy, gz [, ...]
};

// --- min-max scaling ---------------------------------------------------------

// Per-feature ranges learned on the training split only. Rank-1 inputs are a
// single feature sampled N times; for rank >= 2 the last axis enumerates
// features and every other axis enumerates samples.
struct ScalerParams {
    Array x_min;
    Array x_max;
    bool fitted = false;
};

ScalerParams minmax_fit(const Tensor& train_features);
// (x - x_min) / (x_max - x_min); no clipping, degenerate features map to 0.
Tensor minmax_apply(const ScalerParams& params, const Tensor& features);

// --- stream alignment ----------------------------------------------------------

struct AlignedStreams {
    std::vector<Scalar> timestamps;
    std::vector<KeypointFrame> pose;
    std::vector<InertialSample> inertial;
};

Scalar native_rate(const std::vector<Scalar>& timestamps);

// Resamples both streams onto one grid at target_hz: start at the latest
// common start, end at the earliest common end, per-channel linear
// interpolation. A keypoint with confidence 0 at either neighbor stays
// undetected ((0,0) with confidence 0) on the grid.
AlignedStreams resample_to_common_rate(const std::vector<KeypointFrame>& pose,
                                       const std::vector<InertialSample>& inertial,
                                       Scalar target_hz);

// --- keypoint normalization ------------------------------------------------------

// Translate so the neck is the origin and divide by the neck/mid-hip
// distance; when either reference joint is undetected, divide by the
// bounding-box diagonal of the confident joints (origin: their centroid).
// Undetected joints output (0,0). Frames with fewer than two confident
// joints are invalid (nullopt).
std::optional<std::array<Scalar, kPoseFeatures>> normalize_keypoints(const KeypointFrame& frame);

// Sequence version: invalid frames are forward-filled from the previous
// valid frame (a leading run back-fills from the first valid one).
// A sequence with no valid frame at all is a data error.
std::vector<std::array<Scalar, kPoseFeatures>> normalize_sequence(
    const std::vector<KeypointFrame>& frames);

// --- subject selection --------------------------------------------------------------

struct TrackerState {
    Scalar center_region = 0.5;  // fraction of frame width/height, centered
    std::optional<std::array<Joint, kNumJoints>> last_keypoints;
    bool locked = false;
};

// Before locking: prefer the candidate whose confident-joint centroid lies in
// the center region (ties by mean confidence); with no centered candidate,
// pick the most confident one and stay unlocked. After locking: pick the
// candidate with the smallest mean distance over jointly-confident joints.
KeypointFrame select_subject(const std::vector<KeypointFrame>& candidates, TrackerState& state,
                             Scalar frame_width, Scalar frame_height);

// --- windowing ------------------------------------------------------------------------

struct WindowSpec {
    Index window_len;
    Index overlap;

    WindowSpec(Index window_len, Index overlap);
    Index stride() const { return window_len - overlap; }
};

// (window_len, overlap) presets: upfall (50,30), utd (50,10),
// berkeley (50,10), cmhad (20,10).
WindowSpec window_profile(std::string_view name);

// Window start offsets {0, stride, 2*stride, ...} with start+window_len <= n.
// A sequence shorter than the window yields no starts (callers log the skip).
std::vector<Index> sliding_windows(Index n, const WindowSpec& spec);

// --- dataset splitting -------------------------------------------------------------------

struct SplitSpec {
    Scalar train = 0.65;
    Scalar val = 0.10;
    Scalar test = 0.25;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct SplitIndices {
    std::vector<Index> train;
    std::vector<Index> val;
    std::vector<Index> test;
};

// Deterministic stratified split with largest-remainder rounding per class.
// When num_classes >= 0, every class in [0, num_classes) must be populated.
SplitIndices split_dataset(const std::vector<int>& labels, const SplitSpec& spec,
                           int num_classes = -1);

}  // namespace harfuse
