#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "harfuse/dataio.hpp"

namespace harfuse {

// Sum of sinusoids sum_k a_k * sin(w_k * t + p_k) with exact derivatives, so
// inertial channels can be the true analytic derivatives of the motion.
struct SinusoidSum {
    std::vector<Scalar> amp;
    std::vector<Scalar> omega;
    std::vector<Scalar> phase;

    Scalar value(Scalar t) const;
    Scalar d1(Scalar t) const;
    Scalar d2(Scalar t) const;
};

// Parametric motion for one class: smooth 2-D joint trajectories around
// per-joint anchor points, a 3-axis position proxy whose second derivative
// is the accelerometer signal, and a 3-axis orientation proxy whose first
// derivative is the gyroscope signal.
struct MotionTemplate {
    std::array<Scalar, kNumJoints> base_x{};
    std::array<Scalar, kNumJoints> base_y{};
    std::array<SinusoidSum, kNumJoints> joint_x;
    std::array<SinusoidSum, kNumJoints> joint_y;
    std::array<SinusoidSum, 3> position;     // accelerometer = position[i].d2
    std::array<SinusoidSum, 3> orientation;  // gyroscope     = orientation[i].d1
    Scalar accel_bias = 0;                   // constant offset on the first accel channel
};

struct SyntheticConfig {
    int n_classes = 6;
    int sequences_per_class = 60;
    Scalar seq_seconds = 2.0;
    Scalar keypoint_rate_hz = 15.0;
    Scalar inertial_rate_hz = 50.0;
    Scalar pose_noise_sigma = 0.5;      // pixels
    Scalar inertial_noise_sigma = 0.05;
    Scalar ambiguity_margin = 2.0;      // accel-bias gap between inertial identities
    Scalar time_jitter_frac = 0.15;     // per-sequence phase jitter, fraction of a period
    Scalar amp_jitter = 0.15;           // per-sequence amplitude scale in [1-a, 1+a]
    // Class pairs made identical in the named modality; each pair must stay
    // distinguishable in the other one.
    std::vector<std::pair<int, int>> vision_ambiguous{{0, 1}};
    std::vector<std::pair<int, int>> inertial_ambiguous{{2, 3}};
    std::uint64_t seed = 0;
};

// Representative class per modality after collapsing ambiguous pairs:
// classes sharing a pose representative emit identical keypoint streams,
// classes sharing an inertial representative emit identical inertial
// streams. A pair collapsed in both modalities is a ConfigError.
struct ClassIdentities {
    std::vector<int> pose;
    std::vector<int> inertial;
};
ClassIdentities resolve_identities(const SyntheticConfig& cfg);

// The fully resolved template a class emits (after ambiguity collapse).
MotionTemplate class_template(const SyntheticConfig& cfg, int class_id);

// Deterministic generation: per-stream randomness is keyed by the modality
// identity, so an ambiguous pair's shared-modality sequences match
// bit-for-bit (noise included) while the other modality stays independent.
Dataset generate_synthetic(const SyntheticConfig& cfg);

}  // namespace harfuse
