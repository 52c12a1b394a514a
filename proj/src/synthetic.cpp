#include "harfuse/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace harfuse {

namespace {

constexpr Scalar kTau = 2 * std::numbers::pi_v<Scalar>;

// Stream tags for split_seed: one randomness stream per (modality, identity).
constexpr std::uint64_t kPoseTemplateTag = 0x706f7365;      // template parameters
constexpr std::uint64_t kInertialTemplateTag = 0x696d7531;
constexpr std::uint64_t kPoseSequenceTag = 0x70736571;      // per-sequence jitter + noise
constexpr std::uint64_t kInertialSequenceTag = 0x69736571;

Scalar gaussian01(std::mt19937_64& rng) {
    const Scalar u1 = 1.0 - uniform01(rng);  // (0, 1]
    const Scalar u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTau * u2);
}

// Two-harmonic sinusoid sum at a base frequency, amplitudes in [lo, hi].
SinusoidSum random_sum(std::mt19937_64& rng, Scalar base_hz, Scalar lo, Scalar hi) {
    SinusoidSum s;
    for (int k = 1; k <= 2; ++k) {
        s.amp.push_back(uniform_range(rng, lo, hi));
        s.omega.push_back(kTau * base_hz * k);
        s.phase.push_back(uniform_range(rng, 0.0, kTau));
    }
    return s;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
        for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
    }
    int find(int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    }
    void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

void check_pairs(const std::vector<std::pair<int, int>>& pairs, int n_classes,
                 const char* modality) {
    for (const auto& [a, b] : pairs) {
        if (a < 0 || b < 0 || a >= n_classes || b >= n_classes)
            throw ConfigError(std::string(modality) + "-ambiguous pair (" + std::to_string(a) +
                              "," + std::to_string(b) + ") is outside the class range");
        if (a == b)
            throw ConfigError(std::string(modality) + "-ambiguous pair must name two classes");
    }
}

// Per-identity base frequencies: distinct representatives get distinct
// dominant frequencies, which survive keypoint normalization.
Scalar pose_base_hz(int identity) { return 0.5 + 0.25 * identity; }

// Inertial frequencies complete whole cycles per sequence, so uniformly
// sampled sinusoids cancel in the channel mean and the per-identity
// accelerometer bias is the mean gap between classes, by construction.
Scalar inertial_base_hz(int identity, Scalar seq_seconds) {
    return static_cast<Scalar>(1 + identity) / seq_seconds;
}

void validate(const SyntheticConfig& cfg) {
    if (cfg.n_classes < 1) throw ConfigError("n_classes must be positive");
    if (cfg.sequences_per_class < 1) throw ConfigError("sequences_per_class must be positive");
    if (cfg.seq_seconds <= 0) throw ConfigError("seq_seconds must be positive");
    if (cfg.keypoint_rate_hz <= 0 || cfg.inertial_rate_hz <= 0)
        throw ConfigError("sample rates must be positive");
    if (cfg.pose_noise_sigma < 0 || cfg.inertial_noise_sigma < 0)
        throw ConfigError("noise sigma must be non-negative");
    if (cfg.ambiguity_margin < 0) throw ConfigError("ambiguity_margin must be non-negative");
    if (cfg.time_jitter_frac < 0) throw ConfigError("time_jitter_frac must be non-negative");
    if (cfg.amp_jitter < 0 || cfg.amp_jitter >= 1)
        throw ConfigError("amp_jitter must lie in [0, 1)");
}

}  // namespace

Scalar SinusoidSum::value(Scalar t) const {
    Scalar v = 0;
    for (std::size_t k = 0; k < amp.size(); ++k) v += amp[k] * std::sin(omega[k] * t + phase[k]);
    return v;
}

Scalar SinusoidSum::d1(Scalar t) const {
    Scalar v = 0;
    for (std::size_t k = 0; k < amp.size(); ++k)
        v += amp[k] * omega[k] * std::cos(omega[k] * t + phase[k]);
    return v;
}

Scalar SinusoidSum::d2(Scalar t) const {
    Scalar v = 0;
    for (std::size_t k = 0; k < amp.size(); ++k)
        v -= amp[k] * omega[k] * omega[k] * std::sin(omega[k] * t + phase[k]);
    return v;
}

ClassIdentities resolve_identities(const SyntheticConfig& cfg) {
    validate(cfg);
    check_pairs(cfg.vision_ambiguous, cfg.n_classes, "vision");
    check_pairs(cfg.inertial_ambiguous, cfg.n_classes, "inertial");

    UnionFind vision(cfg.n_classes), inertial(cfg.n_classes);
    for (const auto& [a, b] : cfg.vision_ambiguous) vision.unite(a, b);
    for (const auto& [a, b] : cfg.inertial_ambiguous) inertial.unite(a, b);

    for (int c = 0; c < cfg.n_classes; ++c)
        for (int d = c + 1; d < cfg.n_classes; ++d)
            if (vision.find(c) == vision.find(d) && inertial.find(c) == inertial.find(d))
                throw ConfigError("classes " + std::to_string(c) + " and " + std::to_string(d) +
                                  " are identical in both modalities");

    // representative = smallest class id in each group, so identities are
    // stable regardless of pair order
    ClassIdentities ids;
    ids.pose.resize(static_cast<std::size_t>(cfg.n_classes));
    ids.inertial.resize(static_cast<std::size_t>(cfg.n_classes));
    for (int c = 0; c < cfg.n_classes; ++c) {
        int pv = c, iv = c;
        for (int d = 0; d < c; ++d) {
            if (pv == c && vision.find(c) == vision.find(d)) pv = ids.pose[static_cast<std::size_t>(d)];
            if (iv == c && inertial.find(c) == inertial.find(d))
                iv = ids.inertial[static_cast<std::size_t>(d)];
        }
        ids.pose[static_cast<std::size_t>(c)] = pv;
        ids.inertial[static_cast<std::size_t>(c)] = iv;
    }
    return ids;
}

MotionTemplate class_template(const SyntheticConfig& cfg, int class_id) {
    if (class_id < 0 || class_id >= cfg.n_classes)
        throw ConfigError("class id out of range: " + std::to_string(class_id));
    const ClassIdentities ids = resolve_identities(cfg);
    const int p = ids.pose[static_cast<std::size_t>(class_id)];
    const int q = ids.inertial[static_cast<std::size_t>(class_id)];

    MotionTemplate tpl;
    {
        std::mt19937_64 rng(split_seed(cfg.seed, kPoseTemplateTag + static_cast<std::uint64_t>(p)));
        const Scalar f0 = pose_base_hz(p);
        const Scalar cx = 320.0 + 25.0 * p;
        const Scalar cy = 240.0 - 10.0 * p;
        for (Index j = 0; j < kNumJoints; ++j) {
            const Scalar theta = kTau * static_cast<Scalar>(j) / static_cast<Scalar>(kNumJoints);
            const auto ji = static_cast<std::size_t>(j);
            tpl.base_x[ji] = cx + 80.0 * std::cos(theta);
            tpl.base_y[ji] = cy + 140.0 * std::sin(theta);
            tpl.joint_x[ji] = random_sum(rng, f0, 4.0, 14.0);
            tpl.joint_y[ji] = random_sum(rng, f0, 4.0, 14.0);
        }
    }
    {
        std::mt19937_64 rng(
            split_seed(cfg.seed, kInertialTemplateTag + static_cast<std::uint64_t>(q)));
        const Scalar fq = inertial_base_hz(q, cfg.seq_seconds);
        for (auto& axis : tpl.position) axis = random_sum(rng, fq, 0.2, 0.6);
        for (auto& axis : tpl.orientation) axis = random_sum(rng, fq, 0.4, 1.0);
        tpl.accel_bias = cfg.ambiguity_margin * q;
    }
    return tpl;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    const ClassIdentities ids = resolve_identities(cfg);

    Dataset ds;
    ds.name = "synthetic";
    for (int c = 0; c < cfg.n_classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));

    const auto n_pose = static_cast<Index>(std::llround(cfg.seq_seconds * cfg.keypoint_rate_hz));
    const auto n_inertial =
        static_cast<Index>(std::llround(cfg.seq_seconds * cfg.inertial_rate_hz));
    if (n_pose < 2 || n_inertial < 2)
        throw ConfigError("seq_seconds too short for the configured sample rates");

    std::vector<MotionTemplate> templates;
    templates.reserve(static_cast<std::size_t>(cfg.n_classes));
    for (int c = 0; c < cfg.n_classes; ++c) templates.push_back(class_template(cfg, c));

    for (int c = 0; c < cfg.n_classes; ++c) {
        const auto& tpl = templates[static_cast<std::size_t>(c)];
        const int p = ids.pose[static_cast<std::size_t>(c)];
        const int q = ids.inertial[static_cast<std::size_t>(c)];
        for (int i = 0; i < cfg.sequences_per_class; ++i) {
            SequenceRecord rec;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "c%d_s%03d", c, i);
            rec.id = buf;
            rec.class_id = c;

            {  // keypoint stream, keyed by the pose identity
                std::mt19937_64 rng(split_seed(
                    split_seed(cfg.seed, kPoseSequenceTag + static_cast<std::uint64_t>(p)),
                    static_cast<std::uint64_t>(i)));
                const Scalar dt =
                    uniform_range(rng, 0.0, cfg.time_jitter_frac / pose_base_hz(p));
                const Scalar scale =
                    uniform_range(rng, 1.0 - cfg.amp_jitter, 1.0 + cfg.amp_jitter);
                for (Index k = 0; k < n_pose; ++k) {
                    KeypointFrame f;
                    f.timestamp = static_cast<Scalar>(k) / cfg.keypoint_rate_hz;
                    const Scalar t = f.timestamp + dt;
                    for (Index j = 0; j < kNumJoints; ++j) {
                        const auto ji = static_cast<std::size_t>(j);
                        f.joints[ji].x = tpl.base_x[ji] + scale * tpl.joint_x[ji].value(t) +
                                         cfg.pose_noise_sigma * gaussian01(rng);
                        f.joints[ji].y = tpl.base_y[ji] + scale * tpl.joint_y[ji].value(t) +
                                         cfg.pose_noise_sigma * gaussian01(rng);
                        f.joints[ji].c = 0.9;
                    }
                    rec.pose.push_back(std::move(f));
                }
            }
            {  // inertial stream, keyed by the inertial identity
                std::mt19937_64 rng(split_seed(
                    split_seed(cfg.seed, kInertialSequenceTag + static_cast<std::uint64_t>(q)),
                    static_cast<std::uint64_t>(i)));
                const Scalar dt =
                    uniform_range(rng, 0.0, cfg.time_jitter_frac / inertial_base_hz(q, cfg.seq_seconds));
                const Scalar scale =
                    uniform_range(rng, 1.0 - cfg.amp_jitter, 1.0 + cfg.amp_jitter);
                for (Index k = 0; k < n_inertial; ++k) {
                    InertialSample s;
                    s.timestamp = static_cast<Scalar>(k) / cfg.inertial_rate_hz;
                    const Scalar t = s.timestamp + dt;
                    s.channels.resize(6);
                    for (int ax = 0; ax < 3; ++ax)
                        s.channels[static_cast<std::size_t>(ax)] =
                            scale * tpl.position[static_cast<std::size_t>(ax)].d2(t) +
                            (ax == 0 ? tpl.accel_bias : 0.0) +
                            cfg.inertial_noise_sigma * gaussian01(rng);
                    for (int ax = 0; ax < 3; ++ax)
                        s.channels[static_cast<std::size_t>(3 + ax)] =
                            scale * tpl.orientation[static_cast<std::size_t>(ax)].d1(t) +
                            cfg.inertial_noise_sigma * gaussian01(rng);
                    rec.inertial.push_back(std::move(s));
                }
            }
            ds.sequences.push_back(std::move(rec));
        }
    }
    return ds;
}

}  // namespace harfuse
