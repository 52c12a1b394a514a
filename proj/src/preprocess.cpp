#include "harfuse/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace harfuse {

namespace {

struct FeatureView {
    Index features;
    Index rows;
};

FeatureView feature_view(const Tensor& t) {
    if (t.size() == 0) throw ValidationError("minmax: empty feature tensor");
    const Index f = t.rank() <= 1 ? 1 : t.shape.back();
    return {f, t.size() / f};
}

void check_increasing(const std::vector<Scalar>& t, const char* what) {
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1]))
            throw DataError(std::string(what) + ": timestamps not strictly increasing at index " +
                            std::to_string(i));
}

// index j with t[j] <= x <= t[j+1] (clamped), plus the interpolation weight
std::pair<std::size_t, Scalar> bracket(const std::vector<Scalar>& t, std::size_t& hint,
                                       Scalar x) {
    while (hint + 2 < t.size() && t[hint + 1] <= x) ++hint;
    const Scalar lo = t[hint], hi = t[hint + 1];
    Scalar w = (x - lo) / (hi - lo);
    w = std::clamp(w, 0.0, 1.0);
    return {hint, w};
}

Scalar mean_confidence(const KeypointFrame& f) {
    Scalar s = 0;
    for (const Joint& j : f.joints) s += j.c;
    return s / static_cast<Scalar>(kNumJoints);
}

std::optional<std::pair<Scalar, Scalar>> confident_centroid(const KeypointFrame& f) {
    Scalar sx = 0, sy = 0;
    Index n = 0;
    for (const Joint& j : f.joints)
        if (j.c > 0) {
            sx += j.x;
            sy += j.y;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return std::make_pair(sx / static_cast<Scalar>(n), sy / static_cast<Scalar>(n));
}

}  // namespace

// --- min-max scaling ---------------------------------------------------------

ScalerParams minmax_fit(const Tensor& train_features) {
    const FeatureView v = feature_view(train_features);
    ScalerParams p;
    p.x_min = Array::Constant(v.features, std::numeric_limits<Scalar>::infinity());
    p.x_max = Array::Constant(v.features, -std::numeric_limits<Scalar>::infinity());
    for (Index r = 0; r < v.rows; ++r)
        for (Index f = 0; f < v.features; ++f) {
            const Scalar x = train_features.data[r * v.features + f];
            p.x_min[f] = std::min(p.x_min[f], x);
            p.x_max[f] = std::max(p.x_max[f], x);
        }
    p.fitted = true;
    return p;
}

Tensor minmax_apply(const ScalerParams& params, const Tensor& features) {
    if (!params.fitted) throw StateError("minmax: apply called before fit");
    const FeatureView v = feature_view(features);
    if (v.features != params.x_min.size())
        throw DimensionError("minmax: fitted on " + std::to_string(params.x_min.size()) +
                             " features, applied to " + std::to_string(v.features));
    Array out(features.size());
    for (Index r = 0; r < v.rows; ++r)
        for (Index f = 0; f < v.features; ++f) {
            const Scalar range = params.x_max[f] - params.x_min[f];
            const Scalar x = features.data[r * v.features + f];
            out[r * v.features + f] = range > 0 ? (x - params.x_min[f]) / range : 0.0;
        }
    return Tensor(features.shape, std::move(out));
}

// --- stream alignment ----------------------------------------------------------

Scalar native_rate(const std::vector<Scalar>& timestamps) {
    if (timestamps.size() < 2)
        throw DataError("native_rate: need at least two samples");
    const Scalar span = timestamps.back() - timestamps.front();
    if (!(span > 0)) throw DataError("native_rate: non-positive time span");
    return static_cast<Scalar>(timestamps.size() - 1) / span;
}

AlignedStreams resample_to_common_rate(const std::vector<KeypointFrame>& pose,
                                       const std::vector<InertialSample>& inertial,
                                       Scalar target_hz) {
    if (pose.size() < 2 || inertial.size() < 2)
        throw DataError("resample: each stream needs at least two samples");
    if (!(target_hz > 0)) throw ConfigError("resample: target rate must be positive");

    std::vector<Scalar> pt, it;
    pt.reserve(pose.size());
    it.reserve(inertial.size());
    for (const auto& f : pose) pt.push_back(f.timestamp);
    for (const auto& s : inertial) it.push_back(s.timestamp);
    check_increasing(pt, "resample(pose)");
    check_increasing(it, "resample(inertial)");

    const std::size_t channels = inertial.front().channels.size();
    for (const auto& s : inertial)
        if (s.channels.size() != channels)
            throw DataError("resample: inconsistent inertial channel count");

    const Scalar slack = 1e-9;
    if (target_hz > native_rate(pt) + slack || target_hz > native_rate(it) + slack)
        throw ConfigError("resample: target rate exceeds a native rate (downsampling only)");

    const Scalar start = std::max(pt.front(), it.front());
    const Scalar end = std::min(pt.back(), it.back());
    if (start > end) throw SyncError("resample: streams share no overlapping time range");

    const Scalar step = 1.0 / target_hz;
    const Index count = static_cast<Index>(std::floor((end - start) * target_hz + 1e-9)) + 1;

    AlignedStreams out;
    out.timestamps.reserve(static_cast<std::size_t>(count));
    out.pose.reserve(static_cast<std::size_t>(count));
    out.inertial.reserve(static_cast<std::size_t>(count));

    std::size_t hp = 0, hi = 0;
    const Scalar snap = 1e-12;
    for (Index i = 0; i < count; ++i) {
        const Scalar ti = start + static_cast<Scalar>(i) * step;
        out.timestamps.push_back(ti);

        auto [jp, wp] = bracket(pt, hp, ti);
        KeypointFrame pf;
        pf.timestamp = ti;
        if (wp <= snap) {
            pf.joints = pose[jp].joints;
        } else if (wp >= 1.0 - snap) {
            pf.joints = pose[jp + 1].joints;
        } else {
            for (Index k = 0; k < kNumJoints; ++k) {
                const Joint& a = pose[jp].joints[static_cast<std::size_t>(k)];
                const Joint& b = pose[jp + 1].joints[static_cast<std::size_t>(k)];
                Joint& j = pf.joints[static_cast<std::size_t>(k)];
                if (a.c > 0 && b.c > 0) {
                    j.x = a.x + wp * (b.x - a.x);
                    j.y = a.y + wp * (b.y - a.y);
                    j.c = a.c + wp * (b.c - a.c);
                } else {
                    j = Joint{};  // undetected at either neighbor stays undetected
                }
            }
        }
        out.pose.push_back(std::move(pf));

        auto [ji, wi] = bracket(it, hi, ti);
        InertialSample s;
        s.timestamp = ti;
        s.channels.resize(channels);
        if (wi <= snap) {
            s.channels = inertial[ji].channels;
        } else if (wi >= 1.0 - snap) {
            s.channels = inertial[ji + 1].channels;
        } else {
            for (std::size_t c = 0; c < channels; ++c) {
                const Scalar a = inertial[ji].channels[c];
                const Scalar b = inertial[ji + 1].channels[c];
                s.channels[c] = a + wi * (b - a);
            }
        }
        out.inertial.push_back(std::move(s));
    }
    return out;
}

// --- keypoint normalization ------------------------------------------------------

std::optional<std::array<Scalar, kPoseFeatures>> normalize_keypoints(const KeypointFrame& frame) {
    Index confident = 0;
    for (const Joint& j : frame.joints)
        if (j.c > 0) ++confident;
    if (confident < 2) return std::nullopt;

    const Joint& neck = frame.joints[kNeckJoint];
    const Joint& hip = frame.joints[kMidHipJoint];

    Scalar ox, oy, denom = 0;
    if (neck.c > 0 && hip.c > 0) {
        ox = neck.x;
        oy = neck.y;
        denom = std::hypot(neck.x - hip.x, neck.y - hip.y);
    }
    if (!(neck.c > 0 && hip.c > 0) || denom <= 0) {
        // bounding-box fallback over confident joints, centroid as origin
        const auto centroid = confident_centroid(frame);
        ox = centroid->first;
        oy = centroid->second;
        Scalar minx = std::numeric_limits<Scalar>::infinity(), maxx = -minx;
        Scalar miny = minx, maxy = -minx;
        for (const Joint& j : frame.joints)
            if (j.c > 0) {
                minx = std::min(minx, j.x);
                maxx = std::max(maxx, j.x);
                miny = std::min(miny, j.y);
                maxy = std::max(maxy, j.y);
            }
        denom = std::hypot(maxx - minx, maxy - miny);
        if (denom <= 0) return std::nullopt;  // all confident joints coincide
    }

    std::array<Scalar, kPoseFeatures> out{};
    for (Index k = 0; k < kNumJoints; ++k) {
        const Joint& j = frame.joints[static_cast<std::size_t>(k)];
        if (j.c > 0) {
            out[static_cast<std::size_t>(2 * k)] = (j.x - ox) / denom;
            out[static_cast<std::size_t>(2 * k + 1)] = (j.y - oy) / denom;
        }
    }
    return out;
}

std::vector<std::array<Scalar, kPoseFeatures>> normalize_sequence(
    const std::vector<KeypointFrame>& frames) {
    std::vector<std::optional<std::array<Scalar, kPoseFeatures>>> raw;
    raw.reserve(frames.size());
    for (const auto& f : frames) raw.push_back(normalize_keypoints(f));

    std::size_t first_valid = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i)
        if (raw[i]) {
            first_valid = i;
            break;
        }
    if (first_valid == raw.size())
        throw DataError("normalize_sequence: no frame has two confident joints");

    std::vector<std::array<Scalar, kPoseFeatures>> out;
    out.reserve(frames.size());
    std::array<Scalar, kPoseFeatures> last = *raw[first_valid];
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i]) last = *raw[i];
        out.push_back(last);
    }
    return out;
}

// --- subject selection --------------------------------------------------------------

KeypointFrame select_subject(const std::vector<KeypointFrame>& candidates, TrackerState& state,
                             Scalar frame_width, Scalar frame_height) {
    if (candidates.empty()) throw DataError("select_subject: no candidates");

    std::size_t chosen = 0;
    if (!state.locked) {
        const Scalar half_w = state.center_region * frame_width / 2.0;
        const Scalar half_h = state.center_region * frame_height / 2.0;
        const Scalar cx = frame_width / 2.0, cy = frame_height / 2.0;
        std::size_t best_centered = candidates.size();
        Scalar best_centered_conf = -1;
        std::size_t best_any = 0;
        Scalar best_any_conf = -1;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const Scalar conf = mean_confidence(candidates[i]);
            if (conf > best_any_conf) {
                best_any_conf = conf;
                best_any = i;
            }
            const auto centroid = confident_centroid(candidates[i]);
            if (centroid && std::abs(centroid->first - cx) <= half_w &&
                std::abs(centroid->second - cy) <= half_h && conf > best_centered_conf) {
                best_centered_conf = conf;
                best_centered = i;
            }
        }
        if (best_centered < candidates.size()) {
            chosen = best_centered;
            state.locked = true;
        } else {
            chosen = best_any;  // defer the lock until someone enters the center
        }
    } else {
        const auto& last = *state.last_keypoints;
        Scalar best_dist = std::numeric_limits<Scalar>::infinity();
        Scalar best_conf = -1;
        std::size_t best_any = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            Scalar sum = 0;
            Index n = 0;
            for (std::size_t k = 0; k < static_cast<std::size_t>(kNumJoints); ++k) {
                const Joint& a = candidates[i].joints[k];
                const Joint& b = last[k];
                if (a.c > 0 && b.c > 0) {
                    sum += std::hypot(a.x - b.x, a.y - b.y);
                    ++n;
                }
            }
            const Scalar conf = mean_confidence(candidates[i]);
            if (conf > best_conf) {
                best_conf = conf;
                best_any = i;
            }
            if (n > 0) {
                const Scalar d = sum / static_cast<Scalar>(n);
                if (d < best_dist) {
                    best_dist = d;
                    chosen = i;
                }
            }
        }
        if (!std::isfinite(best_dist)) chosen = best_any;
    }

    if (state.locked) state.last_keypoints = candidates[chosen].joints;
    return candidates[chosen];
}

// --- windowing ------------------------------------------------------------------------

WindowSpec::WindowSpec(Index window_len, Index overlap)
    : window_len(window_len), overlap(overlap) {
    if (window_len < 1 || overlap < 0 || overlap >= window_len)
        throw ConfigError("window spec: need 0 <= overlap < window_len, got (" +
                          std::to_string(window_len) + ", " + std::to_string(overlap) + ")");
}

WindowSpec window_profile(std::string_view name) {
    if (name == "upfall") return {50, 30};
    if (name == "utd") return {50, 10};
    if (name == "berkeley") return {50, 10};
    if (name == "cmhad") return {20, 10};
    throw ConfigError("window profile: unknown name '" + std::string(name) +
                      "' (expected upfall|utd|berkeley|cmhad)");
}

std::vector<Index> sliding_windows(Index n, const WindowSpec& spec) {
    std::vector<Index> starts;
    if (n < spec.window_len) return starts;
    for (Index s = 0; s + spec.window_len <= n; s += spec.stride()) starts.push_back(s);
    return starts;
}

// --- dataset splitting -------------------------------------------------------------------

SplitIndices split_dataset(const std::vector<int>& labels, const SplitSpec& spec,
                           int num_classes) {
    if (labels.empty()) throw ConfigError("split: no samples");
    if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9 || spec.train < 0 ||
        spec.val < 0 || spec.test < 0)
        throw ConfigError("split: fractions must be non-negative and sum to 1");

    std::map<int, std::vector<Index>> groups;
    if (spec.stratified) {
        for (std::size_t i = 0; i < labels.size(); ++i)
            groups[labels[i]].push_back(static_cast<Index>(i));
    } else {
        auto& all = groups[0];
        for (std::size_t i = 0; i < labels.size(); ++i) all.push_back(static_cast<Index>(i));
    }
    if (num_classes >= 0 && spec.stratified) {
        for (int c = 0; c < num_classes; ++c)
            if (!groups.count(c))
                throw ConfigError("split: class " + std::to_string(c) + " has no samples");
        for (const auto& [c, g] : groups)
            if (c < 0 || c >= num_classes)
                throw ConfigError("split: label " + std::to_string(c) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }

    SplitIndices out;
    for (auto& [cls, idx] : groups) {
        std::mt19937_64 rng(split_seed(spec.seed, 0x517A5ULL + static_cast<std::uint64_t>(cls)));
        shuffle_inplace(idx, rng);

        const Scalar n = static_cast<Scalar>(idx.size());
        const Scalar exact[3] = {spec.train * n, spec.val * n, spec.test * n};
        Index take[3];
        Scalar rem[3];
        Index assigned = 0;
        for (int k = 0; k < 3; ++k) {
            take[k] = static_cast<Index>(std::floor(exact[k] + 1e-9));
            rem[k] = exact[k] - static_cast<Scalar>(take[k]);
            assigned += take[k];
        }
        Index left = static_cast<Index>(idx.size()) - assigned;
        while (left > 0) {  // largest remainder; ties resolved train > val > test
            int best = 0;
            for (int k = 1; k < 3; ++k)
                if (rem[k] > rem[best]) best = k;
            ++take[best];
            rem[best] = -1;
            --left;
        }

        std::size_t pos = 0;
        for (Index i = 0; i < take[0]; ++i) out.train.push_back(idx[pos++]);
        for (Index i = 0; i < take[1]; ++i) out.val.push_back(idx[pos++]);
        for (Index i = 0; i < take[2]; ++i) out.test.push_back(idx[pos++]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

}  // namespace harfuse
