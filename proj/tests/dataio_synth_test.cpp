#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "harfuse/dataio.hpp"
#include "harfuse/synthetic.hpp"
#include "oracle_utils.hpp"

using namespace harfuse;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file);
    out << text;
}

std::string keypoint_header() {
    std::string h = "timestamp,person_id";
    for (Index j = 0; j < kNumJoints; ++j) {
        const std::string js = std::to_string(j);
        h += ",j" + js + "_x,j" + js + "_y,j" + js + "_c";
    }
    return h;
}

std::string keypoint_row(Scalar t, Scalar x0) {
    std::string row = std::to_string(t) + ",0";
    for (Index j = 0; j < kNumJoints; ++j) {
        row += "," + std::to_string(x0 + static_cast<Scalar>(j)) + ",2.5,0.9";
    }
    return row;
}

bool pose_equal(const std::vector<KeypointFrame>& a, const std::vector<KeypointFrame>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].timestamp != b[i].timestamp) return false;
        for (std::size_t j = 0; j < static_cast<std::size_t>(kNumJoints); ++j) {
            if (a[i].joints[j].x != b[i].joints[j].x) return false;
            if (a[i].joints[j].y != b[i].joints[j].y) return false;
            if (a[i].joints[j].c != b[i].joints[j].c) return false;
        }
    }
    return true;
}

bool inertial_equal(const std::vector<InertialSample>& a, const std::vector<InertialSample>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].timestamp != b[i].timestamp) return false;
        if (a[i].channels != b[i].channels) return false;
    }
    return true;
}

std::vector<Scalar> flat_pose(const SequenceRecord& r) {
    std::vector<Scalar> v;
    for (const auto& f : r.pose)
        for (const auto& j : f.joints) {
            v.push_back(j.x);
            v.push_back(j.y);
        }
    return v;
}

std::vector<Scalar> flat_inertial(const SequenceRecord& r) {
    std::vector<Scalar> v;
    for (const auto& s : r.inertial) v.insert(v.end(), s.channels.begin(), s.channels.end());
    return v;
}

// leave-one-out 1-NN accuracy over the given (features, labels) set
double one_nn_accuracy(const std::vector<std::vector<Scalar>>& feats,
                       const std::vector<int>& labels) {
    int hits = 0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = i;
        for (std::size_t j = 0; j < feats.size(); ++j) {
            if (j == i) continue;
            double d = 0;
            for (std::size_t k = 0; k < feats[i].size(); ++k) {
                const double diff = feats[i][k] - feats[j][k];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                arg = j;
            }
        }
        hits += labels[arg] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(feats.size());
}

}  // namespace

TEST_CASE("sinusoid sum: derivatives match the analytic formulas") {
    SinusoidSum s;
    s.amp = {1.7, 0.6};
    s.omega = {3.1, 5.9};
    s.phase = {0.4, 2.2};
    for (int i = 0; i < 50; ++i) {
        const Scalar t = -1.0 + 0.08 * i;
        Scalar v = 0, g1 = 0, g2 = 0;
        for (int k = 0; k < 2; ++k) {
            v += s.amp[k] * std::sin(s.omega[k] * t + s.phase[k]);
            g1 += s.amp[k] * s.omega[k] * std::cos(s.omega[k] * t + s.phase[k]);
            g2 -= s.amp[k] * s.omega[k] * s.omega[k] * std::sin(s.omega[k] * t + s.phase[k]);
        }
        CHECK(std::abs(s.value(t) - v) < 1e-12);
        CHECK(std::abs(s.d1(t) - g1) < 1e-12);
        CHECK(std::abs(s.d2(t) - g2) < 1e-12);
    }
}

TEST_CASE("keypoint csv: parsed floats equal the file text") {
    const fs::path dir = fresh_dir("harfuse_dataio_parse");
    std::string text = keypoint_header() + "\n";
    text += "0.5,0";
    for (Index j = 0; j < kNumJoints; ++j) text += ",0.1,0.25,1";
    text += "\n1.5,0";
    for (Index j = 0; j < kNumJoints; ++j) text += ",-3.75,1e-7,0.5";
    text += "\n2,1";
    for (Index j = 0; j < kNumJoints; ++j) text += ",100,200.125,0";
    text += "\n";
    write_text(dir / "seq.csv", text);

    const auto frames = load_keypoint_csv(dir / "seq.csv");
    REQUIRE(frames.size() == 3);
    CHECK(frames[0].timestamp == 0.5);
    CHECK(frames[0].joints[7].x == 0.1);
    CHECK(frames[0].joints[7].y == 0.25);
    CHECK(frames[0].joints[7].c == 1.0);
    CHECK(frames[1].joints[24].x == -3.75);
    CHECK(frames[1].joints[24].y == 1e-7);
    CHECK(frames[2].timestamp == 2.0);
    CHECK(frames[2].joints[0].y == 200.125);
}

TEST_CASE("keypoint csv: save/load round trip is bit exact") {
    const fs::path dir = fresh_dir("harfuse_dataio_rt");
    std::vector<KeypointFrame> frames(3);
    oracle::Uniform rng(11);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        frames[i].timestamp = static_cast<Scalar>(i) / 3.0;
        for (auto& j : frames[i].joints) {
            j.x = rng.next(-500, 500);
            j.y = rng.next(-500, 500);
            j.c = rng.next(0, 1);
        }
    }
    frames[1].joints[3] = {1e300, -1e-300, 0.1};
    save_keypoint_csv(frames, dir / "rt.csv");
    CHECK(pose_equal(load_keypoint_csv(dir / "rt.csv"), frames));
}

TEST_CASE("inertial csv: round trip, extra channels, monotonicity") {
    const fs::path dir = fresh_dir("harfuse_dataio_imu");
    std::vector<InertialSample> samples(4);
    oracle::Uniform rng(12);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].timestamp = static_cast<Scalar>(i) * 0.02;
        for (int c = 0; c < 8; ++c) samples[i].channels.push_back(rng.next(-20, 20));
    }
    save_inertial_csv(samples, {"ax", "ay", "az", "gx", "gy", "gz", "mx", "my"}, dir / "imu.csv");
    CHECK(inertial_equal(load_inertial_csv(dir / "imu.csv"), samples));

    write_text(dir / "bad.csv",
               "timestamp,ax,ay,az,gx,gy,gz\n"
               "0,1,2,3,4,5,6\n"
               "0.1,1,2,3,4,5,6\n"
               "0.1,1,2,3,4,5,6\n");  // repeated timestamp at line 4
    try {
        load_inertial_csv(dir / "bad.csv");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":4:") != std::string::npos);
    }
}

TEST_CASE("keypoint csv: malformed rows name the file and line") {
    const fs::path dir = fresh_dir("harfuse_dataio_bad");

    write_text(dir / "mono.csv", keypoint_header() + "\n" + keypoint_row(0.0, 1) + "\n" +
                                     keypoint_row(1.0, 1) + "\n" + keypoint_row(0.5, 1) + "\n");
    try {
        load_keypoint_csv(dir / "mono.csv");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(":4:") != std::string::npos);
        CHECK(msg.find("mono.csv") != std::string::npos);
    }

    write_text(dir / "short.csv", keypoint_header() + "\n0.5,0,1,2\n");
    CHECK_THROWS_AS(load_keypoint_csv(dir / "short.csv"), DataError);

    std::string bad_num = keypoint_header() + "\n" + keypoint_row(0.0, 1) + "\n";
    bad_num += "abc,0";
    for (Index j = 0; j < kNumJoints; ++j) bad_num += ",1,2,0.9";
    write_text(dir / "nan.csv", bad_num + "\n");
    CHECK_THROWS_AS(load_keypoint_csv(dir / "nan.csv"), DataError);

    CHECK_THROWS_AS(load_keypoint_csv(dir / "missing.csv"), DataError);
}

TEST_CASE("label csv: round trip and validation") {
    const fs::path dir = fresh_dir("harfuse_dataio_labels");
    std::vector<LabelRow> rows{{"a01", 0, 0.0, 2.5}, {"a02", 3, 0.5, 1.25}};
    save_label_csv(rows, dir / "labels.csv");
    const auto back = load_label_csv(dir / "labels.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].sequence_id == "a01");
    CHECK(back[1].class_id == 3);
    CHECK(back[1].start_ts == 0.5);
    CHECK(back[1].end_ts == 1.25);

    write_text(dir / "rev.csv", "sequence_id,class_id,start_ts,end_ts\nx,0,2.0,1.0\n");
    CHECK_THROWS_AS(load_label_csv(dir / "rev.csv"), DataError);
}

TEST_CASE("expand_glob: wildcard matching in the filename component") {
    const fs::path dir = fresh_dir("harfuse_dataio_glob");
    fs::create_directories(dir / "sub");
    write_text(dir / "sub/a.csv", "x");
    write_text(dir / "sub/b.csv", "x");
    write_text(dir / "sub/b.txt", "x");
    write_text(dir / "sub/c1.csv", "x");

    auto hits = expand_glob(dir, "sub/*.csv");
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].filename() == "a.csv");
    CHECK(hits[2].filename() == "c1.csv");

    CHECK(expand_glob(dir, "sub/?.csv").size() == 2);
    CHECK(expand_glob(dir, "nosuch/*.csv").empty());
    CHECK(expand_glob(dir, "").empty());
    CHECK(expand_glob(dir, "sub/a.csv").size() == 1);
    CHECK_THROWS_AS(expand_glob(dir, "*/a.csv"), ConfigError);
}

TEST_CASE("load_dataset: empty globs give an empty dataset without error") {
    const fs::path dir = fresh_dir("harfuse_dataio_empty");
    DatasetManifest m;
    m.name = "empty";
    m.class_names = {"a", "b"};
    m.keypoint_glob = "pose/*.csv";
    m.inertial_glob = "inertial/*.csv";
    m.label_file = "";
    const Dataset ds = load_dataset(m, dir);
    CHECK(ds.sequences.empty());
    CHECK(ds.class_names.size() == 2);
}

TEST_CASE("dataset: save/load round trip is bit exact") {
    SyntheticConfig cfg;
    cfg.n_classes = 2;
    cfg.sequences_per_class = 3;
    cfg.seq_seconds = 1.0;
    cfg.vision_ambiguous = {};
    cfg.inertial_ambiguous = {};
    cfg.seed = 99;
    const Dataset ds = generate_synthetic(cfg);

    const fs::path dir = fresh_dir("harfuse_dataio_roundtrip");
    save_dataset(ds, cfg.keypoint_rate_hz, cfg.inertial_rate_hz, "cmhad", dir);
    const DatasetManifest m = load_manifest(dir / "manifest.json");
    CHECK(m.keypoint_rate_hz == 15.0);
    CHECK(m.window_profile_name == "cmhad");

    const Dataset back = load_dataset(m, dir);
    REQUIRE(back.sequences.size() == ds.sequences.size());
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
        CHECK(back.sequences[i].id == ds.sequences[i].id);
        CHECK(back.sequences[i].class_id == ds.sequences[i].class_id);
        CHECK(pose_equal(back.sequences[i].pose, ds.sequences[i].pose));
        CHECK(inertial_equal(back.sequences[i].inertial, ds.sequences[i].inertial));
    }
}

TEST_CASE("load_dataset: a segment missing one stream is skipped, not fatal") {
    SyntheticConfig cfg;
    cfg.n_classes = 2;
    cfg.sequences_per_class = 1;
    cfg.seq_seconds = 1.0;
    cfg.vision_ambiguous = {};
    cfg.inertial_ambiguous = {};
    const Dataset ds = generate_synthetic(cfg);
    const fs::path dir = fresh_dir("harfuse_dataio_skip");
    save_dataset(ds, 15.0, 50.0, "cmhad", dir);
    fs::remove(dir / "inertial" / "c1_s000.csv");

    const Dataset back = load_dataset(load_manifest(dir / "manifest.json"), dir);
    REQUIRE(back.sequences.size() == 1);
    CHECK(back.sequences[0].id == "c0_s000");
}

TEST_CASE("generate_synthetic: identical seeds give bit-identical datasets") {
    SyntheticConfig cfg;
    cfg.sequences_per_class = 4;
    cfg.seed = 1234;
    const Dataset a = generate_synthetic(cfg);
    const Dataset b = generate_synthetic(cfg);
    REQUIRE(a.sequences.size() == b.sequences.size());
    REQUIRE(a.sequences.size() == 24);
    for (std::size_t i = 0; i < a.sequences.size(); ++i) {
        CHECK(pose_equal(a.sequences[i].pose, b.sequences[i].pose));
        CHECK(inertial_equal(a.sequences[i].inertial, b.sequences[i].inertial));
    }

    cfg.seed = 1235;
    const Dataset c = generate_synthetic(cfg);
    CHECK_FALSE(pose_equal(a.sequences[0].pose, c.sequences[0].pose));
}

TEST_CASE("generate_synthetic: ambiguous pairs match exactly in the shared modality") {
    SyntheticConfig cfg;
    cfg.sequences_per_class = 5;
    cfg.seed = 7;
    const Dataset ds = generate_synthetic(cfg);
    auto rec = [&](int cls, int i) -> const SequenceRecord& {
        return ds.sequences[static_cast<std::size_t>(cls * cfg.sequences_per_class + i)];
    };

    for (int i = 0; i < cfg.sequences_per_class; ++i) {
        // (0,1) vision-ambiguous: identical keypoints, distinct inertial
        CHECK(pose_equal(rec(0, i).pose, rec(1, i).pose));
        CHECK_FALSE(inertial_equal(rec(0, i).inertial, rec(1, i).inertial));
        // (2,3) inertial-ambiguous: identical inertial, distinct keypoints
        CHECK(inertial_equal(rec(2, i).inertial, rec(3, i).inertial));
        CHECK_FALSE(pose_equal(rec(2, i).pose, rec(3, i).pose));
    }

    // accelerometer x means separate inertial identities by the margin
    auto mean_ax = [](const SequenceRecord& r) {
        Scalar m = 0;
        for (const auto& s : r.inertial) m += s.channels[0];
        return m / static_cast<Scalar>(r.inertial.size());
    };
    const Scalar gap = std::abs(mean_ax(rec(0, 0)) - mean_ax(rec(1, 0)));
    CHECK(gap > cfg.ambiguity_margin * 0.5);
}

TEST_CASE("generate_synthetic: a pair identical in both modalities is rejected") {
    SyntheticConfig cfg;
    cfg.vision_ambiguous = {{0, 1}};
    cfg.inertial_ambiguous = {{1, 0}};
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);

    // collapse through a chain: 0~1~2 in vision, 0~2 in inertial
    SyntheticConfig chain;
    chain.vision_ambiguous = {{0, 1}, {1, 2}};
    chain.inertial_ambiguous = {{0, 2}};
    CHECK_THROWS_AS(resolve_identities(chain), ConfigError);

    SyntheticConfig ok;
    ok.vision_ambiguous = {{0, 1}};
    ok.inertial_ambiguous = {{1, 2}};
    CHECK_NOTHROW(resolve_identities(ok));

    SyntheticConfig bad_pair;
    bad_pair.vision_ambiguous = {{0, 0}};
    CHECK_THROWS_AS(resolve_identities(bad_pair), ConfigError);
    bad_pair.vision_ambiguous = {{0, 9}};
    CHECK_THROWS_AS(resolve_identities(bad_pair), ConfigError);
}

TEST_CASE("generate_synthetic: noise-free output equals the analytic template") {
    SyntheticConfig cfg;
    cfg.n_classes = 2;
    cfg.sequences_per_class = 1;
    cfg.seq_seconds = 1.0;
    cfg.pose_noise_sigma = 0;
    cfg.inertial_noise_sigma = 0;
    cfg.time_jitter_frac = 0;
    cfg.amp_jitter = 0;
    cfg.ambiguity_margin = 1.5;
    cfg.vision_ambiguous = {};
    cfg.inertial_ambiguous = {};
    const Dataset ds = generate_synthetic(cfg);

    for (int c = 0; c < 2; ++c) {
        const MotionTemplate tpl = class_template(cfg, c);
        const auto& rec = ds.sequences[static_cast<std::size_t>(c)];
        for (const auto& f : rec.pose) {
            for (std::size_t j = 0; j < static_cast<std::size_t>(kNumJoints); ++j) {
                CHECK(std::abs(f.joints[j].x - (tpl.base_x[j] + tpl.joint_x[j].value(f.timestamp))) <
                      1e-12);
                CHECK(std::abs(f.joints[j].y - (tpl.base_y[j] + tpl.joint_y[j].value(f.timestamp))) <
                      1e-12);
            }
        }
        CHECK(tpl.accel_bias == 1.5 * c);
        for (const auto& s : rec.inertial) {
            const Scalar t = s.timestamp;
            CHECK(std::abs(s.channels[0] - (tpl.position[0].d2(t) + tpl.accel_bias)) < 1e-12);
            CHECK(std::abs(s.channels[1] - tpl.position[1].d2(t)) < 1e-12);
            CHECK(std::abs(s.channels[2] - tpl.position[2].d2(t)) < 1e-12);
            CHECK(std::abs(s.channels[3] - tpl.orientation[0].d1(t)) < 1e-12);
            CHECK(std::abs(s.channels[5] - tpl.orientation[2].d1(t)) < 1e-12);
        }
    }
}

TEST_CASE("generate_synthetic: 1-NN separates pairs only in the informative modality") {
    SyntheticConfig cfg;
    cfg.sequences_per_class = 20;
    cfg.seed = 21;
    const Dataset ds = generate_synthetic(cfg);

    auto pair_accuracy = [&](int ca, int cb, bool use_pose) {
        std::vector<std::vector<Scalar>> feats;
        std::vector<int> labels;
        for (const auto& rec : ds.sequences) {
            if (rec.class_id != ca && rec.class_id != cb) continue;
            feats.push_back(use_pose ? flat_pose(rec) : flat_inertial(rec));
            labels.push_back(rec.class_id);
        }
        return one_nn_accuracy(feats, labels);
    };

    // vision-ambiguous pair (0,1): chance in pose, separable in inertial
    CHECK(pair_accuracy(0, 1, true) <= 0.6);
    CHECK(pair_accuracy(0, 1, false) >= 0.9);
    // inertial-ambiguous pair (2,3): chance in inertial, separable in pose
    CHECK(pair_accuracy(2, 3, false) <= 0.6);
    CHECK(pair_accuracy(2, 3, true) >= 0.9);
}

TEST_CASE("generate_synthetic: streams always share an alignable time range") {
    SyntheticConfig cfg;
    cfg.sequences_per_class = 2;
    cfg.seed = 31;
    const Dataset ds = generate_synthetic(cfg);
    for (const auto& rec : ds.sequences) {
        const AlignedStreams aligned = resample_to_common_rate(rec.pose, rec.inertial, 15.0);
        CHECK(aligned.timestamps.size() == 30);
        CHECK(aligned.pose.size() == aligned.timestamps.size());
        CHECK(aligned.inertial.size() == aligned.timestamps.size());
    }
}

TEST_CASE("manifest: rejects non-positive rates and unknown window profiles") {
    const fs::path dir = fresh_dir("harfuse_dataio_manifest");
    DatasetManifest m;
    m.name = "x";
    m.class_names = {"a"};
    m.keypoint_glob = "pose/*.csv";
    m.inertial_glob = "inertial/*.csv";
    m.label_file = "labels.csv";
    save_manifest(m, dir / "ok.json");
    CHECK_NOTHROW(load_manifest(dir / "ok.json"));

    m.keypoint_rate_hz = 0;
    save_manifest(m, dir / "rate.json");
    CHECK_THROWS_AS(load_manifest(dir / "rate.json"), ConfigError);

    m.keypoint_rate_hz = 15;
    m.window_profile_name = "nosuch";
    save_manifest(m, dir / "prof.json");
    CHECK_THROWS_AS(load_manifest(dir / "prof.json"), ConfigError);

    write_text(dir / "broken.json", "{ not json");
    CHECK_THROWS_AS(load_manifest(dir / "broken.json"), DataError);
}
