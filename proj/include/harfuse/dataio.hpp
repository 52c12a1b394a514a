#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "harfuse/common.hpp"
#include "harfuse/preprocess.hpp"

namespace harfuse {

// One labeled recording segment: both sensor streams bound by a shared
// sequence id. Keypoint rows may share a timestamp (one row per person).
struct SequenceRecord {
    std::string id;
    int class_id = -1;
    std::vector<KeypointFrame> pose;
    std::vector<InertialSample> inertial;
};

struct Dataset {
    std::string name;
    std::vector<std::string> class_names;
    std::vector<SequenceRecord> sequences;
};

// Dataset manifest (stored as JSON): dense class list, per-stream file globs
// (wildcards allowed in the filename component only), native sample rates,
// a window-profile preset name, and the inertial channel schema.
struct DatasetManifest {
    std::string name;
    std::vector<std::string> class_names;
    std::string keypoint_glob;
    std::string inertial_glob;
    std::string label_file;
    Scalar keypoint_rate_hz = 15.0;
    Scalar inertial_rate_hz = 50.0;
    std::string window_profile_name = "cmhad";
    std::vector<std::string> inertial_channels{"ax", "ay", "az", "gx", "gy", "gz"};
};

DatasetManifest load_manifest(const std::filesystem::path& file);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);

// CSV schemas (UTF-8, decimal dot, one record per line, header row required):
//   keypoints: timestamp,person_id,j0_x,j0_y,j0_c,...,j24_x,j24_y,j24_c
//   inertial:  timestamp,ax,ay,az,gx,gy,gz[,...]
//   labels:    sequence_id,class_id,start_ts,end_ts
// Keypoint timestamps must be non-decreasing (equal timestamps mean several
// people in one frame); inertial timestamps strictly increasing. Violations
// and malformed rows raise DataError naming the file and line.
std::vector<KeypointFrame> load_keypoint_csv(const std::filesystem::path& file);
std::vector<InertialSample> load_inertial_csv(const std::filesystem::path& file);

struct LabelRow {
    std::string sequence_id;
    int class_id = 0;
    Scalar start_ts = 0;
    Scalar end_ts = 0;
};
std::vector<LabelRow> load_label_csv(const std::filesystem::path& file);

void save_keypoint_csv(const std::vector<KeypointFrame>& frames,
                       const std::filesystem::path& file);
void save_inertial_csv(const std::vector<InertialSample>& samples,
                       const std::vector<std::string>& channels,
                       const std::filesystem::path& file);
void save_label_csv(const std::vector<LabelRow>& rows, const std::filesystem::path& file);

// Expands a glob relative to base_dir. Wildcards (* and ?) may appear in the
// filename component only; results are sorted. A missing directory or an
// empty pattern yields an empty list.
std::vector<std::filesystem::path> expand_glob(const std::filesystem::path& base_dir,
                                               const std::string& pattern);

// Loads every labeled segment in the manifest: each label row binds to the
// keypoint and inertial files whose stem equals its sequence id, cropped to
// [start_ts, end_ts]. Segments missing either stream are logged to stderr
// and skipped. Empty globs produce an empty dataset without error.
Dataset load_dataset(const DatasetManifest& manifest, const std::filesystem::path& base_dir);

// Writes `pose/<id>.csv`, `inertial/<id>.csv`, `labels.csv`, and
// `manifest.json` under dir; returns the manifest that reads it back.
DatasetManifest save_dataset(const Dataset& dataset, Scalar keypoint_rate_hz,
                             Scalar inertial_rate_hz, const std::string& window_profile_name,
                             const std::filesystem::path& dir);

}  // namespace harfuse
