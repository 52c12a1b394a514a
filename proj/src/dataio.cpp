#include "harfuse/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "harfuse/preprocess.hpp"

namespace harfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(Scalar v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void parse_fail(const fs::path& file, std::size_t line, const std::string& what) {
    throw DataError(file.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

Scalar parse_scalar(const std::string& field, const fs::path& file, std::size_t line) {
    Scalar v = 0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        parse_fail(file, line, "expected a number, got '" + field + "'");
    return v;
}

int parse_int(const std::string& field, const fs::path& file, std::size_t line) {
    int v = 0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        parse_fail(file, line, "expected an integer, got '" + field + "'");
    return v;
}

// Reads all non-empty lines; strips a trailing '\r' so CRLF files parse.
std::vector<std::string> read_lines(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool glob_match(const std::string& name, const std::string& pattern) {
    std::size_t n = 0, p = 0, star = std::string::npos, mark = 0;
    while (n < name.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
            ++n;
            ++p;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = n;
        } else if (star != std::string::npos) {
            p = star + 1;
            n = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

}  // namespace

// --- manifest -------------------------------------------------------------------

DatasetManifest load_manifest(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open manifest " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + file.string() + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.class_names = j.at("classes").get<std::vector<std::string>>();
        m.keypoint_glob = j.at("keypoint_glob").get<std::string>();
        m.inertial_glob = j.at("inertial_glob").get<std::string>();
        m.label_file = j.at("label_file").get<std::string>();
        m.keypoint_rate_hz = j.at("keypoint_rate_hz").get<Scalar>();
        m.inertial_rate_hz = j.at("inertial_rate_hz").get<Scalar>();
        m.window_profile_name = j.at("window_profile").get<std::string>();
        m.inertial_channels = j.at("inertial_channels").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError("manifest " + file.string() + " missing fields: " + e.what());
    }
    if (m.keypoint_rate_hz <= 0 || m.inertial_rate_hz <= 0)
        throw ConfigError("manifest rates must be positive");
    if (m.class_names.empty()) throw ConfigError("manifest class list is empty");
    if (m.inertial_channels.empty()) throw ConfigError("manifest channel schema is empty");
    window_profile(m.window_profile_name);  // must resolve
    return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& file) {
    json j;
    j["name"] = manifest.name;
    j["classes"] = manifest.class_names;
    j["keypoint_glob"] = manifest.keypoint_glob;
    j["inertial_glob"] = manifest.inertial_glob;
    j["label_file"] = manifest.label_file;
    j["keypoint_rate_hz"] = manifest.keypoint_rate_hz;
    j["inertial_rate_hz"] = manifest.inertial_rate_hz;
    j["window_profile"] = manifest.window_profile_name;
    j["inertial_channels"] = manifest.inertial_channels;
    std::ofstream out(file);
    if (!out) throw DataError("cannot write manifest " + file.string());
    out << j.dump(2) << '\n';
}

// --- CSV readers -----------------------------------------------------------------

std::vector<KeypointFrame> load_keypoint_csv(const fs::path& file) {
    const auto lines = read_lines(file);
    if (lines.empty()) throw DataError(file.string() + ": missing header row");
    const std::size_t cols = 2 + 3 * static_cast<std::size_t>(kNumJoints);
    if (split_csv(lines[0]).size() != cols)
        parse_fail(file, 1, "keypoint header must have " + std::to_string(cols) + " columns");

    std::vector<KeypointFrame> frames;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const auto fields = split_csv(lines[i]);
        if (fields.size() != cols)
            parse_fail(file, line_no,
                       "expected " + std::to_string(cols) + " columns, got " +
                           std::to_string(fields.size()));
        KeypointFrame f;
        f.timestamp = parse_scalar(fields[0], file, line_no);
        parse_int(fields[1], file, line_no);  // person id: validated, not stored
        for (Index j = 0; j < kNumJoints; ++j) {
            const std::size_t base = 2 + 3 * static_cast<std::size_t>(j);
            f.joints[static_cast<std::size_t>(j)] = {parse_scalar(fields[base], file, line_no),
                                                     parse_scalar(fields[base + 1], file, line_no),
                                                     parse_scalar(fields[base + 2], file, line_no)};
        }
        if (!frames.empty() && f.timestamp < frames.back().timestamp)
            parse_fail(file, line_no, "timestamps must be non-decreasing");
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<InertialSample> load_inertial_csv(const fs::path& file) {
    const auto lines = read_lines(file);
    if (lines.empty()) throw DataError(file.string() + ": missing header row");
    const std::size_t cols = split_csv(lines[0]).size();
    if (cols < 7) parse_fail(file, 1, "inertial header needs timestamp plus >= 6 channels");

    std::vector<InertialSample> samples;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const auto fields = split_csv(lines[i]);
        if (fields.size() != cols)
            parse_fail(file, line_no,
                       "expected " + std::to_string(cols) + " columns, got " +
                           std::to_string(fields.size()));
        InertialSample s;
        s.timestamp = parse_scalar(fields[0], file, line_no);
        s.channels.reserve(cols - 1);
        for (std::size_t c = 1; c < cols; ++c)
            s.channels.push_back(parse_scalar(fields[c], file, line_no));
        if (!samples.empty() && s.timestamp <= samples.back().timestamp)
            parse_fail(file, line_no, "timestamps must be strictly increasing");
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<LabelRow> load_label_csv(const fs::path& file) {
    const auto lines = read_lines(file);
    if (lines.empty()) throw DataError(file.string() + ": missing header row");
    if (split_csv(lines[0]).size() != 4)
        parse_fail(file, 1, "label header must be sequence_id,class_id,start_ts,end_ts");

    std::vector<LabelRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const auto fields = split_csv(lines[i]);
        if (fields.size() != 4) parse_fail(file, line_no, "expected 4 columns");
        LabelRow r;
        r.sequence_id = fields[0];
        r.class_id = parse_int(fields[1], file, line_no);
        r.start_ts = parse_scalar(fields[2], file, line_no);
        r.end_ts = parse_scalar(fields[3], file, line_no);
        if (r.sequence_id.empty()) parse_fail(file, line_no, "empty sequence id");
        if (r.end_ts < r.start_ts) parse_fail(file, line_no, "end_ts precedes start_ts");
        rows.push_back(std::move(r));
    }
    return rows;
}

// --- CSV writers ------------------------------------------------------------------

void save_keypoint_csv(const std::vector<KeypointFrame>& frames, const fs::path& file) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write " + file.string());
    out << "timestamp,person_id";
    for (Index j = 0; j < kNumJoints; ++j)
        out << ",j" << j << "_x,j" << j << "_y,j" << j << "_c";
    out << '\n';
    for (const auto& f : frames) {
        out << fmt(f.timestamp) << ",0";
        for (const auto& jt : f.joints)
            out << ',' << fmt(jt.x) << ',' << fmt(jt.y) << ',' << fmt(jt.c);
        out << '\n';
    }
}

void save_inertial_csv(const std::vector<InertialSample>& samples,
                       const std::vector<std::string>& channels, const fs::path& file) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write " + file.string());
    out << "timestamp";
    for (const auto& c : channels) out << ',' << c;
    out << '\n';
    for (const auto& s : samples) {
        if (s.channels.size() != channels.size())
            throw DataError("sample channel count does not match the schema for " + file.string());
        out << fmt(s.timestamp);
        for (Scalar v : s.channels) out << ',' << fmt(v);
        out << '\n';
    }
}

void save_label_csv(const std::vector<LabelRow>& rows, const fs::path& file) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write " + file.string());
    out << "sequence_id,class_id,start_ts,end_ts\n";
    for (const auto& r : rows)
        out << r.sequence_id << ',' << r.class_id << ',' << fmt(r.start_ts) << ','
            << fmt(r.end_ts) << '\n';
}

// --- globbing ---------------------------------------------------------------------

std::vector<fs::path> expand_glob(const fs::path& base_dir, const std::string& pattern) {
    if (pattern.empty()) return {};
    const fs::path pat(pattern);
    const std::string leaf = pat.filename().string();
    const fs::path dir = base_dir / pat.parent_path();
    if (pat.parent_path().string().find_first_of("*?") != std::string::npos)
        throw ConfigError("glob wildcards are only supported in the filename: " + pattern);

    std::vector<fs::path> out;
    if (leaf.find_first_of("*?") == std::string::npos) {
        const fs::path p = dir / leaf;
        if (fs::exists(p)) out.push_back(p);
        return out;
    }
    if (!fs::is_directory(dir)) return {};
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (glob_match(entry.path().filename().string(), leaf)) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// --- dataset assembly ----------------------------------------------------------------

Dataset load_dataset(const DatasetManifest& manifest, const fs::path& base_dir) {
    Dataset ds;
    ds.name = manifest.name;
    ds.class_names = manifest.class_names;

    std::map<std::string, fs::path> pose_files, inertial_files;
    for (const auto& p : expand_glob(base_dir, manifest.keypoint_glob))
        pose_files[p.stem().string()] = p;
    for (const auto& p : expand_glob(base_dir, manifest.inertial_glob))
        inertial_files[p.stem().string()] = p;

    std::vector<LabelRow> labels;
    if (!manifest.label_file.empty()) labels = load_label_csv(base_dir / manifest.label_file);

    const int n_classes = static_cast<int>(manifest.class_names.size());
    for (const auto& row : labels) {
        if (row.class_id < 0 || row.class_id >= n_classes)
            throw DataError("label class " + std::to_string(row.class_id) + " for sequence " +
                            row.sequence_id + " is outside the manifest class list");
        const auto pit = pose_files.find(row.sequence_id);
        const auto iit = inertial_files.find(row.sequence_id);
        if (pit == pose_files.end() || iit == inertial_files.end()) {
            std::cerr << "harfuse: skipping segment " << row.sequence_id
                      << " (missing " << (pit == pose_files.end() ? "keypoint" : "inertial")
                      << " stream)\n";
            continue;
        }
        SequenceRecord rec;
        rec.id = row.sequence_id;
        rec.class_id = row.class_id;
        for (const auto& f : load_keypoint_csv(pit->second))
            if (f.timestamp >= row.start_ts && f.timestamp <= row.end_ts) rec.pose.push_back(f);
        for (const auto& s : load_inertial_csv(iit->second))
            if (s.timestamp >= row.start_ts && s.timestamp <= row.end_ts)
                rec.inertial.push_back(s);
        if (rec.pose.empty() || rec.inertial.empty()) {
            std::cerr << "harfuse: skipping segment " << row.sequence_id
                      << " (no samples inside the labeled interval)\n";
            continue;
        }
        ds.sequences.push_back(std::move(rec));
    }
    return ds;
}

DatasetManifest save_dataset(const Dataset& dataset, Scalar keypoint_rate_hz,
                             Scalar inertial_rate_hz, const std::string& window_profile_name,
                             const fs::path& dir) {
    fs::create_directories(dir / "pose");
    fs::create_directories(dir / "inertial");

    std::vector<std::string> channels{"ax", "ay", "az", "gx", "gy", "gz"};
    for (const auto& rec : dataset.sequences)
        if (!rec.inertial.empty() && rec.inertial[0].channels.size() != channels.size()) {
            channels.clear();
            for (std::size_t c = 0; c < rec.inertial[0].channels.size(); ++c)
                channels.push_back("ch" + std::to_string(c));
            break;
        }

    std::vector<LabelRow> labels;
    for (const auto& rec : dataset.sequences) {
        save_keypoint_csv(rec.pose, dir / "pose" / (rec.id + ".csv"));
        save_inertial_csv(rec.inertial, channels, dir / "inertial" / (rec.id + ".csv"));
        LabelRow row;
        row.sequence_id = rec.id;
        row.class_id = rec.class_id;
        Scalar lo = std::numeric_limits<Scalar>::infinity(), hi = -lo;
        for (const auto& f : rec.pose) {
            lo = std::min(lo, f.timestamp);
            hi = std::max(hi, f.timestamp);
        }
        for (const auto& s : rec.inertial) {
            lo = std::min(lo, s.timestamp);
            hi = std::max(hi, s.timestamp);
        }
        row.start_ts = lo;
        row.end_ts = hi;
        labels.push_back(std::move(row));
    }
    save_label_csv(labels, dir / "labels.csv");

    DatasetManifest m;
    m.name = dataset.name;
    m.class_names = dataset.class_names;
    m.keypoint_glob = "pose/*.csv";
    m.inertial_glob = "inertial/*.csv";
    m.label_file = "labels.csv";
    m.keypoint_rate_hz = keypoint_rate_hz;
    m.inertial_rate_hz = inertial_rate_hz;
    m.window_profile_name = window_profile_name;
    m.inertial_channels = channels;
    save_manifest(m, dir / "manifest.json");
    return m;
}

}  // namespace harfuse
