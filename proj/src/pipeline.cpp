#include "harfuse/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "harfuse/checkpoint.hpp"
#include "harfuse/preprocess.hpp"
#include "harfuse/svg.hpp"

namespace harfuse {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Frame geometry assumed for the subject tracker's center region.
constexpr Scalar kFrameWidth = 640;
constexpr Scalar kFrameHeight = 480;

// ---- small file / formatting helpers ----------------------------------------

std::string fmt(Scalar v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + file.string());
    out << text;
    if (!out) throw DataError("short write to " + file.string());
}

std::vector<std::string> read_lines(const fs::path& file) {
    std::istringstream in(read_text(file));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

Scalar parse_scalar(const std::string& text, const fs::path& file) {
    Scalar v = 0;
    const char* b = text.data();
    const char* e = b + text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e)
        throw DataError(file.string() + ": malformed number '" + text + "'");
    return v;
}

std::int64_t parse_count(const std::string& text, const fs::path& file) {
    std::int64_t v = 0;
    const char* b = text.data();
    const char* e = b + text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e || v < 0)
        throw DataError(file.string() + ": malformed count '" + text + "'");
    return v;
}

std::string fnv1a_hex(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

// ---- artifact layout ---------------------------------------------------------

fs::path dataset_dir(const fs::path& out) { return out / "dataset"; }
fs::path windows_manifest_path(const fs::path& out) { return out / "windows.ckpt.json"; }
fs::path windows_meta_path(const fs::path& out) { return out / "windows_meta.json"; }
fs::path checkpoint_path(const fs::path& out, const std::string& stream, const std::string& kind) {
    return out / (stream + "_" + kind + ".ckpt.json");
}
fs::path history_csv_path(const fs::path& out, const std::string& stream) {
    return out / ("history_" + stream + ".csv");
}
fs::path history_svg_path(const fs::path& out, const std::string& stream) {
    return out / ("history_" + stream + ".svg");
}
fs::path scores_path(const fs::path& out, const std::string& stream) {
    return out / ("scores_" + stream + ".csv");
}
fs::path metrics_path(const fs::path& out) { return out / "metrics.csv"; }
fs::path table_path(const fs::path& out) { return out / "comparison_table.txt"; }
fs::path confusion_csv_path(const fs::path& out, const std::string& name) {
    return out / ("confusion_" + name + ".csv");
}
fs::path confusion_svg_path(const fs::path& out, const std::string& name) {
    return out / ("confusion_" + name + ".svg");
}
fs::path failed_marker_path(const fs::path& out) { return out / "FAILED"; }

// ---- config ------------------------------------------------------------------

std::vector<std::pair<int, int>> parse_pairs(const json& arr, const std::string& key) {
    if (!arr.is_array()) throw ConfigError("config: '" + key + "' must be a list of class pairs");
    std::vector<std::pair<int, int>> pairs;
    for (const auto& item : arr) {
        if (!item.is_array() || item.size() != 2)
            throw ConfigError("config: '" + key + "' entries must be [a, b] class pairs");
        pairs.emplace_back(item[0].get<int>(), item[1].get<int>());
    }
    return pairs;
}

void apply_synth_section(const json& j, SyntheticConfig& sc) {
    if (!j.is_object()) throw ConfigError("config: 'synth' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "n_classes") sc.n_classes = value.get<int>();
        else if (key == "sequences_per_class") sc.sequences_per_class = value.get<int>();
        else if (key == "seq_seconds") sc.seq_seconds = value.get<Scalar>();
        else if (key == "keypoint_rate_hz") sc.keypoint_rate_hz = value.get<Scalar>();
        else if (key == "inertial_rate_hz") sc.inertial_rate_hz = value.get<Scalar>();
        else if (key == "pose_noise_sigma") sc.pose_noise_sigma = value.get<Scalar>();
        else if (key == "inertial_noise_sigma") sc.inertial_noise_sigma = value.get<Scalar>();
        else if (key == "ambiguity_margin") sc.ambiguity_margin = value.get<Scalar>();
        else if (key == "time_jitter_frac") sc.time_jitter_frac = value.get<Scalar>();
        else if (key == "amp_jitter") sc.amp_jitter = value.get<Scalar>();
        else if (key == "vision_ambiguous") sc.vision_ambiguous = parse_pairs(value, key);
        else if (key == "inertial_ambiguous") sc.inertial_ambiguous = parse_pairs(value, key);
        else throw ConfigError("config: unknown synth key '" + key + "'");
    }
}

void apply_train_section(const json& j, PipelineOptions& opts) {
    if (!j.is_object()) throw ConfigError("config: 'train' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "batch_size") {
            opts.vision_train.batch_size = value.get<Index>();
            opts.inertial_train.batch_size = value.get<Index>();
        } else if (key == "lr") {
            opts.vision_train.lr = value.get<Scalar>();
            opts.inertial_train.lr = value.get<Scalar>();
        } else if (key == "epochs_vision") {
            opts.vision_train.epochs = value.get<Index>();
        } else if (key == "epochs_inertial") {
            opts.inertial_train.epochs = value.get<Index>();
        } else if (key == "shuffle_each_epoch") {
            opts.vision_train.shuffle_each_epoch = value.get<bool>();
            opts.inertial_train.shuffle_each_epoch = value.get<bool>();
        } else {
            throw ConfigError("config: unknown train key '" + key + "'");
        }
    }
}

// Canonical JSON image of the resolved options; hashed into the run manifest.
json options_json(const PipelineOptions& opts) {
    const SyntheticConfig& sc = opts.synth;
    json pairs_v = json::array();
    for (auto [a, b] : sc.vision_ambiguous) pairs_v.push_back({a, b});
    json pairs_i = json::array();
    for (auto [a, b] : sc.inertial_ambiguous) pairs_i.push_back({a, b});
    json train = {
        {"batch_size", opts.vision_train.batch_size},
        {"lr", opts.vision_train.lr},
        {"epochs_vision", opts.vision_train.epochs},
        {"epochs_inertial", opts.inertial_train.epochs},
        {"shuffle_each_epoch", opts.vision_train.shuffle_each_epoch},
    };
    json synth = {
        {"n_classes", sc.n_classes},
        {"sequences_per_class", sc.sequences_per_class},
        {"seq_seconds", sc.seq_seconds},
        {"keypoint_rate_hz", sc.keypoint_rate_hz},
        {"inertial_rate_hz", sc.inertial_rate_hz},
        {"pose_noise_sigma", sc.pose_noise_sigma},
        {"inertial_noise_sigma", sc.inertial_noise_sigma},
        {"ambiguity_margin", sc.ambiguity_margin},
        {"time_jitter_frac", sc.time_jitter_frac},
        {"amp_jitter", sc.amp_jitter},
        {"vision_ambiguous", pairs_v},
        {"inertial_ambiguous", pairs_i},
    };
    return {{"synth", synth},
            {"manifest", opts.manifest_path},
            {"window_profile", opts.window_profile},
            {"train", train}};
}

// ---- CSV artifacts -------------------------------------------------------------

void write_scores_csv(const fs::path& file, const Tensor& scores,
                      const std::vector<std::string>& class_names) {
    if (scores.rank() != 2) throw DimensionError("scores must be rank 2");
    std::string out = "sample";
    for (const auto& name : class_names) out += "," + name;
    out += "\n";
    const Index n = scores.shape[0];
    const Index c = scores.shape[1];
    for (Index i = 0; i < n; ++i) {
        out += std::to_string(i);
        for (Index j = 0; j < c; ++j) out += "," + fmt(scores.data[i * c + j]);
        out += "\n";
    }
    write_text(file, out);
}

Tensor read_scores_csv(const fs::path& file) {
    auto lines = read_lines(file);
    if (lines.size() < 2) throw DataError(file.string() + ": no score rows");
    const auto header = split_csv(lines[0]);
    if (header.size() < 2) throw DataError(file.string() + ": malformed header");
    const Index c = static_cast<Index>(header.size()) - 1;
    const Index n = static_cast<Index>(lines.size()) - 1;
    Tensor scores = Tensor::zeros({n, c});
    for (Index i = 0; i < n; ++i) {
        const auto fields = split_csv(lines[static_cast<std::size_t>(i) + 1]);
        if (static_cast<Index>(fields.size()) != c + 1)
            throw DataError(file.string() + ": row " + std::to_string(i) + " has " +
                            std::to_string(fields.size() - 1) + " scores, expected " +
                            std::to_string(c));
        for (Index j = 0; j < c; ++j) scores.data[i * c + j] = parse_scalar(fields[j + 1], file);
    }
    return scores;
}

struct MetricRow {
    std::string name;
    Scalar accuracy, macro_precision, macro_recall, macro_f1;
};

std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::string out = "stream,accuracy,macro_precision,macro_recall,macro_f1\n";
    for (const auto& r : rows) {
        out += r.name + "," + fmt(r.accuracy) + "," + fmt(r.macro_precision) + "," +
               fmt(r.macro_recall) + "," + fmt(r.macro_f1) + "\n";
    }
    return out;
}

std::vector<MetricRow> parse_metrics_csv(const fs::path& file) {
    auto lines = read_lines(file);
    if (lines.empty()) throw DataError(file.string() + ": empty metrics file");
    std::vector<MetricRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto fields = split_csv(lines[i]);
        if (fields.size() != 5)
            throw DataError(file.string() + ": metrics row must have 5 fields");
        rows.push_back({fields[0], parse_scalar(fields[1], file), parse_scalar(fields[2], file),
                        parse_scalar(fields[3], file), parse_scalar(fields[4], file)});
    }
    if (rows.empty()) throw DataError(file.string() + ": no metric rows");
    return rows;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    if (static_cast<Index>(class_names.size()) != cm.n_classes)
        throw ValidationError("class name count does not match the confusion matrix");
    std::string out = "class";
    for (const auto& name : class_names) out += "," + name;
    out += "\n";
    for (Index t = 0; t < cm.n_classes; ++t) {
        out += class_names[static_cast<std::size_t>(t)];
        for (Index p = 0; p < cm.n_classes; ++p) out += "," + std::to_string(cm.at(t, p));
        out += "\n";
    }
    return out;
}

std::pair<ConfusionMatrix, std::vector<std::string>> parse_confusion_csv(const fs::path& file) {
    auto lines = read_lines(file);
    if (lines.size() < 2) throw DataError(file.string() + ": no confusion rows");
    auto header = split_csv(lines[0]);
    if (header.size() < 2) throw DataError(file.string() + ": malformed header");
    std::vector<std::string> names(header.begin() + 1, header.end());
    const Index c = static_cast<Index>(names.size());
    if (static_cast<Index>(lines.size()) - 1 != c)
        throw DataError(file.string() + ": confusion matrix must be square");
    ConfusionMatrix cm(c);
    for (Index t = 0; t < c; ++t) {
        const auto fields = split_csv(lines[static_cast<std::size_t>(t) + 1]);
        if (static_cast<Index>(fields.size()) != c + 1)
            throw DataError(file.string() + ": confusion row has wrong width");
        for (Index p = 0; p < c; ++p)
            cm.counts[static_cast<std::size_t>(t * c + p)] = parse_count(fields[p + 1], file);
    }
    return {cm, names};
}

TrainHistory parse_history_csv(const fs::path& file) {
    auto lines = read_lines(file);
    TrainHistory h;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto fields = split_csv(lines[i]);
        if (fields.size() != 5)
            throw DataError(file.string() + ": history row must have 5 fields");
        h.train_acc.push_back(parse_scalar(fields[1], file));
        h.train_loss.push_back(parse_scalar(fields[2], file));
        h.val_acc.push_back(parse_scalar(fields[3], file));
        h.val_loss.push_back(parse_scalar(fields[4], file));
    }
    return h;
}

std::string format_table(const std::vector<MetricRow>& rows, const std::string& winner) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-16s%16s%16s%16s%16s\n", "stream", "accuracy",
                  "macro_precision", "macro_recall", "macro_f1");
    out += line;
    out += std::string(16 + 4 * 16, '-') + "\n";
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-16s%16.4f%16.4f%16.4f%16.4f\n", r.name.c_str(),
                      r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1);
        out += line;
    }
    if (!winner.empty()) out += "\nwinner on accuracy: " + winner + "\n";
    return out;
}

std::string history_title(const std::string& stream) { return stream + " stream training"; }
std::string confusion_title(const std::string& name) { return name + " test confusion"; }

// ---- pipeline stages ------------------------------------------------------------

std::string resolve_profile_name(const RunConfig& cfg, const PipelineOptions& opts,
                                 const std::string& fallback) {
    if (!cfg.window_profile.empty()) return cfg.window_profile;
    if (!opts.window_profile.empty()) return opts.window_profile;
    return fallback;
}

void stage_synth(const RunConfig& cfg, const PipelineOptions& opts) {
    if (!opts.manifest_path.empty())
        throw ConfigError("the synth stage does not apply when the config names a dataset manifest");
    SyntheticConfig sc = opts.synth;
    sc.seed = cfg.seed;
    const std::string profile = resolve_profile_name(cfg, opts, "cmhad");
    window_profile(profile);  // validate the name before generating anything
    Dataset ds = generate_synthetic(sc);
    save_dataset(ds, sc.keypoint_rate_hz, sc.inertial_rate_hz, profile, dataset_dir(cfg.out_dir));
}

void stage_preprocess(const RunConfig& cfg, const PipelineOptions& opts) {
    DatasetManifest manifest;
    fs::path base;
    if (!opts.manifest_path.empty()) {
        const fs::path mp = opts.manifest_path;
        if (!fs::exists(mp)) throw ConfigError("dataset manifest not found: " + mp.string());
        manifest = load_manifest(mp);
        base = mp.parent_path();
    } else {
        const fs::path mp = dataset_dir(cfg.out_dir) / "manifest.json";
        if (!fs::exists(mp))
            throw StateError("missing dataset (" + mp.string() + "); run the synth stage first");
        manifest = load_manifest(mp);
        base = dataset_dir(cfg.out_dir);
    }
    Dataset ds = load_dataset(manifest, base);
    const std::string profile = resolve_profile_name(cfg, opts, manifest.window_profile_name);
    WindowSet ws = preprocess_dataset(ds, window_profile(profile), cfg.seed);
    save_windows(ws, cfg.out_dir);
}

void train_one(const RunConfig& cfg, const PipelineOptions& opts, const WindowSet& ws,
               const std::string& stream) {
    const Index n_classes = static_cast<Index>(ws.class_names.size());
    const bool vision = stream == "vision";
    TrainConfig tc = vision ? opts.vision_train : opts.inertial_train;
    tc.seed = split_seed(cfg.seed, vision ? 0x76697354ULL : 0x696e7254ULL);
    TrainResult result;
    if (vision) {
        VisionStreamNet net =
            build_vision_net(n_classes, ws.window_len, split_seed(cfg.seed, 0x766e6574ULL));
        result = train(net, ws.pose_train, ws.y_train, ws.pose_val, ws.y_val, tc);
    } else {
        InertialStreamNet net = build_inertial_net(n_classes, ws.window_len, ws.n_channels,
                                                   split_seed(cfg.seed, 0x696e6574ULL));
        result = train(net, ws.inertial_train, ws.y_train, ws.inertial_val, ws.y_val, tc);
    }
    save_checkpoint(checkpoint_path(cfg.out_dir, stream, "final"), result.final_state);
    save_checkpoint(checkpoint_path(cfg.out_dir, stream, "best"), result.best_state);
    write_text(history_csv_path(cfg.out_dir, stream), history_csv(result.history));
    write_text(history_svg_path(cfg.out_dir, stream),
               history_svg(result.history, history_title(stream)));
}

void stage_train(const RunConfig& cfg, const PipelineOptions& opts) {
    WindowSet ws = load_windows(cfg.out_dir);
    if (cfg.stream == "inertial" || cfg.stream == "both") train_one(cfg, opts, ws, "inertial");
    if (cfg.stream == "vision" || cfg.stream == "both") train_one(cfg, opts, ws, "vision");
}

Tensor predict_stream(const RunConfig& cfg, const WindowSet& ws, const std::string& stream) {
    const fs::path ckpt = checkpoint_path(cfg.out_dir, stream, "best");
    if (!fs::exists(ckpt))
        throw StateError("missing checkpoint (" + ckpt.string() + "); run the train stage first");
    const Index n_classes = static_cast<Index>(ws.class_names.size());
    if (stream == "vision") {
        VisionStreamNet net = build_vision_net(n_classes, ws.window_len);
        net.load_state(load_checkpoint(ckpt));
        net.mode = Mode::Eval;
        return predict_scores(net, ws.pose_test);
    }
    InertialStreamNet net = build_inertial_net(n_classes, ws.window_len, ws.n_channels);
    net.load_state(load_checkpoint(ckpt));
    net.mode = Mode::Eval;
    return predict_scores(net, ws.inertial_test);
}

void stage_evaluate(const RunConfig& cfg) {
    WindowSet ws = load_windows(cfg.out_dir);
    write_scores_csv(scores_path(cfg.out_dir, "inertial"), predict_stream(cfg, ws, "inertial"),
                     ws.class_names);
    write_scores_csv(scores_path(cfg.out_dir, "vision"), predict_stream(cfg, ws, "vision"),
                     ws.class_names);
}

void stage_fuse(const RunConfig& cfg) {
    WindowSet ws = load_windows(cfg.out_dir);
    for (const char* stream : {"inertial", "vision"}) {
        const fs::path p = scores_path(cfg.out_dir, stream);
        if (!fs::exists(p))
            throw StateError("missing scores (" + p.string() + "); run the evaluate stage first");
    }
    const Tensor vision_scores = read_scores_csv(scores_path(cfg.out_dir, "vision"));
    const Tensor inertial_scores = read_scores_csv(scores_path(cfg.out_dir, "inertial"));
    const StreamComparison cmp = compare_streams(vision_scores, inertial_scores, ws.y_test);

    const bool include_avg = cfg.fusion == "both" || cfg.fusion == "average";
    const bool include_max = cfg.fusion == "both" || cfg.fusion == "max";
    auto row = [](const std::string& name, const Evaluation& ev) {
        return MetricRow{name, ev.metrics.accuracy, ev.metrics.macro_precision,
                         ev.metrics.macro_recall, ev.metrics.macro_f1};
    };
    std::vector<MetricRow> rows{row("inertial", cmp.inertial), row("vision", cmp.vision)};
    if (include_avg) rows.push_back(row("fusion_average", cmp.fused_average));
    if (include_max) rows.push_back(row("fusion_max", cmp.fused_max));
    write_text(metrics_path(cfg.out_dir), metrics_csv(rows));

    auto dump_confusion = [&](const std::string& name, const Evaluation& ev) {
        write_text(confusion_csv_path(cfg.out_dir, name),
                   confusion_csv(ev.confusion, ws.class_names));
    };
    dump_confusion("inertial", cmp.inertial);
    dump_confusion("vision", cmp.vision);
    if (include_avg) dump_confusion("fusion_average", cmp.fused_average);
    if (include_max) dump_confusion("fusion_max", cmp.fused_max);

    emit_reports(cfg.out_dir);
}

json run_manifest_json(const RunConfig& cfg, const PipelineOptions& opts) {
    const json options = options_json(opts);
    return {{"command", cfg.command},
            {"seed", cfg.seed},
            {"stream", cfg.stream},
            {"fusion", cfg.fusion},
            {"train_profile", cfg.train_profile},
            {"window_profile", resolve_profile_name(cfg, opts, "")},
            {"config", options},
            {"config_hash", fnv1a_hex(options.dump())}};
}

void check_enum(const std::string& value, std::initializer_list<const char*> allowed,
                const std::string& what) {
    for (const char* a : allowed)
        if (value == a) return;
    std::string msg = "unknown " + what + " '" + value + "'; expected one of";
    for (const char* a : allowed) msg += std::string(" ") + a;
    throw ConfigError(msg);
}

}  // namespace

// ---- public API -----------------------------------------------------------------

PipelineOptions load_pipeline_options(const std::string& config_path,
                                      const std::string& train_profile_name) {
    PipelineOptions opts;
    opts.vision_train = train_profile("vision", train_profile_name);
    opts.inertial_train = train_profile("inertial", train_profile_name);
    if (config_path.empty()) return opts;
    if (!fs::exists(config_path)) throw ConfigError("config file not found: " + config_path);

    json j = json::parse(read_text(config_path), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + config_path);
    if (!j.is_object()) throw ConfigError("config root must be a JSON object: " + config_path);
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "synth") apply_synth_section(value, opts.synth);
            else if (key == "manifest") opts.manifest_path = value.get<std::string>();
            else if (key == "window_profile") opts.window_profile = value.get<std::string>();
            else if (key == "train") apply_train_section(value, opts);
            else throw ConfigError("config: unknown key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!opts.manifest_path.empty() && j.contains("synth"))
        throw ConfigError("config: 'synth' and 'manifest' are mutually exclusive");
    if (!opts.window_profile.empty()) window_profile(opts.window_profile);  // validate
    return opts;
}

WindowSet preprocess_dataset(const Dataset& ds, const WindowSpec& spec, std::uint64_t seed) {
    if (ds.class_names.empty()) throw DataError("dataset defines no classes");
    if (ds.sequences.empty()) throw DataError("dataset has no sequences");
    const int n_classes = static_cast<int>(ds.class_names.size());
    const Index T = spec.window_len;

    // The inertial channel schema must be uniform across the dataset.
    Index n_channels = -1;
    for (const auto& rec : ds.sequences) {
        for (const auto& s : rec.inertial) {
            const Index c = static_cast<Index>(s.channels.size());
            if (n_channels < 0) n_channels = c;
            else if (c != n_channels)
                throw DataError("inconsistent inertial channel count across the dataset");
        }
    }
    if (n_channels <= 0) throw DataError("dataset has no inertial channels");

    struct SeqWindows {
        int cls = 0;
        std::vector<std::vector<Scalar>> pose;      // each T * kPoseFeatures
        std::vector<std::vector<Scalar>> inertial;  // each T * n_channels
    };
    std::vector<SeqWindows> seqs;
    for (const auto& rec : ds.sequences) {
        try {
            if (rec.pose.size() < 2 || rec.inertial.size() < 2)
                throw DataError("fewer than two samples in a stream");

            // Multi-person frames share a timestamp; pick one subject per instant.
            std::vector<std::vector<KeypointFrame>> groups;
            for (const auto& frame : rec.pose) {
                if (groups.empty() || groups.back().front().timestamp != frame.timestamp)
                    groups.emplace_back();
                groups.back().push_back(frame);
            }
            TrackerState tracker;
            std::vector<KeypointFrame> selected;
            selected.reserve(groups.size());
            for (const auto& g : groups)
                selected.push_back(select_subject(g, tracker, kFrameWidth, kFrameHeight));
            if (selected.size() < 2) throw DataError("fewer than two pose instants");

            std::vector<Scalar> pose_ts, imu_ts;
            for (const auto& f : selected) pose_ts.push_back(f.timestamp);
            for (const auto& s : rec.inertial) imu_ts.push_back(s.timestamp);
            const Scalar target_hz = std::min(native_rate(pose_ts), native_rate(imu_ts));

            const AlignedStreams aligned =
                resample_to_common_rate(selected, rec.inertial, target_hz);
            const auto pose_feat = normalize_sequence(aligned.pose);
            const Index n = static_cast<Index>(aligned.timestamps.size());
            const auto starts = sliding_windows(n, spec);
            if (starts.empty()) throw DataError("shorter than one window after alignment");

            SeqWindows sw;
            sw.cls = rec.class_id;
            for (Index s0 : starts) {
                std::vector<Scalar> pw(static_cast<std::size_t>(T * kPoseFeatures));
                std::vector<Scalar> iw(static_cast<std::size_t>(T * n_channels));
                for (Index t = 0; t < T; ++t) {
                    const auto& row = pose_feat[static_cast<std::size_t>(s0 + t)];
                    std::copy(row.begin(), row.end(), pw.begin() + t * kPoseFeatures);
                    const auto& ch = aligned.inertial[static_cast<std::size_t>(s0 + t)].channels;
                    std::copy(ch.begin(), ch.end(), iw.begin() + t * n_channels);
                }
                sw.pose.push_back(std::move(pw));
                sw.inertial.push_back(std::move(iw));
            }
            seqs.push_back(std::move(sw));
        } catch (const DataError& e) {
            std::cerr << "harfuse: skipping sequence " << rec.id << " (" << e.what() << ")\n";
        } catch (const SyncError& e) {
            std::cerr << "harfuse: skipping sequence " << rec.id << " (" << e.what() << ")\n";
        }
    }
    if (seqs.empty()) throw DataError("no sequence produced any window");

    // Split whole sequences so windows of one recording never leak across parts.
    std::vector<int> seq_labels;
    seq_labels.reserve(seqs.size());
    for (const auto& s : seqs) seq_labels.push_back(s.cls);
    SplitSpec split;
    split.seed = split_seed(seed, 0x73706c69ULL);
    const SplitIndices parts = split_dataset(seq_labels, split, n_classes);

    WindowSet ws;
    ws.class_names = ds.class_names;
    ws.window_len = T;
    ws.n_channels = n_channels;
    auto build = [&](const std::vector<Index>& idx, Tensor& pose_t, Tensor& inertial_t,
                     std::vector<int>& labels, const char* part) {
        Index count = 0;
        for (Index i : idx) count += static_cast<Index>(seqs[static_cast<std::size_t>(i)].pose.size());
        if (count == 0) throw DataError(std::string("the ") + part + " split received no windows");
        pose_t = Tensor::zeros({count, T, kPoseFeatures});
        inertial_t = Tensor::zeros({count, T, n_channels});
        Index r = 0;
        for (Index i : idx) {
            const auto& sw = seqs[static_cast<std::size_t>(i)];
            for (std::size_t w = 0; w < sw.pose.size(); ++w) {
                std::copy(sw.pose[w].begin(), sw.pose[w].end(),
                          pose_t.data.data() + r * T * kPoseFeatures);
                std::copy(sw.inertial[w].begin(), sw.inertial[w].end(),
                          inertial_t.data.data() + r * T * n_channels);
                labels.push_back(sw.cls);
                ++r;
            }
        }
    };
    build(parts.train, ws.pose_train, ws.inertial_train, ws.y_train, "train");
    build(parts.val, ws.pose_val, ws.inertial_val, ws.y_val, "validation");
    build(parts.test, ws.pose_test, ws.inertial_test, ws.y_test, "test");

    // Feature scaling is fitted on the training part only.
    const ScalerParams pose_scaler = minmax_fit(ws.pose_train);
    ws.pose_train = minmax_apply(pose_scaler, ws.pose_train);
    ws.pose_val = minmax_apply(pose_scaler, ws.pose_val);
    ws.pose_test = minmax_apply(pose_scaler, ws.pose_test);
    const ScalerParams inertial_scaler = minmax_fit(ws.inertial_train);
    ws.inertial_train = minmax_apply(inertial_scaler, ws.inertial_train);
    ws.inertial_val = minmax_apply(inertial_scaler, ws.inertial_val);
    ws.inertial_test = minmax_apply(inertial_scaler, ws.inertial_test);
    return ws;
}

void save_windows(const WindowSet& ws, const fs::path& run_dir) {
    fs::create_directories(run_dir);
    auto labels_tensor = [](const std::vector<int>& y) {
        Tensor t = Tensor::zeros({static_cast<Index>(y.size())});
        for (std::size_t i = 0; i < y.size(); ++i) t.data[static_cast<Index>(i)] = y[i];
        return t;
    };
    NamedTensors entries;
    entries.emplace_back("windows/pose_train", ws.pose_train);
    entries.emplace_back("windows/pose_val", ws.pose_val);
    entries.emplace_back("windows/pose_test", ws.pose_test);
    entries.emplace_back("windows/inertial_train", ws.inertial_train);
    entries.emplace_back("windows/inertial_val", ws.inertial_val);
    entries.emplace_back("windows/inertial_test", ws.inertial_test);
    entries.emplace_back("windows/labels_train", labels_tensor(ws.y_train));
    entries.emplace_back("windows/labels_val", labels_tensor(ws.y_val));
    entries.emplace_back("windows/labels_test", labels_tensor(ws.y_test));
    save_checkpoint(windows_manifest_path(run_dir), entries);

    json meta = {{"class_names", ws.class_names},
                 {"window_len", ws.window_len},
                 {"n_channels", ws.n_channels}};
    write_text(windows_meta_path(run_dir), meta.dump(2) + "\n");
}

WindowSet load_windows(const fs::path& run_dir) {
    const fs::path manifest = windows_manifest_path(run_dir);
    const fs::path meta_file = windows_meta_path(run_dir);
    if (!fs::exists(manifest) || !fs::exists(meta_file))
        throw StateError("missing preprocessed windows (" + manifest.string() +
                         "); run the preprocess stage first");

    WindowSet ws;
    json meta = json::parse(read_text(meta_file), nullptr, false);
    if (meta.is_discarded() || !meta.is_object())
        throw DataError(meta_file.string() + ": malformed window metadata");
    try {
        ws.class_names = meta.at("class_names").get<std::vector<std::string>>();
        ws.window_len = meta.at("window_len").get<Index>();
        ws.n_channels = meta.at("n_channels").get<Index>();
    } catch (const json::exception& e) {
        throw DataError(meta_file.string() + ": " + e.what());
    }

    NamedTensors entries = load_checkpoint(manifest);
    auto take = [&](const std::string& name) -> Tensor& {
        for (auto& [n, t] : entries)
            if (n == name) return t;
        throw DataError(manifest.string() + ": missing entry '" + name + "'");
    };
    auto labels_from = [&](const std::string& name) {
        const Tensor& t = take(name);
        std::vector<int> y(static_cast<std::size_t>(t.size()));
        for (Index i = 0; i < t.size(); ++i) y[static_cast<std::size_t>(i)] =
            static_cast<int>(std::llround(t.data[i]));
        return y;
    };
    ws.pose_train = take("windows/pose_train");
    ws.pose_val = take("windows/pose_val");
    ws.pose_test = take("windows/pose_test");
    ws.inertial_train = take("windows/inertial_train");
    ws.inertial_val = take("windows/inertial_val");
    ws.inertial_test = take("windows/inertial_test");
    ws.y_train = labels_from("windows/labels_train");
    ws.y_val = labels_from("windows/labels_val");
    ws.y_test = labels_from("windows/labels_test");
    return ws;
}

std::string comparison_table(const StreamComparison& cmp) {
    auto row = [](const std::string& name, const Evaluation& ev) {
        return MetricRow{name, ev.metrics.accuracy, ev.metrics.macro_precision,
                         ev.metrics.macro_recall, ev.metrics.macro_f1};
    };
    return format_table({row("inertial", cmp.inertial), row("vision", cmp.vision),
                         row("fusion_average", cmp.fused_average),
                         row("fusion_max", cmp.fused_max)},
                        cmp.winner);
}

void emit_reports(const fs::path& run_dir) {
    const fs::path metrics_file = metrics_path(run_dir);
    if (!fs::exists(metrics_file))
        throw StateError("missing metrics (" + metrics_file.string() +
                         "); run the fuse stage first");
    const std::vector<MetricRow> rows = parse_metrics_csv(metrics_file);

    // Winner line only when both fusion methods were evaluated.
    const MetricRow* avg = nullptr;
    const MetricRow* max = nullptr;
    for (const auto& r : rows) {
        if (r.name == "fusion_average") avg = &r;
        if (r.name == "fusion_max") max = &r;
    }
    std::string winner;
    if (avg && max) {
        winner = avg->accuracy > max->accuracy ? "average"
                 : max->accuracy > avg->accuracy ? "max"
                                                 : "tie";
    }
    write_text(table_path(run_dir), format_table(rows, winner));

    for (const auto& r : rows) {
        const fs::path csv = confusion_csv_path(run_dir, r.name);
        if (!fs::exists(csv))
            throw StateError("missing confusion matrix (" + csv.string() +
                             "); run the fuse stage first");
        const auto [cm, names] = parse_confusion_csv(csv);
        write_text(confusion_svg_path(run_dir, r.name),
                   confusion_svg(cm, names, confusion_title(r.name)));
    }
    for (const char* stream : {"inertial", "vision"}) {
        const fs::path csv = history_csv_path(run_dir, stream);
        if (!fs::exists(csv)) continue;  // stream may not have been trained in this run
        write_text(history_svg_path(run_dir, stream),
                   history_svg(parse_history_csv(csv), history_title(stream)));
    }
}

void run_command(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    fs::remove(failed_marker_path(cfg.out_dir));

    std::string stage = "config";
    try {
        check_enum(cfg.command, {"synth", "preprocess", "train", "evaluate", "fuse", "pipeline"},
                   "command");
        check_enum(cfg.fusion, {"average", "max", "both"}, "fusion method");
        check_enum(cfg.stream, {"vision", "inertial", "both"}, "stream");
        const PipelineOptions opts = load_pipeline_options(cfg.config_path, cfg.train_profile);
        write_text(cfg.out_dir / "run_manifest.json", run_manifest_json(cfg, opts).dump(2) + "\n");

        auto at = [&](const char* name, auto&& body) {
            stage = name;
            body();
        };
        if (cfg.command == "synth") {
            at("synth", [&] { stage_synth(cfg, opts); });
        } else if (cfg.command == "preprocess") {
            at("preprocess", [&] { stage_preprocess(cfg, opts); });
        } else if (cfg.command == "train") {
            at("train", [&] { stage_train(cfg, opts); });
        } else if (cfg.command == "evaluate") {
            at("evaluate", [&] { stage_evaluate(cfg); });
        } else if (cfg.command == "fuse") {
            at("fuse", [&] { stage_fuse(cfg); });
        } else {  // pipeline
            RunConfig full = cfg;
            full.stream = "both";
            if (opts.manifest_path.empty()) at("synth", [&] { stage_synth(full, opts); });
            at("preprocess", [&] { stage_preprocess(full, opts); });
            at("train", [&] { stage_train(full, opts); });
            at("evaluate", [&] { stage_evaluate(full); });
            at("fuse", [&] { stage_fuse(full); });
        }
    } catch (const std::exception& e) {
        write_text(failed_marker_path(cfg.out_dir),
                   "stage: " + stage + "\n" + e.what() + "\n");
        std::cerr << "harfuse: FAILED at stage " << stage << ": " << e.what() << "\n";
        throw;
    }
}

}  // namespace harfuse
