#pragma once

#include <string>
#include <vector>

#include "harfuse/tensor.hpp"

namespace harfuse {

// Per-sample stream scores: one row per stream, one column per class, each
// row a probability distribution (sums to 1 within 1e-6).
struct ScoreMatrix {
    Index n_streams = 0;
    Index n_classes = 0;
    Array p;

    ScoreMatrix(Index streams, Index classes)
        : n_streams(streams), n_classes(classes), p(Array::Zero(streams * classes)) {}

    Scalar& at(Index s, Index c) { return p[s * n_classes + c]; }
    Scalar at(Index s, Index c) const { return p[s * n_classes + c]; }
};

// argmax over classes of the per-class mean across streams; ties break to
// the lowest class index.
int fuse_average(const ScoreMatrix& scores);

// argmax over classes of the per-class maximum across streams; same ties.
int fuse_max(const ScoreMatrix& scores);

struct ConfusionMatrix {
    Index n_classes = 0;
    std::vector<std::int64_t> counts;  // [true_class * n_classes + predicted]

    explicit ConfusionMatrix(Index classes)
        : n_classes(classes), counts(static_cast<std::size_t>(classes * classes), 0) {}

    std::int64_t at(Index t, Index p) const {
        return counts[static_cast<std::size_t>(t * n_classes + p)];
    }
    std::int64_t total() const;
    std::int64_t trace() const;
};

struct MetricsReport {
    Scalar accuracy = 0;
    Scalar macro_precision = 0;
    Scalar macro_recall = 0;
    Scalar macro_f1 = 0;
    std::vector<Scalar> precision;  // per class
    std::vector<Scalar> recall;
    std::vector<Scalar> f1;
};

struct Evaluation {
    ConfusionMatrix confusion;
    MetricsReport metrics;
};

// Accuracy, confusion matrix, and per-class / macro precision, recall, F1.
// A class never predicted (or never present) contributes 0 to the macros.
Evaluation evaluate(const std::vector<int>& predictions, const std::vector<int>& labels,
                    Index n_classes);

// Row argmax of an [N x C] score tensor, ties to the lowest index.
std::vector<int> argmax_rows(const Tensor& scores);

// Four Table-style rows over one aligned test set: each stream alone, then
// both decision-level fusions, plus which fusion method won on accuracy.
struct StreamComparison {
    Evaluation inertial;
    Evaluation vision;
    Evaluation fused_average;
    Evaluation fused_max;
    std::vector<int> average_predictions;
    std::vector<int> max_predictions;
    std::string winner;  // "average" | "max" | "tie"
};

StreamComparison compare_streams(const Tensor& vision_scores, const Tensor& inertial_scores,
                                 const std::vector<int>& labels);

}  // namespace harfuse
