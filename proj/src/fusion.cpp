#include "harfuse/fusion.hpp"

#include <cmath>
#include <numeric>

namespace harfuse {

namespace {

void validate_scores(const ScoreMatrix& s, const char* op) {
    if (s.n_streams < 1 || s.n_classes < 1)
        throw DimensionError(std::string(op) + ": empty score matrix");
    for (Index r = 0; r < s.n_streams; ++r) {
        Scalar sum = 0;
        for (Index c = 0; c < s.n_classes; ++c) {
            const Scalar v = s.at(r, c);
            if (v < -1e-9 || v > 1.0 + 1e-9)
                throw ValidationError(std::string(op) + ": score out of [0,1] in stream row " +
                                      std::to_string(r));
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ValidationError(std::string(op) + ": stream row " + std::to_string(r) +
                                  " sums to " + std::to_string(sum));
    }
}

int argmax(const Array& v) {
    int best = 0;
    for (Index i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

}  // namespace

int fuse_average(const ScoreMatrix& scores) {
    validate_scores(scores, "fuse_average");
    Array mean = Array::Zero(scores.n_classes);
    for (Index r = 0; r < scores.n_streams; ++r)
        for (Index c = 0; c < scores.n_classes; ++c) mean[c] += scores.at(r, c);
    mean /= static_cast<Scalar>(scores.n_streams);
    return argmax(mean);
}

int fuse_max(const ScoreMatrix& scores) {
    validate_scores(scores, "fuse_max");
    Array mx = Array::Constant(scores.n_classes, -1.0);
    for (Index r = 0; r < scores.n_streams; ++r)
        for (Index c = 0; c < scores.n_classes; ++c) mx[c] = std::max(mx[c], scores.at(r, c));
    return argmax(mx);
}

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t t = 0;
    for (Index c = 0; c < n_classes; ++c) t += at(c, c);
    return t;
}

Evaluation evaluate(const std::vector<int>& predictions, const std::vector<int>& labels,
                    Index n_classes) {
    if (predictions.size() != labels.size())
        throw ValidationError("evaluate: " + std::to_string(predictions.size()) +
                              " predictions vs " + std::to_string(labels.size()) + " labels");
    if (predictions.empty()) throw ValidationError("evaluate: no samples");
    if (n_classes < 1) throw ValidationError("evaluate: need at least one class");

    Evaluation out{ConfusionMatrix(n_classes), MetricsReport{}};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int t = labels[i], p = predictions[i];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
            throw ValidationError("evaluate: class out of range at sample " + std::to_string(i));
        ++out.confusion.counts[static_cast<std::size_t>(t * n_classes + p)];
    }

    MetricsReport& m = out.metrics;
    m.accuracy = static_cast<Scalar>(out.confusion.trace()) /
                 static_cast<Scalar>(out.confusion.total());
    m.precision.resize(static_cast<std::size_t>(n_classes), 0.0);
    m.recall.resize(static_cast<std::size_t>(n_classes), 0.0);
    m.f1.resize(static_cast<std::size_t>(n_classes), 0.0);
    for (Index c = 0; c < n_classes; ++c) {
        std::int64_t tp = out.confusion.at(c, c), row = 0, col = 0;
        for (Index k = 0; k < n_classes; ++k) {
            row += out.confusion.at(c, k);
            col += out.confusion.at(k, c);
        }
        const auto ci = static_cast<std::size_t>(c);
        m.precision[ci] = col > 0 ? static_cast<Scalar>(tp) / static_cast<Scalar>(col) : 0.0;
        m.recall[ci] = row > 0 ? static_cast<Scalar>(tp) / static_cast<Scalar>(row) : 0.0;
        const Scalar pr = m.precision[ci] + m.recall[ci];
        m.f1[ci] = pr > 0 ? 2.0 * m.precision[ci] * m.recall[ci] / pr : 0.0;
        m.macro_precision += m.precision[ci];
        m.macro_recall += m.recall[ci];
        m.macro_f1 += m.f1[ci];
    }
    m.macro_precision /= static_cast<Scalar>(n_classes);
    m.macro_recall /= static_cast<Scalar>(n_classes);
    m.macro_f1 /= static_cast<Scalar>(n_classes);
    return out;
}

std::vector<int> argmax_rows(const Tensor& scores) {
    if (scores.rank() != 2)
        throw DimensionError("argmax_rows: expected [samples x classes], got " +
                             shape_str(scores.shape));
    const Index n = scores.dim(0), c = scores.dim(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r)
        out[static_cast<std::size_t>(r)] = argmax(scores.data.segment(r * c, c));
    return out;
}

StreamComparison compare_streams(const Tensor& vision_scores, const Tensor& inertial_scores,
                                 const std::vector<int>& labels) {
    if (vision_scores.rank() != 2 || inertial_scores.rank() != 2)
        throw DimensionError("compare_streams: score tensors must be [samples x classes]");
    if (vision_scores.shape != inertial_scores.shape ||
        vision_scores.dim(0) != static_cast<Index>(labels.size()))
        throw SyncError("compare_streams: misaligned sample counts (vision " +
                        shape_str(vision_scores.shape) + ", inertial " +
                        shape_str(inertial_scores.shape) + ", labels " +
                        std::to_string(labels.size()) + ")");

    const Index n = vision_scores.dim(0), classes = vision_scores.dim(1);
    std::vector<int> avg_pred(static_cast<std::size_t>(n)), max_pred(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        ScoreMatrix s(2, classes);
        for (Index c = 0; c < classes; ++c) {
            s.at(0, c) = vision_scores.data[i * classes + c];
            s.at(1, c) = inertial_scores.data[i * classes + c];
        }
        avg_pred[static_cast<std::size_t>(i)] = fuse_average(s);
        max_pred[static_cast<std::size_t>(i)] = fuse_max(s);
    }

    StreamComparison out{evaluate(argmax_rows(inertial_scores), labels, classes),
                         evaluate(argmax_rows(vision_scores), labels, classes),
                         evaluate(avg_pred, labels, classes),
                         evaluate(max_pred, labels, classes),
                         std::move(avg_pred),
                         std::move(max_pred),
                         ""};
    const Scalar a = out.fused_average.metrics.accuracy;
    const Scalar m = out.fused_max.metrics.accuracy;
    out.winner = a > m ? "average" : (m > a ? "max" : "tie");
    return out;
}

}  // namespace harfuse
