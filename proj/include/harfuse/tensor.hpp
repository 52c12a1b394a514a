#pragma once

#include <functional>
#include <memory>
#include <span>
#include <unordered_map>

#include "harfuse/common.hpp"

namespace harfuse {

class Tape;

// Dense n-d array of doubles, row-major, with an optional gradient slot.
// Copies are deep for `data` but share `grad`, so a parameter handed to a
// layer and the caller's copy accumulate into the same gradient buffer.
//
// `node`/`tape_serial` cache the tensor's position on the currently active
// tape; they are bookkeeping only and may be written through const refs.
struct Tensor {
    Shape shape;
    Array data;
    bool requires_grad = false;
    std::shared_ptr<Array> grad;

    mutable int node = -1;
    mutable std::uint64_t tape_serial = 0;

    Tensor() = default;
    Tensor(Shape s, Array d);
    Tensor(Shape s, std::initializer_list<Scalar> values);

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, Scalar v);
    static Tensor scalar(Scalar v);
    static Tensor from_matrix(const Eigen::MatrixXd& m);

    Index size() const { return data.size(); }
    Index rank() const { return static_cast<Index>(shape.size()); }
    Index dim(Index axis) const { return shape[static_cast<std::size_t>(axis)]; }

    ConstMatrixMap mat() const;  // rank-2 view
    Scalar value() const;        // single-element tensors only
    Scalar at(std::span<const Index> idx) const;
    Scalar at(std::initializer_list<Index> idx) const {
        return at(std::span<const Index>(idx.begin(), idx.size()));
    }

    void set_requires_grad(bool on);
    void zero_grad();
    Tensor detached() const;
};

// Recorded reverse-mode graph for one forward pass (define-by-run). Nodes
// are appended in execution order, so ids are already topologically sorted:
// every parent id precedes its consumers, and a reverse sweep visits each
// node exactly once, summing gradients into shared parents.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self, const Array& grad_out)>;

    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t serial() const { return serial_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }

    // True when `t` carries gradient through this tape (trainable leaf or
    // an intermediate produced by a recorded op).
    bool tracks(const Tensor& t) const;

    // Node id for `t`, registering it as a leaf (grad-bearing or constant)
    // if it is not on the tape yet. Grad-bearing leaves are deduplicated by
    // their shared grad buffer, so every use of a parameter maps to one node.
    int require(const Tensor& t);

    int record(const char* op, std::vector<int> parents, Tensor& out, BackwardFn fn);

    const char* op_name(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }
    const std::vector<int>& parents(int id) const {
        return nodes_[static_cast<std::size_t>(id)].parents;
    }
    const Array& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Shape& shape_of(int id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
    bool wants(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    // Gradient accumulator for a node, allocated to zeros on first touch.
    Array& grad_buf(int id);

    // Reverse sweep from `loss_id`; adds leaf gradients into each leaf's
    // shared grad buffer. Calling twice without zeroing accumulates.
    void backward_from(int loss_id);

    static Tape* active();

private:
    friend class TapeScope;

    struct Node {
        const char* op;
        std::vector<int> parents;
        Shape shape;
        Array value;
        bool needs_grad;
        std::shared_ptr<Array> leaf_grad;  // non-null for trainable leaves
        BackwardFn backward;               // null for leaves
    };

    std::vector<Node> nodes_;
    std::vector<Array> grads_;
    std::unordered_map<const Array*, int> leaf_ids_;
    std::uint64_t serial_;
};

// Activates a tape for the current thread for the scope's lifetime; ops
// executed inside record themselves onto it.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// --- forward ops -----------------------------------------------------------
//
// Binary elementwise ops accept equal shapes, a rank-1 right operand matching
// the last axis (broadcast across rows), or a single-element operand on
// either side. That covers everything the two stream architectures need.

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);  // denominator clamped away from 0
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);   // input clamped to >= 1e-12
Tensor sqrt(const Tensor& x);  // input clamped to >= 0

Tensor scale(const Tensor& x, Scalar c);
Tensor shift(const Tensor& x, Scalar c);

Tensor sum(const Tensor& x, Index axis);
Tensor mean(const Tensor& x, Index axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Broadcast a rank-1 tensor along `axis` of `like`: out[..., i_axis, ...] = v[i_axis].
Tensor expand(const Tensor& v, const Shape& like, Index axis);

Tensor concat(std::span<const Tensor> parts, Index axis);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor slice(const Tensor& x, Index axis, Index start, Index len);

// Valid cross-correlation: x [batch x in_ch x L], kernel [out_ch x in_ch x K]
// -> [batch x out_ch x (L-K+1)]. Bias handling lives in the layer.
Tensor conv1d(const Tensor& x, const Tensor& kernel);

// Row-wise softmax over the last axis (rank 1 or 2), max-subtracted.
Tensor softmax(const Tensor& logits);

// Mean over the batch of -log p(true class); probabilities clamped to
// [1e-12, 1] before the log. Validates row normalization and one-hot labels.
Tensor categorical_cross_entropy(const Tensor& probs, const Tensor& onehot);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return subtract(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return multiply(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return divide(a, b); }

// Reverse sweep: writes d(loss)/d(p) into every trainable leaf p reachable
// from `loss` on `tape`.
void backward(const Tensor& loss, Tape& tape);

const Scalar kLogFloor = 1e-12;

}  // namespace harfuse
