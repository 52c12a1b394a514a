#include "harfuse/tensor.hpp"

#include <atomic>
#include <cmath>

namespace harfuse {

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_serial{1};

// How an operand maps onto the output geometry of a binary op.
enum class MapKind { Full, Row, Scal };

struct BinGeom {
    MapKind a;
    MapKind b;
    Shape out;
    Index inner = 0;  // last-axis length for Row broadcasts
};

BinGeom resolve_binary(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape == b.shape) return {MapKind::Full, MapKind::Full, a.shape, 0};
    if (b.size() == 1) return {MapKind::Full, MapKind::Scal, a.shape, 0};
    if (a.size() == 1) return {MapKind::Scal, MapKind::Full, b.shape, 0};
    if (b.rank() == 1 && a.rank() >= 2 && a.shape.back() == b.shape[0])
        return {MapKind::Full, MapKind::Row, a.shape, b.size()};
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape) +
                         " and " + shape_str(b.shape));
}

Array materialize(const Array& src, MapKind kind, Index out_size, Index inner) {
    switch (kind) {
        case MapKind::Full: return src;
        case MapKind::Scal: return Array::Constant(out_size, src[0]);
        case MapKind::Row: {
            Array out(out_size);
            for (Index o = 0; o < out_size / inner; ++o) out.segment(o * inner, inner) = src;
            return out;
        }
    }
    return src;
}

Array reduce_back(const Array& g, MapKind kind, Index inner) {
    switch (kind) {
        case MapKind::Full: return g;
        case MapKind::Scal: {
            Array r(1);
            r[0] = g.sum();
            return r;
        }
        case MapKind::Row: {
            Array r = Array::Zero(inner);
            for (Index o = 0; o < g.size() / inner; ++o) r += g.segment(o * inner, inner);
            return r;
        }
    }
    return g;
}

// Denominator clamped away from zero, sign preserved.
Array safe_den(const Array& d) {
    return d.unaryExpr([](Scalar v) {
        const Scalar m = std::max(std::abs(v), kLogFloor);
        return std::copysign(m, v == 0.0 ? 1.0 : v);
    });
}

Tape* tape_for(const Tensor& x) {
    Tape* t = Tape::active();
    return (t && t->tracks(x)) ? t : nullptr;
}

Tape* tape_for(const Tensor& a, const Tensor& b) {
    Tape* t = Tape::active();
    return (t && (t->tracks(a) || t->tracks(b))) ? t : nullptr;
}

struct AxisGeom {
    Index outer;
    Index n;
    Index inner;
};

AxisGeom axis_geom(const char* op, const Shape& shape, Index axis) {
    if (axis < 0 || axis >= static_cast<Index>(shape.size()))
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                             " out of range for " + shape_str(shape));
    AxisGeom g{1, shape[static_cast<std::size_t>(axis)], 1};
    for (Index i = 0; i < axis; ++i) g.outer *= shape[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i)
        g.inner *= shape[i];
    return g;
}

Shape drop_axis(const Shape& shape, Index axis) {
    Shape out;
    for (Index i = 0; i < static_cast<Index>(shape.size()); ++i)
        if (i != axis) out.push_back(shape[static_cast<std::size_t>(i)]);
    return out;
}

enum class EW { Add, Sub, Mul, Div };

Tensor ewise(EW op, const char* name, const Tensor& a, const Tensor& b) {
    const BinGeom geo = resolve_binary(name, a, b);
    const Index osz = numel(geo.out);
    Array lhs = materialize(a.data, geo.a, osz, geo.inner);
    Array rhs = materialize(b.data, geo.b, osz, geo.inner);
    Array od;
    switch (op) {
        case EW::Add: od = lhs + rhs; break;
        case EW::Sub: od = lhs - rhs; break;
        case EW::Mul: od = lhs * rhs; break;
        case EW::Div: od = lhs / safe_den(rhs); break;
    }
    Tensor out(geo.out, std::move(od));
    if (Tape* t = tape_for(a, b)) {
        const int ia = t->require(a);
        const int ib = t->require(b);
        t->record(name, {ia, ib}, out,
                  [op, ia, ib, geo, osz](Tape& tp, int, const Array& g) {
                      switch (op) {
                          case EW::Add:
                              if (tp.wants(ia)) tp.grad_buf(ia) += reduce_back(g, geo.a, geo.inner);
                              if (tp.wants(ib)) tp.grad_buf(ib) += reduce_back(g, geo.b, geo.inner);
                              break;
                          case EW::Sub:
                              if (tp.wants(ia)) tp.grad_buf(ia) += reduce_back(g, geo.a, geo.inner);
                              if (tp.wants(ib)) tp.grad_buf(ib) -= reduce_back(g, geo.b, geo.inner);
                              break;
                          case EW::Mul: {
                              if (tp.wants(ia)) {
                                  Array rhs = materialize(tp.value(ib), geo.b, osz, geo.inner);
                                  tp.grad_buf(ia) += reduce_back(Array(g * rhs), geo.a, geo.inner);
                              }
                              if (tp.wants(ib)) {
                                  Array lhs = materialize(tp.value(ia), geo.a, osz, geo.inner);
                                  tp.grad_buf(ib) += reduce_back(Array(g * lhs), geo.b, geo.inner);
                              }
                              break;
                          }
                          case EW::Div: {
                              Array den = safe_den(materialize(tp.value(ib), geo.b, osz, geo.inner));
                              if (tp.wants(ia))
                                  tp.grad_buf(ia) += reduce_back(Array(g / den), geo.a, geo.inner);
                              if (tp.wants(ib)) {
                                  Array lhs = materialize(tp.value(ia), geo.a, osz, geo.inner);
                                  tp.grad_buf(ib) +=
                                      reduce_back(Array(-g * lhs / (den * den)), geo.b, geo.inner);
                              }
                              break;
                          }
                      }
                  });
    }
    return out;
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape s, Array d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size())
        throw DimensionError("tensor: shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
}

Tensor::Tensor(Shape s, std::initializer_list<Scalar> values) : shape(std::move(s)) {
    data.resize(static_cast<Index>(values.size()));
    Index i = 0;
    for (Scalar v : values) data[i++] = v;
    if (numel(shape) != data.size())
        throw DimensionError("tensor: shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
}

Tensor Tensor::zeros(Shape s) {
    const Index n = numel(s);
    return Tensor(std::move(s), Array::Zero(n));
}

Tensor Tensor::full(Shape s, Scalar v) {
    const Index n = numel(s);
    return Tensor(std::move(s), Array::Constant(n, v));
}

Tensor Tensor::scalar(Scalar v) {
    Array a(1);
    a[0] = v;
    return Tensor(Shape{}, std::move(a));
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
    RowMatrix rm = m;
    Array a = Eigen::Map<const Array>(rm.data(), rm.size());
    return Tensor({m.rows(), m.cols()}, std::move(a));
}

ConstMatrixMap Tensor::mat() const {
    if (rank() != 2)
        throw DimensionError("mat: rank-2 view requested for tensor of shape " + shape_str(shape));
    return ConstMatrixMap(data.data(), shape[0], shape[1]);
}

Scalar Tensor::value() const {
    if (size() != 1)
        throw DimensionError("value: tensor of shape " + shape_str(shape) + " is not scalar");
    return data[0];
}

Scalar Tensor::at(std::span<const Index> idx) const {
    Index flat = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) flat = flat * shape[i] + idx[i];
    return data[flat];
}

void Tensor::set_requires_grad(bool on) {
    requires_grad = on;
    if (on) {
        if (!grad || grad->size() != size()) grad = std::make_shared<Array>(Array::Zero(size()));
    } else {
        grad.reset();
    }
}

void Tensor::zero_grad() {
    if (grad) grad->setZero();
}

Tensor Tensor::detached() const { return Tensor(shape, data); }

// --- Tape -------------------------------------------------------------------

Tape::Tape() : serial_(g_next_serial.fetch_add(1)) {}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

bool Tape::tracks(const Tensor& t) const {
    if (t.requires_grad && t.grad) return true;
    return t.node >= 0 && t.tape_serial == serial_ &&
           nodes_[static_cast<std::size_t>(t.node)].needs_grad;
}

int Tape::require(const Tensor& t) {
    if (t.node >= 0 && t.tape_serial == serial_) return t.node;
    const bool trainable = t.requires_grad && t.grad != nullptr;
    if (trainable) {
        auto it = leaf_ids_.find(t.grad.get());
        if (it != leaf_ids_.end()) {
            t.node = it->second;
            t.tape_serial = serial_;
            return it->second;
        }
    }
    Node n;
    n.op = "leaf";
    n.shape = t.shape;
    n.value = t.data;
    n.needs_grad = trainable;
    n.leaf_grad = trainable ? t.grad : nullptr;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(n));
    if (trainable) leaf_ids_.emplace(t.grad.get(), id);
    t.node = id;
    t.tape_serial = serial_;
    return id;
}

int Tape::record(const char* op, std::vector<int> parents, Tensor& out, BackwardFn fn) {
    Node n;
    n.op = op;
    n.parents = std::move(parents);
    n.shape = out.shape;
    n.value = out.data;
    n.needs_grad = false;
    for (int p : n.parents)
        if (nodes_[static_cast<std::size_t>(p)].needs_grad) {
            n.needs_grad = true;
            break;
        }
    if (n.needs_grad) n.backward = std::move(fn);
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(n));
    out.node = id;
    out.tape_serial = serial_;
    return id;
}

Array& Tape::grad_buf(int id) {
    Array& g = grads_[static_cast<std::size_t>(id)];
    if (g.size() == 0) g = Array::Zero(numel(nodes_[static_cast<std::size_t>(id)].shape));
    return g;
}

void Tape::backward_from(int loss_id) {
    if (loss_id < 0 || loss_id >= static_cast<int>(nodes_.size()))
        throw StateError("backward: loss is not recorded on this tape");
    grads_.assign(nodes_.size(), Array());
    grads_[static_cast<std::size_t>(loss_id)] = Array::Ones(1);
    for (int id = loss_id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        const Array& g = grads_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || g.size() == 0) continue;
        if (n.backward) n.backward(*this, id, g);
        if (n.leaf_grad) *n.leaf_grad += g;
    }
    grads_.clear();
    grads_.shrink_to_fit();
}

void backward(const Tensor& loss, Tape& tape) {
    if (loss.size() != 1)
        throw DimensionError("backward: loss must be scalar, got shape " + shape_str(loss.shape));
    if (loss.node < 0 || loss.tape_serial != tape.serial())
        throw StateError("backward: loss tensor is not recorded on this tape");
    tape.backward_from(loss.node);
}

// --- elementwise and matrix ops ----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return ewise(EW::Add, "add", a, b); }
Tensor subtract(const Tensor& a, const Tensor& b) { return ewise(EW::Sub, "subtract", a, b); }
Tensor multiply(const Tensor& a, const Tensor& b) { return ewise(EW::Mul, "multiply", a, b); }
Tensor divide(const Tensor& a, const Tensor& b) { return ewise(EW::Div, "divide", a, b); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                             shape_str(b.shape));
    const Index m = a.shape[0], k = a.shape[1], n = b.shape[1];
    ConstMatrixMap am(a.data.data(), m, k);
    ConstMatrixMap bm(b.data.data(), k, n);
    RowMatrix prod = am * bm;
    Tensor out({m, n}, Eigen::Map<const Array>(prod.data(), prod.size()));
    if (Tape* t = tape_for(a, b)) {
        const int ia = t->require(a);
        const int ib = t->require(b);
        t->record("matmul", {ia, ib}, out, [ia, ib, m, k, n](Tape& tp, int, const Array& g) {
            ConstMatrixMap gm(g.data(), m, n);
            if (tp.wants(ia)) {
                ConstMatrixMap bm(tp.value(ib).data(), k, n);
                RowMatrix da = gm * bm.transpose();
                tp.grad_buf(ia) += Eigen::Map<const Array>(da.data(), da.size());
            }
            if (tp.wants(ib)) {
                ConstMatrixMap am(tp.value(ia).data(), m, k);
                RowMatrix db = am.transpose() * gm;
                tp.grad_buf(ib) += Eigen::Map<const Array>(db.data(), db.size());
            }
        });
    }
    return out;
}

// --- unary ops ----------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
    Array y = x.data.unaryExpr([](Scalar v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (1.0 + e);
    });
    Tensor out(x.shape, std::move(y));
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("sigmoid", {ix}, out, [ix](Tape& tp, int self, const Array& g) {
            if (!tp.wants(ix)) return;
            const Array& y = tp.value(self);
            tp.grad_buf(ix) += g * y * (1.0 - y);
        });
    }
    return out;
}

Tensor tanh(const Tensor& x) {
    Tensor out(x.shape, x.data.tanh());
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("tanh", {ix}, out, [ix](Tape& tp, int self, const Array& g) {
            if (!tp.wants(ix)) return;
            const Array& y = tp.value(self);
            tp.grad_buf(ix) += g * (1.0 - y * y);
        });
    }
    return out;
}

Tensor exp(const Tensor& x) {
    Tensor out(x.shape, x.data.exp());
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("exp", {ix}, out, [ix](Tape& tp, int self, const Array& g) {
            if (tp.wants(ix)) tp.grad_buf(ix) += g * tp.value(self);
        });
    }
    return out;
}

Tensor log(const Tensor& x) {
    Tensor out(x.shape, x.data.max(kLogFloor).log());
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("log", {ix}, out, [ix](Tape& tp, int, const Array& g) {
            if (tp.wants(ix)) tp.grad_buf(ix) += g / tp.value(ix).max(kLogFloor);
        });
    }
    return out;
}

Tensor sqrt(const Tensor& x) {
    Tensor out(x.shape, x.data.max(0.0).sqrt());
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("sqrt", {ix}, out, [ix](Tape& tp, int self, const Array& g) {
            if (tp.wants(ix)) tp.grad_buf(ix) += g * 0.5 / tp.value(self).max(kLogFloor);
        });
    }
    return out;
}

Tensor scale(const Tensor& x, Scalar c) {
    Tensor out(x.shape, x.data * c);
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("scale", {ix}, out, [ix, c](Tape& tp, int, const Array& g) {
            if (tp.wants(ix)) tp.grad_buf(ix) += g * c;
        });
    }
    return out;
}

Tensor shift(const Tensor& x, Scalar c) {
    Tensor out(x.shape, x.data + c);
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("shift", {ix}, out, [ix](Tape& tp, int, const Array& g) {
            if (tp.wants(ix)) tp.grad_buf(ix) += g;
        });
    }
    return out;
}

// --- reductions and broadcast ---------------------------------------------------

Tensor sum(const Tensor& x, Index axis) {
    const AxisGeom geo = axis_geom("sum", x.shape, axis);
    Array od = Array::Zero(geo.outer * geo.inner);
    for (Index o = 0; o < geo.outer; ++o)
        for (Index j = 0; j < geo.n; ++j)
            od.segment(o * geo.inner, geo.inner) +=
                x.data.segment((o * geo.n + j) * geo.inner, geo.inner);
    Tensor out(drop_axis(x.shape, axis), std::move(od));
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("sum", {ix}, out, [ix, geo](Tape& tp, int, const Array& g) {
            if (!tp.wants(ix)) return;
            Array& gx = tp.grad_buf(ix);
            for (Index o = 0; o < geo.outer; ++o)
                for (Index j = 0; j < geo.n; ++j)
                    gx.segment((o * geo.n + j) * geo.inner, geo.inner) +=
                        g.segment(o * geo.inner, geo.inner);
        });
    }
    return out;
}

Tensor mean(const Tensor& x, Index axis) {
    const AxisGeom geo = axis_geom("mean", x.shape, axis);
    Array od = Array::Zero(geo.outer * geo.inner);
    for (Index o = 0; o < geo.outer; ++o)
        for (Index j = 0; j < geo.n; ++j)
            od.segment(o * geo.inner, geo.inner) +=
                x.data.segment((o * geo.n + j) * geo.inner, geo.inner);
    od /= static_cast<Scalar>(geo.n);
    Tensor out(drop_axis(x.shape, axis), std::move(od));
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("mean", {ix}, out, [ix, geo](Tape& tp, int, const Array& g) {
            if (!tp.wants(ix)) return;
            Array& gx = tp.grad_buf(ix);
            const Scalar inv = 1.0 / static_cast<Scalar>(geo.n);
            for (Index o = 0; o < geo.outer; ++o)
                for (Index j = 0; j < geo.n; ++j)
                    gx.segment((o * geo.n + j) * geo.inner, geo.inner) +=
                        g.segment(o * geo.inner, geo.inner) * inv;
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    Tensor out = Tensor::scalar(x.data.sum());
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("sum_all", {ix}, out, [ix](Tape& tp, int, const Array& g) {
            if (tp.wants(ix)) tp.grad_buf(ix) += g[0];
        });
    }
    return out;
}

Tensor mean_all(const Tensor& x) {
    if (x.size() == 0) throw DimensionError("mean_all: empty tensor");
    Tensor out = Tensor::scalar(x.data.mean());
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        const Scalar inv = 1.0 / static_cast<Scalar>(x.size());
        t->record("mean_all", {ix}, out, [ix, inv](Tape& tp, int, const Array& g) {
            if (tp.wants(ix)) tp.grad_buf(ix) += g[0] * inv;
        });
    }
    return out;
}

Tensor expand(const Tensor& v, const Shape& like, Index axis) {
    if (v.rank() != 1)
        throw DimensionError("expand: rank-1 source required, got " + shape_str(v.shape));
    const AxisGeom geo = axis_geom("expand", like, axis);
    if (v.size() != geo.n)
        throw DimensionError("expand: source length " + std::to_string(v.size()) +
                             " does not match axis " + std::to_string(axis) + " of " +
                             shape_str(like));
    Array od(numel(like));
    for (Index o = 0; o < geo.outer; ++o)
        for (Index j = 0; j < geo.n; ++j)
            od.segment((o * geo.n + j) * geo.inner, geo.inner).setConstant(v.data[j]);
    Tensor out(like, std::move(od));
    if (Tape* t = tape_for(v)) {
        const int iv = t->require(v);
        t->record("expand", {iv}, out, [iv, geo](Tape& tp, int, const Array& g) {
            if (!tp.wants(iv)) return;
            Array& gv = tp.grad_buf(iv);
            for (Index o = 0; o < geo.outer; ++o)
                for (Index j = 0; j < geo.n; ++j)
                    gv[j] += g.segment((o * geo.n + j) * geo.inner, geo.inner).sum();
        });
    }
    return out;
}

Tensor concat(std::span<const Tensor> parts, Index axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const Shape& ref = parts[0].shape;
    Index total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != static_cast<Index>(ref.size()))
            throw DimensionError("concat: rank mismatch between inputs");
        for (Index d = 0; d < p.rank(); ++d)
            if (d != axis && p.shape[static_cast<std::size_t>(d)] != ref[static_cast<std::size_t>(d)])
                throw DimensionError("concat: shapes differ off the concat axis: " +
                                     shape_str(ref) + " vs " + shape_str(p.shape));
        total += p.dim(axis);
    }
    Shape out_shape = ref;
    out_shape[static_cast<std::size_t>(axis)] = total;
    const AxisGeom geo = axis_geom("concat", out_shape, axis);

    Array od(numel(out_shape));
    Index off = 0;
    for (const Tensor& p : parts) {
        const Index pn = p.dim(axis);
        for (Index o = 0; o < geo.outer; ++o)
            od.segment((o * geo.n + off) * geo.inner, pn * geo.inner) =
                p.data.segment(o * pn * geo.inner, pn * geo.inner);
        off += pn;
    }
    Tensor out(out_shape, std::move(od));

    Tape* t = Tape::active();
    bool tracked = false;
    if (t)
        for (const Tensor& p : parts) tracked = tracked || t->tracks(p);
    if (t && tracked) {
        std::vector<int> ids;
        std::vector<Index> sizes;
        for (const Tensor& p : parts) {
            ids.push_back(t->require(p));
            sizes.push_back(p.dim(axis));
        }
        t->record("concat", ids, out, [ids, sizes, geo](Tape& tp, int, const Array& g) {
            Index off = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                const Index pn = sizes[k];
                if (tp.wants(ids[k])) {
                    Array& gp = tp.grad_buf(ids[k]);
                    for (Index o = 0; o < geo.outer; ++o)
                        gp.segment(o * pn * geo.inner, pn * geo.inner) +=
                            g.segment((o * geo.n + off) * geo.inner, pn * geo.inner);
                }
                off += pn;
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (numel(new_shape) != x.size())
        throw DimensionError("reshape: cannot view " + shape_str(x.shape) + " as " +
                             shape_str(new_shape));
    Tensor out(std::move(new_shape), x.data);
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("reshape", {ix}, out, [ix](Tape& tp, int, const Array& g) {
            if (tp.wants(ix)) tp.grad_buf(ix) += g;
        });
    }
    return out;
}

Tensor slice(const Tensor& x, Index axis, Index start, Index len) {
    const AxisGeom geo = axis_geom("slice", x.shape, axis);
    if (start < 0 || len < 1 || start + len > geo.n)
        throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") out of bounds for axis " +
                             std::to_string(axis) + " of " + shape_str(x.shape));
    Shape out_shape = x.shape;
    out_shape[static_cast<std::size_t>(axis)] = len;
    Array od(numel(out_shape));
    for (Index o = 0; o < geo.outer; ++o)
        od.segment(o * len * geo.inner, len * geo.inner) =
            x.data.segment((o * geo.n + start) * geo.inner, len * geo.inner);
    Tensor out(std::move(out_shape), std::move(od));
    if (Tape* t = tape_for(x)) {
        const int ix = t->require(x);
        t->record("slice", {ix}, out, [ix, geo, start, len](Tape& tp, int, const Array& g) {
            if (!tp.wants(ix)) return;
            Array& gx = tp.grad_buf(ix);
            for (Index o = 0; o < geo.outer; ++o)
                gx.segment((o * geo.n + start) * geo.inner, len * geo.inner) +=
                    g.segment(o * len * geo.inner, len * geo.inner);
        });
    }
    return out;
}

// --- convolution ----------------------------------------------------------------

Tensor conv1d(const Tensor& x, const Tensor& kernel) {
    if (x.rank() != 3 || kernel.rank() != 3)
        throw DimensionError("conv1d: expected rank-3 input and kernel, got " +
                             shape_str(x.shape) + " and " + shape_str(kernel.shape));
    const Index B = x.shape[0], C = x.shape[1], L = x.shape[2];
    const Index O = kernel.shape[0], KC = kernel.shape[1], K = kernel.shape[2];
    if (KC != C)
        throw DimensionError("conv1d: kernel channels " + std::to_string(KC) +
                             " do not match input channels " + std::to_string(C));
    if (L < K)
        throw DimensionError("conv1d: input length " + std::to_string(L) +
                             " shorter than kernel length " + std::to_string(K));
    const Index Lo = L - K + 1;

    Array od = Array::Zero(B * O * Lo);
    for (Index b = 0; b < B; ++b)
        for (Index o = 0; o < O; ++o) {
            auto out_seg = od.segment((b * O + o) * Lo, Lo);
            for (Index c = 0; c < C; ++c)
                for (Index k = 0; k < K; ++k)
                    out_seg += x.data.segment((b * C + c) * L + k, Lo) *
                               kernel.data[(o * C + c) * K + k];
        }
    Tensor out({B, O, Lo}, std::move(od));
    if (Tape* t = tape_for(x, kernel)) {
        const int ix = t->require(x);
        const int ik = t->require(kernel);
        t->record("conv1d", {ix, ik}, out,
                  [ix, ik, B, C, L, O, K, Lo](Tape& tp, int, const Array& g) {
                      if (tp.wants(ix)) {
                          Array& gx = tp.grad_buf(ix);
                          const Array& w = tp.value(ik);
                          for (Index b = 0; b < B; ++b)
                              for (Index o = 0; o < O; ++o) {
                                  auto gseg = g.segment((b * O + o) * Lo, Lo);
                                  for (Index c = 0; c < C; ++c)
                                      for (Index k = 0; k < K; ++k)
                                          gx.segment((b * C + c) * L + k, Lo) +=
                                              gseg * w[(o * C + c) * K + k];
                              }
                      }
                      if (tp.wants(ik)) {
                          Array& gw = tp.grad_buf(ik);
                          const Array& xv = tp.value(ix);
                          for (Index b = 0; b < B; ++b)
                              for (Index o = 0; o < O; ++o) {
                                  auto gseg = g.segment((b * O + o) * Lo, Lo);
                                  for (Index c = 0; c < C; ++c)
                                      for (Index k = 0; k < K; ++k)
                                          gw[(o * C + c) * K + k] +=
                                              (gseg * xv.segment((b * C + c) * L + k, Lo)).sum();
                              }
                      }
                  });
    }
    return out;
}

// --- softmax and loss --------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
    if (logits.size() == 0 || logits.rank() < 1 || logits.rank() > 2)
        throw DimensionError("softmax: expected non-empty rank-1 or rank-2 tensor, got " +
                             shape_str(logits.shape));
    const Index cols = logits.shape.back();
    const Index rows = logits.size() / cols;
    Array od(logits.size());
    for (Index r = 0; r < rows; ++r) {
        auto row = logits.data.segment(r * cols, cols);
        const Scalar m = row.maxCoeff();
        Array e = (row - m).exp();
        od.segment(r * cols, cols) = e / e.sum();
    }
    Tensor out(logits.shape, std::move(od));
    if (Tape* t = tape_for(logits)) {
        const int ix = t->require(logits);
        t->record("softmax", {ix}, out, [ix, rows, cols](Tape& tp, int self, const Array& g) {
            if (!tp.wants(ix)) return;
            const Array& y = tp.value(self);
            Array& gx = tp.grad_buf(ix);
            for (Index r = 0; r < rows; ++r) {
                auto yr = y.segment(r * cols, cols);
                auto gr = g.segment(r * cols, cols);
                const Scalar dot = (gr * yr).sum();
                gx.segment(r * cols, cols) += yr * (gr - dot);
            }
        });
    }
    return out;
}

Tensor categorical_cross_entropy(const Tensor& probs, const Tensor& onehot) {
    if (probs.shape != onehot.shape || probs.rank() < 1 || probs.rank() > 2)
        throw DimensionError("cross_entropy: probs " + shape_str(probs.shape) +
                             " and labels " + shape_str(onehot.shape) +
                             " must be matching rank-1 or rank-2 tensors");
    const Index cols = probs.shape.back();
    const Index rows = probs.size() / cols;
    for (Index r = 0; r < rows; ++r) {
        const Scalar rowsum = probs.data.segment(r * cols, cols).sum();
        if (std::abs(rowsum - 1.0) > 1e-6)
            throw ValidationError("cross_entropy: probability row " + std::to_string(r) +
                                  " sums to " + std::to_string(rowsum));
        Index ones = 0;
        for (Index c = 0; c < cols; ++c) {
            const Scalar v = onehot.data[r * cols + c];
            if (std::abs(v - 1.0) <= 1e-9)
                ++ones;
            else if (std::abs(v) > 1e-9)
                throw ValidationError("cross_entropy: label row " + std::to_string(r) +
                                      " is not one-hot");
        }
        if (ones != 1)
            throw ValidationError("cross_entropy: label row " + std::to_string(r) +
                                  " has " + std::to_string(ones) + " hot entries");
    }

    const Scalar inv_batch = 1.0 / static_cast<Scalar>(rows);
    Array clamped = probs.data.max(kLogFloor).min(1.0);
    const Scalar loss = -(onehot.data * clamped.log()).sum() * inv_batch;
    Tensor out = Tensor::scalar(loss);
    if (Tape* t = tape_for(probs, onehot)) {
        const int ip = t->require(probs);
        const int il = t->require(onehot);
        t->record("cross_entropy", {ip, il}, out,
                  [ip, il, inv_batch](Tape& tp, int, const Array& g) {
                      const Scalar go = g[0] * inv_batch;
                      const Array& p = tp.value(ip);
                      const Array& l = tp.value(il);
                      if (tp.wants(ip)) {
                          Array inside =
                              ((p >= kLogFloor) && (p <= 1.0)).cast<Scalar>();
                          tp.grad_buf(ip) +=
                              -go * l * inside / p.max(kLogFloor).min(1.0);
                      }
                      if (tp.wants(il))
                          tp.grad_buf(il) += -go * p.max(kLogFloor).min(1.0).log();
                  });
    }
    return out;
}

}  // namespace harfuse
