#include "harfuse/layers.hpp"

#include <cmath>

namespace harfuse {

namespace {

Tensor trainable(Tensor t) {
    t.set_requires_grad(true);
    return t;
}

}  // namespace

Tensor glorot_uniform(Shape shape, Index fan_in, Index fan_out, std::uint64_t seed) {
    for (Index d : shape)
        if (d < 0) throw ConfigError("layer init: negative dimension in " + shape_str(shape));
    const Scalar limit = std::sqrt(6.0 / static_cast<Scalar>(std::max<Index>(fan_in + fan_out, 1)));
    std::mt19937_64 rng(seed);
    const Index n = numel(shape);
    Array data(n);
    for (Index i = 0; i < n; ++i) data[i] = uniform_range(rng, -limit, limit);
    return Tensor(std::move(shape), std::move(data));
}

// --- Conv1DLayer -------------------------------------------------------------

Conv1DLayer::Conv1DLayer(Index out_ch, Index in_ch, Index kernel_len, std::uint64_t seed)
    : kernel(trainable(glorot_uniform({out_ch, in_ch, kernel_len}, in_ch * kernel_len,
                                      out_ch * kernel_len, seed))),
      bias(trainable(Tensor::zeros({out_ch}))) {
    if (out_ch < 1 || in_ch < 1 || kernel_len < 1)
        throw ConfigError("conv1d: channel and kernel sizes must be positive");
}

Tensor Conv1DLayer::forward(const Tensor& x) const {
    Tensor y = conv1d(x, kernel);
    return y + expand(bias, y.shape, 1);
}

void Conv1DLayer::params(std::vector<Tensor*>& out) {
    out.push_back(&kernel);
    out.push_back(&bias);
}

void Conv1DLayer::state(const std::string& prefix, ParamRefs& out) {
    out.emplace_back(prefix + "/kernel", &kernel);
    out.emplace_back(prefix + "/bias", &bias);
}

// --- BatchNormLayer -----------------------------------------------------------

BatchNormLayer::BatchNormLayer(Index features)
    : gamma(trainable(Tensor::full({features}, 1.0))),
      beta(trainable(Tensor::zeros({features}))),
      running_mean(Tensor::zeros({features})),
      running_var(Tensor::full({features}, 1.0)) {
    if (features < 1) throw ConfigError("batchnorm: feature count must be positive");
}

Tensor BatchNormLayer::forward(const Tensor& x, Index feature_axis, Mode mode) {
    if (feature_axis < 0 || feature_axis >= x.rank() || x.dim(feature_axis) != gamma.size())
        throw DimensionError("batchnorm: axis " + std::to_string(feature_axis) + " of " +
                             shape_str(x.shape) + " does not carry " +
                             std::to_string(gamma.size()) + " features");
    if (mode == Mode::Train) {
        if (x.dim(0) < 2)
            throw ValidationError("batchnorm: train mode needs a batch of at least 2, got " +
                                  std::to_string(x.dim(0)));
        // mean over every non-feature axis, reducing from the back so axis ids
        // stay valid; axes are uniform, so chained per-axis means equal the
        // joint mean
        Tensor mu = x;
        for (Index axis = x.rank() - 1; axis >= 0; --axis)
            if (axis != feature_axis) mu = mean(mu, axis);
        Tensor centered = x - expand(mu, x.shape, feature_axis);
        Tensor sq = centered * centered;
        Tensor var = sq;
        for (Index axis = x.rank() - 1; axis >= 0; --axis)
            if (axis != feature_axis) var = mean(var, axis);
        Tensor denom = sqrt(shift(var, epsilon));
        Tensor xhat = centered / expand(denom, x.shape, feature_axis);
        Tensor y = xhat * expand(gamma, x.shape, feature_axis) +
                   expand(beta, x.shape, feature_axis);
        running_mean.data = momentum * running_mean.data + (1.0 - momentum) * mu.data;
        running_var.data = momentum * running_var.data + (1.0 - momentum) * var.data;
        return y;
    }
    Tensor denom({running_var.size()}, (running_var.data + epsilon).sqrt());
    Tensor xhat = (x - expand(running_mean, x.shape, feature_axis)) /
                  expand(denom, x.shape, feature_axis);
    return xhat * expand(gamma, x.shape, feature_axis) + expand(beta, x.shape, feature_axis);
}

void BatchNormLayer::params(std::vector<Tensor*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNormLayer::state(const std::string& prefix, ParamRefs& out) {
    out.emplace_back(prefix + "/gamma", &gamma);
    out.emplace_back(prefix + "/beta", &beta);
    out.emplace_back(prefix + "/running_mean", &running_mean);
    out.emplace_back(prefix + "/running_var", &running_var);
}

// --- DropoutLayer ---------------------------------------------------------------

DropoutLayer::DropoutLayer(Scalar rate, std::uint64_t seed) : rate(rate), rng_(seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
}

void DropoutLayer::reseed(std::uint64_t seed) { rng_.seed(seed); }

Tensor DropoutLayer::forward(const Tensor& x, Mode mode) {
    if (mode == Mode::Eval || rate == 0.0) return x;
    const Scalar keep = 1.0 - rate;
    Array mask(x.size());
    for (Index i = 0; i < x.size(); ++i)
        mask[i] = uniform01(rng_) < rate ? 0.0 : 1.0 / keep;
    return x * Tensor(x.shape, std::move(mask));
}

// --- LSTMLayer -------------------------------------------------------------------

LSTMLayer::LSTMLayer(Index input_dim, Index units, bool return_sequences, std::uint64_t seed)
    : input_dim(input_dim),
      units(units),
      return_sequences(return_sequences),
      W(trainable(glorot_uniform({input_dim, 4 * units}, input_dim, 4 * units,
                                 split_seed(seed, 0)))),
      U(trainable(glorot_uniform({units, 4 * units}, units, 4 * units, split_seed(seed, 1)))),
      b(trainable(Tensor::zeros({4 * units}))) {
    if (input_dim < 1 || units < 1) throw ConfigError("lstm: sizes must be positive");
    // forget-gate bias segment (gate order i, f, g, o)
    for (Index j = units; j < 2 * units; ++j) b.data[j] = 0.5;
}

Tensor LSTMLayer::forward(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(2) != input_dim)
        throw DimensionError("lstm: expected input [batch x T x " + std::to_string(input_dim) +
                             "], got " + shape_str(x.shape));
    const Index B = x.dim(0), T = x.dim(1);
    Tensor h = Tensor::zeros({B, units});
    Tensor c = Tensor::zeros({B, units});
    std::vector<Tensor> steps;
    if (return_sequences) steps.reserve(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) {
        Tensor xt = reshape(slice(x, 1, t, 1), {B, input_dim});
        Tensor z = matmul(xt, W) + matmul(h, U) + b;
        Tensor i = sigmoid(slice(z, 1, 0, units));
        Tensor f = sigmoid(slice(z, 1, units, units));
        Tensor g = tanh(slice(z, 1, 2 * units, units));
        Tensor o = sigmoid(slice(z, 1, 3 * units, units));
        c = f * c + i * g;
        h = o * tanh(c);
        if (return_sequences) steps.push_back(reshape(h, {B, 1, units}));
    }
    if (!return_sequences) return h;
    return concat(steps, 1);
}

void LSTMLayer::params(std::vector<Tensor*>& out) {
    out.push_back(&W);
    out.push_back(&U);
    out.push_back(&b);
}

void LSTMLayer::state(const std::string& prefix, ParamRefs& out) {
    out.emplace_back(prefix + "/W", &W);
    out.emplace_back(prefix + "/U", &U);
    out.emplace_back(prefix + "/b", &b);
}

// --- DenseLayer --------------------------------------------------------------------

DenseLayer::DenseLayer(Index in, Index out, Activation act, std::uint64_t seed)
    : W(trainable(glorot_uniform({in, out}, in, out, seed))),
      b(trainable(Tensor::zeros({out}))),
      activation(act) {
    if (in < 1 || out < 1) throw ConfigError("dense: sizes must be positive");
}

Tensor DenseLayer::forward(const Tensor& x) const {
    Tensor y = matmul(x, W) + b;
    return activation == Activation::Softmax ? softmax(y) : y;
}

void DenseLayer::params(std::vector<Tensor*>& out) {
    out.push_back(&W);
    out.push_back(&b);
}

void DenseLayer::state(const std::string& prefix, ParamRefs& out) {
    out.emplace_back(prefix + "/W", &W);
    out.emplace_back(prefix + "/b", &b);
}

// --- wrappers -------------------------------------------------------------------------

Tensor time_distributed(const Tensor& x, const std::function<Tensor(const Tensor&)>& f) {
    if (x.rank() < 2)
        throw DimensionError("time_distributed: need [batch x T x ...], got " +
                             shape_str(x.shape));
    const Index B = x.dim(0), T = x.dim(1);
    std::vector<Tensor> steps;
    steps.reserve(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) {
        Shape slice_shape{B};
        for (Index d = 2; d < x.rank(); ++d) slice_shape.push_back(x.dim(d));
        Tensor yt = f(reshape(slice(x, 1, t, 1), std::move(slice_shape)));
        Shape stacked{B, 1};
        for (Index d = 1; d < yt.rank(); ++d) stacked.push_back(yt.dim(d));
        steps.push_back(reshape(yt, std::move(stacked)));
    }
    return concat(steps, 1);
}

Tensor global_average_pool(const Tensor& x) {
    if (x.rank() != 3)
        throw DimensionError("global_average_pool: expected [batch x ch x L], got " +
                             shape_str(x.shape));
    return mean(x, 2);
}

}  // namespace harfuse
