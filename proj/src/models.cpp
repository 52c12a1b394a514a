#include "harfuse/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "harfuse/adam.hpp"

namespace harfuse {

namespace {

constexpr Index kPoseFeatureDim = 50;
constexpr Index kConvFilters = 16;
constexpr Index kConvKernel = 3;
constexpr Scalar kDropoutRate = 0.4;

void check_head(Index n_classes) {
    if (n_classes < 2) throw ConfigError("need at least two classes");
}

void check_batch_input(const Tensor& x, Index T, Index features, const char* stream) {
    if (x.rank() != 3 || x.dim(1) != T || x.dim(2) != features)
        throw DimensionError(std::string(stream) + " stream expects [batch x " +
                             std::to_string(T) + " x " + std::to_string(features) + "], got " +
                             shape_str(x.shape));
    if (x.dim(0) < 1) throw DimensionError("empty batch");
}

std::vector<int> argmax_of(const Tensor& probs) {
    const Index n = probs.dim(0), c = probs.dim(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        Index best = 0;
        for (Index j = 1; j < c; ++j)
            if (probs.data[i * c + j] > probs.data[i * c + best]) best = j;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

}  // namespace

// --- StreamNet shared helpers --------------------------------------------------

Index StreamNet::param_count() {
    std::vector<Tensor*> ps;
    params(ps);
    Index total = 0;
    for (const Tensor* p : ps) total += p->size();
    return total;
}

NamedTensors StreamNet::snapshot() {
    ParamRefs refs;
    state(refs);
    NamedTensors out;
    out.reserve(refs.size());
    for (auto& [name, t] : refs) out.emplace_back(name, t->detached());
    return out;
}

void StreamNet::load_state(const NamedTensors& saved) {
    ParamRefs refs;
    state(refs);
    std::map<std::string, Tensor*> by_name;
    for (auto& [name, t] : refs) by_name[name] = t;
    if (saved.size() != refs.size())
        throw DataError("checkpoint has " + std::to_string(saved.size()) + " tensors, net needs " +
                        std::to_string(refs.size()));
    for (const auto& [name, t] : saved) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint tensor '" + name + "' is unknown");
        if (it->second->shape != t.shape)
            throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(t.shape) +
                            ", net expects " + shape_str(it->second->shape));
        it->second->data = t.data;
    }
}

// --- vision stream ----------------------------------------------------------------

VisionStreamNet::VisionStreamNet(Index classes, Index T, std::uint64_t seed)
    : conv(kConvFilters, 1, kConvKernel, split_seed(seed, 1)),
      bn(kConvFilters),
      dropout(kDropoutRate, split_seed(seed, 2)),
      lstm(kConvFilters, 20, /*return_sequences=*/false, split_seed(seed, 3)),
      head(20, classes, DenseLayer::Activation::Softmax, split_seed(seed, 4)) {
    check_head(classes);
    if (T < kConvKernel)
        throw ConfigError("vision window length " + std::to_string(T) +
                          " is shorter than the conv kernel");
    n_classes = classes;
    window_len = T;
}

Tensor VisionStreamNet::forward(const Tensor& x, Mode fwd_mode) {
    check_batch_input(x, window_len, kPoseFeatureDim, "vision");
    const Index B = x.dim(0);
    // per-frame convolution over the 50 keypoint features (one channel)
    Tensor h = time_distributed(x, [&](const Tensor& frame) {
        return conv.forward(reshape(frame, {B, 1, kPoseFeatureDim}));
    });                                            // [B x T x 16 x 48]
    h = bn.forward(h, 2, fwd_mode);                // normalize the conv channels
    h = dropout.forward(h, fwd_mode);
    h = time_distributed(h, [](const Tensor& frame) { return global_average_pool(frame); });
    h = lstm.forward(h);                           // [B x 20]
    return head.forward(h);
}

void VisionStreamNet::params(std::vector<Tensor*>& out) {
    conv.params(out);
    bn.params(out);
    lstm.params(out);
    head.params(out);
}

void VisionStreamNet::state(ParamRefs& out) {
    conv.state("vision/conv", out);
    bn.state("vision/bn", out);
    lstm.state("vision/lstm", out);
    head.state("vision/head", out);
}

void VisionStreamNet::reseed(std::uint64_t seed) { dropout.reseed(split_seed(seed, 2)); }

// --- inertial stream -----------------------------------------------------------------

InertialStreamNet::InertialStreamNet(Index classes, Index T, Index channels, std::uint64_t seed)
    : n_channels(channels),
      lstm1(channels, 256, /*return_sequences=*/true, split_seed(seed, 1)),
      bn1(256),
      drop1(kDropoutRate, split_seed(seed, 2)),
      lstm2(256, 128, /*return_sequences=*/true, split_seed(seed, 3)),
      bn2(128),
      drop2(kDropoutRate, split_seed(seed, 4)),
      lstm3(128, 64, /*return_sequences=*/false, split_seed(seed, 5)),
      head(64, classes, DenseLayer::Activation::Softmax, split_seed(seed, 6)) {
    check_head(classes);
    if (T < 1) throw ConfigError("window length must be positive");
    if (channels < 1) throw ConfigError("need at least one inertial channel");
    n_classes = classes;
    window_len = T;
}

Tensor InertialStreamNet::forward(const Tensor& x, Mode fwd_mode) {
    check_batch_input(x, window_len, n_channels, "inertial");
    Tensor h = lstm1.forward(x);        // [B x T x 256]
    h = bn1.forward(h, 2, fwd_mode);
    h = drop1.forward(h, fwd_mode);
    h = lstm2.forward(h);               // [B x T x 128]
    h = bn2.forward(h, 2, fwd_mode);
    h = drop2.forward(h, fwd_mode);
    h = lstm3.forward(h);               // [B x 64]
    return head.forward(h);
}

void InertialStreamNet::params(std::vector<Tensor*>& out) {
    lstm1.params(out);
    bn1.params(out);
    lstm2.params(out);
    bn2.params(out);
    lstm3.params(out);
    head.params(out);
}

void InertialStreamNet::state(ParamRefs& out) {
    lstm1.state("inertial/lstm1", out);
    bn1.state("inertial/bn1", out);
    lstm2.state("inertial/lstm2", out);
    bn2.state("inertial/bn2", out);
    lstm3.state("inertial/lstm3", out);
    head.state("inertial/head", out);
}

void InertialStreamNet::reseed(std::uint64_t seed) {
    drop1.reseed(split_seed(seed, 2));
    drop2.reseed(split_seed(seed, 4));
}

VisionStreamNet build_vision_net(Index n_classes, Index T, std::uint64_t seed) {
    return VisionStreamNet(n_classes, T, seed);
}

InertialStreamNet build_inertial_net(Index n_classes, Index T, Index n_channels,
                                     std::uint64_t seed) {
    return InertialStreamNet(n_classes, T, n_channels, seed);
}

// --- training --------------------------------------------------------------------

TrainConfig train_profile(std::string_view stream, std::string_view profile) {
    if (stream != "vision" && stream != "inertial")
        throw ConfigError("unknown stream '" + std::string(stream) + "'");
    TrainConfig cfg;
    if (profile == "default") {
        cfg.epochs = stream == "vision" ? 200 : 100;
    } else if (profile == "utd-vision") {
        cfg.epochs = stream == "vision" ? 500 : 100;
    } else {
        throw ConfigError("unknown train profile '" + std::string(profile) +
                          "' (expected default or utd-vision)");
    }
    return cfg;
}

std::string history_csv(const TrainHistory& history) {
    std::string out = "epoch,train_acc,train_loss,val_acc,val_loss\n";
    char buf[160];
    for (std::size_t e = 0; e < history.train_acc.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", e + 1,
                      history.train_acc[e], history.train_loss[e], history.val_acc[e],
                      history.val_loss[e]);
        out += buf;
    }
    return out;
}

Tensor one_hot(const std::vector<int>& labels, Index n_classes) {
    if (n_classes < 1) throw ConfigError("n_classes must be positive");
    Tensor y = Tensor::zeros({static_cast<Index>(labels.size()), n_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes)
            throw ValidationError("label " + std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
        y.data[static_cast<Index>(i) * n_classes + labels[i]] = 1.0;
    }
    return y;
}

Tensor gather_rows(const Tensor& x, const std::vector<Index>& idx) {
    if (x.rank() < 1) throw DimensionError("gather_rows: rank-0 input");
    Index row = 1;
    for (Index d = 1; d < x.rank(); ++d) row *= x.dim(d);
    Shape shape = x.shape;
    shape[0] = static_cast<Index>(idx.size());
    Tensor out = Tensor::zeros(shape);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= x.dim(0))
            throw DimensionError("gather_rows: index out of range");
        out.data.segment(static_cast<Index>(i) * row, row) = x.data.segment(idx[i] * row, row);
    }
    return out;
}

namespace {

struct EvalStats {
    Scalar loss = 0;
    Scalar acc = 0;
};

EvalStats eval_split(StreamNet& net, const Tensor& x, const std::vector<int>& y, Index n_classes) {
    const Tensor probs = net.forward(x, Mode::Eval);
    const Tensor loss = categorical_cross_entropy(probs, one_hot(y, n_classes));
    const std::vector<int> pred = argmax_of(probs);
    Index correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (pred[i] == y[i]) ++correct;
    return {loss.value(), static_cast<Scalar>(correct) / static_cast<Scalar>(y.size())};
}

}  // namespace

TrainResult train(StreamNet& net, const Tensor& x_train, const std::vector<int>& y_train,
                  const Tensor& x_val, const std::vector<int>& y_val, const TrainConfig& cfg) {
    if (cfg.batch_size < 1 || cfg.epochs < 1) throw ConfigError("batch size and epochs must be positive");
    if (cfg.lr < 0) throw ConfigError("learning rate must be non-negative");
    const Index n = x_train.dim(0);
    if (n < 1) throw ConfigError("training set is empty");
    if (static_cast<Index>(y_train.size()) != n)
        throw ValidationError("training labels do not match the sample count");
    if (x_val.dim(0) < 1 || static_cast<Index>(y_val.size()) != x_val.dim(0))
        throw ValidationError("validation labels do not match the sample count");

    net.mode = Mode::Train;
    net.reseed(split_seed(cfg.seed, 0xD0));

    std::vector<Tensor*> params;
    net.params(params);
    AdamState adam;
    adam.lr = cfg.lr;

    std::mt19937_64 shuffle_rng(split_seed(cfg.seed, 0x5F));
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    TrainResult result;
    Scalar best_acc = -1;
    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle_each_epoch) shuffle_inplace(order, shuffle_rng);

        Scalar loss_sum = 0;
        Index correct = 0;
        Index batch_index = 0;
        for (Index start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const Index len = std::min(cfg.batch_size, n - start);
            std::vector<Index> batch(order.begin() + start, order.begin() + start + len);
            const Tensor xb = gather_rows(x_train, batch);
            std::vector<int> yb(static_cast<std::size_t>(len));
            for (Index i = 0; i < len; ++i)
                yb[static_cast<std::size_t>(i)] = y_train[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];

            Tape tape;
            TapeScope scope(tape);
            const Tensor probs = net.forward(xb, Mode::Train);
            if (!probs.data.allFinite())
                throw TrainingDivergence("non-finite scores at epoch " +
                                         std::to_string(epoch + 1) + ", batch " +
                                         std::to_string(batch_index + 1));
            const Tensor loss = categorical_cross_entropy(probs, one_hot(yb, net.n_classes));
            if (!std::isfinite(loss.value()))
                throw TrainingDivergence("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                         ", batch " + std::to_string(batch_index + 1));
            backward(loss, tape);
            adam_step(params, adam);

            loss_sum += loss.value() * static_cast<Scalar>(len);
            const std::vector<int> pred = argmax_of(probs);
            for (Index i = 0; i < len; ++i)
                if (pred[static_cast<std::size_t>(i)] == yb[static_cast<std::size_t>(i)]) ++correct;
        }

        const EvalStats val = eval_split(net, x_val, y_val, net.n_classes);
        result.history.train_loss.push_back(loss_sum / static_cast<Scalar>(n));
        result.history.train_acc.push_back(static_cast<Scalar>(correct) / static_cast<Scalar>(n));
        result.history.val_loss.push_back(val.loss);
        result.history.val_acc.push_back(val.acc);

        if (val.acc > best_acc) {
            best_acc = val.acc;
            result.best_state = net.snapshot();
            result.best_epoch = epoch + 1;
        }
    }
    result.final_state = net.snapshot();
    return result;
}

Tensor predict_scores(StreamNet& net, const Tensor& x) {
    if (net.mode != Mode::Eval)
        throw StateError("predict_scores requires an eval-mode net (dropout must be off)");
    return net.forward(x, Mode::Eval);
}

}  // namespace harfuse
