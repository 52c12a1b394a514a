#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "harfuse/checkpoint.hpp"
#include "harfuse/layers.hpp"

namespace harfuse {

// Shared surface of the two stream classifiers. Nets are built in train
// mode; callers switch to eval mode before scoring so dropout noise can
// never leak into predictions.
struct StreamNet {
    Mode mode = Mode::Train;
    Index n_classes = 0;
    Index window_len = 0;

    virtual Tensor forward(const Tensor& x, Mode mode) = 0;
    virtual void params(std::vector<Tensor*>& out) = 0;
    virtual void state(ParamRefs& out) = 0;
    virtual void reseed(std::uint64_t seed) = 0;

    virtual ~StreamNet() = default;

    Index param_count();
    NamedTensors snapshot();                     // deep copy of state()
    void load_state(const NamedTensors& saved);  // DataError on name/shape mismatch
};

// Vision stream: a per-frame 1-D convolution (16 filters, kernel 3, one
// input channel) over the 50 keypoint features, batch-norm over the conv
// channels, dropout 0.4, per-frame global average pooling, a 20-unit LSTM
// returning its last step, and a softmax head.
struct VisionStreamNet final : StreamNet {
    Conv1DLayer conv;
    BatchNormLayer bn;
    DropoutLayer dropout;
    LSTMLayer lstm;
    DenseLayer head;

    VisionStreamNet(Index n_classes, Index T, std::uint64_t seed);
    Tensor forward(const Tensor& x, Mode mode) override;  // [B x T x 50] -> [B x n_classes]
    void params(std::vector<Tensor*>& out) override;
    void state(ParamRefs& out) override;  // names under "vision/..."
    void reseed(std::uint64_t seed) override;
};

// Inertial stream: stacked LSTMs of 256/128/64 units with batch-norm and
// dropout 0.4 between them, the last LSTM returning its final step, and a
// softmax head.
struct InertialStreamNet final : StreamNet {
    Index n_channels;
    LSTMLayer lstm1;
    BatchNormLayer bn1;
    DropoutLayer drop1;
    LSTMLayer lstm2;
    BatchNormLayer bn2;
    DropoutLayer drop2;
    LSTMLayer lstm3;
    DenseLayer head;

    InertialStreamNet(Index n_classes, Index T, Index n_channels, std::uint64_t seed);
    Tensor forward(const Tensor& x, Mode mode) override;  // [B x T x C] -> [B x n_classes]
    void params(std::vector<Tensor*>& out) override;
    void state(ParamRefs& out) override;  // names under "inertial/..."
    void reseed(std::uint64_t seed) override;
};

VisionStreamNet build_vision_net(Index n_classes, Index T, std::uint64_t seed = 0);
InertialStreamNet build_inertial_net(Index n_classes, Index T, Index n_channels,
                                     std::uint64_t seed = 0);

struct TrainConfig {
    Index batch_size = 32;
    Scalar lr = 1e-4;
    Index epochs = 100;
    std::uint64_t seed = 0;
    bool shuffle_each_epoch = true;
};

// Documented epoch budgets: profile "default" trains the inertial stream for
// 100 epochs and the vision stream for 200; profile "utd-vision" raises the
// vision budget to 500.
TrainConfig train_profile(std::string_view stream, std::string_view profile);

struct TrainHistory {
    std::vector<Scalar> train_acc, train_loss, val_acc, val_loss;
};

// CSV export: "epoch,train_acc,train_loss,val_acc,val_loss".
std::string history_csv(const TrainHistory& history);

struct TrainResult {
    TrainHistory history;
    NamedTensors final_state;
    NamedTensors best_state;  // highest validation accuracy (earliest on ties)
    Index best_epoch = 0;
};

// Minibatch Adam on categorical cross-entropy. Per-epoch validation runs in
// eval mode; there is no early stopping. A non-finite loss aborts with
// TrainingDivergence naming the epoch and batch.
TrainResult train(StreamNet& net, const Tensor& x_train, const std::vector<int>& y_train,
                  const Tensor& x_val, const std::vector<int>& y_val, const TrainConfig& cfg);

// One probability row per sample; requires eval mode (StateError otherwise).
Tensor predict_scores(StreamNet& net, const Tensor& x);

// [N x C] one-hot rows from class labels.
Tensor one_hot(const std::vector<int>& labels, Index n_classes);

// Gathers x[idx[0]], x[idx[1]], ... along axis 0.
Tensor gather_rows(const Tensor& x, const std::vector<Index>& idx);

}  // namespace harfuse
