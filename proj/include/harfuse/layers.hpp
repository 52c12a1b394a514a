#pragma once

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "harfuse/tensor.hpp"

namespace harfuse {

enum class Mode { Train, Eval };

// Named references to a layer's persistent tensors, used for checkpoints.
using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

// Glorot-uniform init: U(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, Index fan_in, Index fan_out, std::uint64_t seed);

// Valid 1-d cross-correlation plus per-channel bias.
struct Conv1DLayer {
    Tensor kernel;  // [out_ch x in_ch x kernel_len]
    Tensor bias;    // [out_ch]

    Conv1DLayer(Index out_ch, Index in_ch, Index kernel_len, std::uint64_t seed);
    Tensor forward(const Tensor& x) const;  // [B x in_ch x L] -> [B x out_ch x L-K+1]
    void params(std::vector<Tensor*>& out);
    void state(const std::string& prefix, ParamRefs& out);
};

// Normalizes over every axis except `feature_axis`. Train mode uses batch
// statistics (biased variance) and folds them into the running stats; eval
// mode normalizes by the running stats only.
struct BatchNormLayer {
    Tensor gamma;         // [features]
    Tensor beta;          // [features]
    Tensor running_mean;  // [features], updated in train mode, never trained
    Tensor running_var;   // [features]
    Scalar momentum = 0.99;
    Scalar epsilon = 1e-3;

    explicit BatchNormLayer(Index features);
    Tensor forward(const Tensor& x, Index feature_axis, Mode mode);
    void params(std::vector<Tensor*>& out);
    void state(const std::string& prefix, ParamRefs& out);
};

// Inverted dropout: train mode zeroes units with probability `rate` and
// scales survivors by 1/(1-rate); eval mode is the identity.
struct DropoutLayer {
    Scalar rate;

    DropoutLayer(Scalar rate, std::uint64_t seed);
    Tensor forward(const Tensor& x, Mode mode);
    void reseed(std::uint64_t seed);

private:
    std::mt19937_64 rng_;
};

// Standard LSTM, gate order (input, forget, cell-candidate, output), zero
// initial state, forget-gate bias segment initialized to 0.5.
struct LSTMLayer {
    Index input_dim;
    Index units;
    bool return_sequences;
    Tensor W;  // [input_dim x 4*units]
    Tensor U;  // [units x 4*units]
    Tensor b;  // [4*units]

    LSTMLayer(Index input_dim, Index units, bool return_sequences, std::uint64_t seed);
    // [B x T x input_dim] -> [B x T x units] if return_sequences else [B x units]
    Tensor forward(const Tensor& x) const;
    void params(std::vector<Tensor*>& out);
    void state(const std::string& prefix, ParamRefs& out);
};

struct DenseLayer {
    enum class Activation { None, Softmax };

    Tensor W;  // [in x out]
    Tensor b;  // [out]
    Activation activation;

    DenseLayer(Index in, Index out, Activation act, std::uint64_t seed);
    Tensor forward(const Tensor& x) const;  // [B x in] -> [B x out]
    void params(std::vector<Tensor*>& out);
    void state(const std::string& prefix, ParamRefs& out);
};

// Applies `f` to each time slice x[:, t, ...] of [B x T x ...] and stacks the
// results along axis 1; gradients into f's parameters sum across time.
Tensor time_distributed(const Tensor& x, const std::function<Tensor(const Tensor&)>& f);

// Mean over the length axis: [B x C x L] -> [B x C].
Tensor global_average_pool(const Tensor& x);

}  // namespace harfuse
