#pragma once

#include <unordered_map>
#include <utility>
#include <vector>

#include "harfuse/tensor.hpp"

namespace harfuse {

// Adam with bias correction. One state drives a whole parameter set; the
// per-parameter moment buffers are keyed by each parameter's shared grad
// buffer, so the same state keeps working when callers copy tensors around.
struct AdamState {
    Scalar lr = 1e-4;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar epsilon = 1e-8;
    std::int64_t t = 0;

    struct Moments {
        Array m;
        Array v;
    };
    std::unordered_map<const Array*, Moments> moments;
};

// One bias-corrected update for every parameter, then grads are zeroed.
// Parameters must carry a populated grad buffer.
void adam_step(const std::vector<Tensor*>& params, AdamState& state);

}  // namespace harfuse
