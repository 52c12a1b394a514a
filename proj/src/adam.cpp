#include "harfuse/adam.hpp"

#include <cmath>

namespace harfuse {

void adam_step(const std::vector<Tensor*>& params, AdamState& state) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor* p = params[i];
        if (!p || !p->requires_grad || !p->grad)
            throw StateError("adam_step: parameter " + std::to_string(i) +
                             " has no gradient buffer");
        if (p->grad->size() != p->size())
            throw StateError("adam_step: parameter " + std::to_string(i) +
                             " gradient length does not match parameter length");
    }
    state.t += 1;
    const Scalar bc1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.t));
    const Scalar bc2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.t));
    for (Tensor* p : params) {
        auto& mom = state.moments[p->grad.get()];
        if (mom.m.size() != p->size()) {
            mom.m = Array::Zero(p->size());
            mom.v = Array::Zero(p->size());
        }
        const Array& g = *p->grad;
        mom.m = state.beta1 * mom.m + (1.0 - state.beta1) * g;
        mom.v = state.beta2 * mom.v + (1.0 - state.beta2) * g * g;
        Array mhat = mom.m / bc1;
        Array vhat = mom.v / bc2;
        p->data -= state.lr * mhat / (vhat.sqrt() + state.epsilon);
        p->grad->setZero();
    }
}

}  // namespace harfuse
