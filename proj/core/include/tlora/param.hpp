#pragma once

#include "tlora/matrix.hpp"

namespace tlora {

// A trainable tensor: value plus gradient accumulator. Frozen params never
// receive gradient and are skipped by the optimizer.
struct Param {
    Matrix value;
    Matrix grad;
    bool trainable = true;

    Param() = default;
    explicit Param(Matrix v, bool trainable_ = true)
        : value(std::move(v)), grad(value.rows(), value.cols()), trainable(trainable_) {}

    void zero_grad() { grad.fill(0.0); }
    bool present() const { return !value.empty(); }
};

}  // namespace tlora
