#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tlora/adapters.hpp"
#include "tlora/matrix.hpp"
#include "tlora/param.hpp"

namespace tlora {

// Linear layer y = W x + b, optionally reparametrized by a low-rank adapter.
// Attaching an adapter moves the base weight into it and freezes the layer;
// from then on only the adapter factors train. forward() caches what
// backward() needs; one backward may follow each forward.
class DenseLayer {
public:
    DenseLayer() = default;
    // W ~ N(0, 1/fan_in), b = 0.
    static DenseLayer init(std::size_t out_dim, std::size_t in_dim, std::uint64_t seed);

    Matrix forward(const Matrix& x, std::span<const int> mask_ts);
    // Accumulates parameter gradients, returns dLoss/dx.
    Matrix backward(const Matrix& dy);

    void attach_adapter(LinearAdapter adapter);
    bool adapted() const { return adapter_.has_value(); }

    const Matrix& weight_value() const;
    LinearAdapter& adapter() { return *adapter_; }
    const LinearAdapter& adapter() const { return *adapter_; }

    std::vector<Param*> params();
    std::size_t in_dim() const;
    std::size_t out_dim() const;

    Param weight;  // empty once an adapter owns the base weight
    Param bias;

private:
    std::optional<LinearAdapter> adapter_;

    // forward caches
    Matrix x_;
    Matrix u_;       // A x
    Matrix coef_;    // per-entry mask*scale applied to u (r×batch)
    Matrix masked_;  // coef ⊙ u, the vector B multiplies
    std::vector<double> mask_cols_;  // r×batch column masks (row-major r rows)
};

// x * sigmoid(x), elementwise.
Matrix silu_forward(const Matrix& x);
// dLoss/dx given the pre-activation x and upstream dy.
Matrix silu_backward(const Matrix& x, const Matrix& dy);

// Stacks blocks on top of each other (shared column count).
Matrix concat_rows(std::span<const Matrix> blocks);
// Splits dy back into per-block gradients matching `row_counts`.
std::vector<Matrix> split_rows(const Matrix& dy, std::span<const std::size_t> row_counts);

struct MseResult {
    double loss = 0.0;
    Matrix grad;  // dLoss/dprediction
};

// Mean over all entries of the squared error.
MseResult mse_loss(const Matrix& prediction, const Matrix& target);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-4;
};

// Bias-corrected Adam with decoupled weight decay. Moments are kept per
// registration slot, so the same parameter list (same order) must be passed
// to every step. Gradients are cleared inside step(): each step is
// self-contained.
class AdamState {
public:
    AdamState(AdamConfig cfg, std::span<Param* const> params);

    void step(std::span<Param* const> params);

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return step_count_; }

private:
    struct Slot {
        Matrix m;
        Matrix v;
    };
    AdamConfig cfg_;
    std::vector<Slot> slots_;
    long step_count_ = 0;
};

}  // namespace tlora
