#include "tlora/gradnet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tlora/errors.hpp"
#include "tlora/rng.hpp"

namespace tlora {

DenseLayer DenseLayer::init(std::size_t out_dim, std::size_t in_dim, std::uint64_t seed) {
    DenseLayer layer;
    layer.weight = Param(random_gaussian(out_dim, in_dim, 1.0 / static_cast<double>(in_dim), seed));
    layer.bias = Param(Matrix(out_dim, 1));
    return layer;
}

void DenseLayer::attach_adapter(LinearAdapter adapter) {
    if (adapter_) throw ConfigError("layer already has an adapter");
    if (!adapter.W.same_shape(weight.value)) {
        throw std::invalid_argument("attach_adapter: base weight shape mismatch");
    }
    adapter_ = std::move(adapter);
    weight = Param();  // base weight now lives (frozen) inside the adapter
    bias.trainable = false;
}

const Matrix& DenseLayer::weight_value() const {
    return adapter_ ? adapter_->W : weight.value;
}

std::size_t DenseLayer::in_dim() const { return weight_value().cols(); }
std::size_t DenseLayer::out_dim() const { return weight_value().rows(); }

std::vector<Param*> DenseLayer::params() {
    std::vector<Param*> out;
    if (weight.present()) out.push_back(&weight);
    out.push_back(&bias);
    if (adapter_) {
        out.push_back(&adapter_->A);
        out.push_back(&adapter_->B);
        if (adapter_->S.present()) out.push_back(&adapter_->S);
    }
    return out;
}

Matrix DenseLayer::forward(const Matrix& x, std::span<const int> mask_ts) {
    const Matrix& w = weight_value();
    if (x.rows() != w.cols()) {
        throw std::invalid_argument("layer forward: input rows " + std::to_string(x.rows()) +
                                    " != fan-in " + std::to_string(w.cols()));
    }
    const std::size_t batch = x.cols();
    x_ = x;
    Matrix y = matmul(w, x);

    if (adapter_) {
        const LinearAdapter& ad = *adapter_;
        const std::size_t r = static_cast<std::size_t>(ad.full_rank());
        if (!(mask_ts.size() == 1 || mask_ts.size() == batch)) {
            throw std::invalid_argument("layer forward: mask timestep count must be 1 or batch");
        }

        // Per-column 0/1 activity (all ones for unmasked kinds).
        mask_cols_.assign(r * batch, 1.0);
        if (kind_uses_mask(ad.kind)) {
            if (!ad.schedule) throw ConfigError("masked adapter kind without a schedule");
            for (std::size_t j = 0; j < batch; ++j) {
                const int t = mask_ts[mask_ts.size() == 1 ? 0 : j];
                const int active = ad.schedule->rank_at(t);
                for (std::size_t i = static_cast<std::size_t>(active); i < r; ++i) {
                    mask_cols_[i * batch + j] = 0.0;
                }
            }
        }

        u_ = matmul(ad.A.value, x);
        coef_ = Matrix(r, batch);
        masked_ = Matrix(r, batch);
        const bool scaled = kind_has_scale(ad.kind);
        for (std::size_t i = 0; i < r; ++i) {
            const double s = scaled ? ad.S.value(i, 0) : 1.0;
            for (std::size_t j = 0; j < batch; ++j) {
                coef_(i, j) = mask_cols_[i * batch + j] * s;
                masked_(i, j) = coef_(i, j) * u_(i, j);
            }
        }
        add_scaled(y, matmul(ad.B.value, masked_), 1.0);

        if (kind_has_frozen_init(ad.kind)) {
            Matrix u0 = matmul(ad.A0, x);
            for (std::size_t i = 0; i < r; ++i) {
                const double s0 = ad.S0(i, 0);
                for (std::size_t j = 0; j < batch; ++j) {
                    u0(i, j) *= mask_cols_[i * batch + j] * s0;
                }
            }
            add_scaled(y, matmul(ad.B0, u0), -1.0);
        }
    }

    for (std::size_t i = 0; i < y.rows(); ++i) {
        const double b = bias.value(i, 0);
        for (std::size_t j = 0; j < batch; ++j) y(i, j) += b;
    }
    return y;
}

Matrix DenseLayer::backward(const Matrix& dy) {
    const Matrix& w = weight_value();
    if (dy.rows() != w.rows() || dy.cols() != x_.cols()) {
        throw std::invalid_argument("layer backward: gradient shape mismatch");
    }
    const std::size_t batch = dy.cols();

    if (bias.trainable) {
        for (std::size_t i = 0; i < dy.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < batch; ++j) s += dy(i, j);
            bias.grad(i, 0) += s;
        }
    }

    Matrix dx = matmul_atb(w, dy);

    if (!adapter_) {
        if (weight.trainable) add_scaled(weight.grad, matmul_abt(dy, x_), 1.0);
        return dx;
    }

    LinearAdapter& ad = *adapter_;
    const std::size_t r = static_cast<std::size_t>(ad.full_rank());

    if (ad.B.trainable) add_scaled(ad.B.grad, matmul_abt(dy, masked_), 1.0);

    Matrix dmasked = matmul_atb(ad.B.value, dy);  // r×batch
    if (ad.S.present() && ad.S.trainable) {
        for (std::size_t i = 0; i < r; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < batch; ++j) {
                s += mask_cols_[i * batch + j] * u_(i, j) * dmasked(i, j);
            }
            ad.S.grad(i, 0) += s;
        }
    }

    Matrix du(r, batch);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < batch; ++j) du(i, j) = coef_(i, j) * dmasked(i, j);
    }
    if (ad.A.trainable) add_scaled(ad.A.grad, matmul_abt(du, x_), 1.0);
    add_scaled(dx, matmul_atb(ad.A.value, du), 1.0);

    if (kind_has_frozen_init(ad.kind)) {
        Matrix dv = matmul_atb(ad.B0, dy);
        for (std::size_t i = 0; i < r; ++i) {
            const double s0 = ad.S0(i, 0);
            for (std::size_t j = 0; j < batch; ++j) {
                dv(i, j) *= mask_cols_[i * batch + j] * s0;
            }
        }
        add_scaled(dx, matmul_atb(ad.A0, dv), -1.0);
    }
    return dx;
}

Matrix silu_forward(const Matrix& x) {
    Matrix y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double v = y.data()[i];
        y.data()[i] = v / (1.0 + std::exp(-v));
    }
    return y;
}

Matrix silu_backward(const Matrix& x, const Matrix& dy) {
    if (!x.same_shape(dy)) throw std::invalid_argument("silu_backward: shape mismatch");
    Matrix dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const double v = x.data()[i];
        const double sig = 1.0 / (1.0 + std::exp(-v));
        dx.data()[i] *= sig * (1.0 + v * (1.0 - sig));
    }
    return dx;
}

Matrix concat_rows(std::span<const Matrix> blocks) {
    if (blocks.empty()) throw std::invalid_argument("concat_rows: no blocks");
    const std::size_t cols = blocks.front().cols();
    std::size_t rows = 0;
    for (const Matrix& b : blocks) {
        if (b.cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
        rows += b.rows();
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const Matrix& b : blocks) {
        for (std::size_t i = 0; i < b.rows(); ++i) {
            for (std::size_t j = 0; j < cols; ++j) out(at + i, j) = b(i, j);
        }
        at += b.rows();
    }
    return out;
}

std::vector<Matrix> split_rows(const Matrix& dy, std::span<const std::size_t> row_counts) {
    std::size_t total = 0;
    for (std::size_t r : row_counts) total += r;
    if (total != dy.rows()) throw std::invalid_argument("split_rows: row counts do not sum");
    std::vector<Matrix> out;
    out.reserve(row_counts.size());
    std::size_t at = 0;
    for (std::size_t r : row_counts) {
        Matrix block(r, dy.cols());
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < dy.cols(); ++j) block(i, j) = dy(at + i, j);
        }
        out.push_back(std::move(block));
        at += r;
    }
    return out;
}

MseResult mse_loss(const Matrix& prediction, const Matrix& target) {
    if (!prediction.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    MseResult out;
    out.grad = Matrix(prediction.rows(), prediction.cols());
    const double inv = 1.0 / static_cast<double>(prediction.size());
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double d = prediction.data()[i] - target.data()[i];
        out.loss += d * d * inv;
        out.grad.data()[i] = 2.0 * d * inv;
    }
    return out;
}

AdamState::AdamState(AdamConfig cfg, std::span<Param* const> params) : cfg_(cfg) {
    slots_.reserve(params.size());
    for (const Param* p : params) {
        Slot slot;
        if (p->trainable) {
            slot.m = Matrix(p->value.rows(), p->value.cols());
            slot.v = Matrix(p->value.rows(), p->value.cols());
        }
        slots_.push_back(std::move(slot));
    }
}

void AdamState::step(std::span<Param* const> params) {
    if (params.size() != slots_.size()) {
        throw std::invalid_argument("adam step: parameter list changed size");
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Param* p = params[i];
        if (p->trainable) {
            Slot& slot = slots_[i];
            if (!slot.m.same_shape(p->value)) {
                throw std::invalid_argument("adam step: parameter shape changed");
            }
            double* value = p->value.data();
            const double* grad = p->grad.data();
            double* m = slot.m.data();
            double* v = slot.v.data();
            for (std::size_t j = 0; j < p->value.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad[j] * grad[j];
                value[j] -= cfg_.lr * cfg_.weight_decay * value[j];  // decoupled decay
                value[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.epsilon);
            }
        }
        p->zero_grad();
    }
}

}  // namespace tlora
