#include "tlora/adapters.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tlora/errors.hpp"
#include "tlora/rng.hpp"
#include "tlora/svd.hpp"

namespace tlora {

MaskSchedule::MaskSchedule(int r_, int r_min_, int T_) : r(r_), r_min(r_min_), T(T_) {
    if (r < 1) throw ConfigError("mask schedule: r must be >= 1");
    if (r_min < 1 || r_min > r) throw ConfigError("mask schedule: need 1 <= r_min <= r");
    if (T < 1) throw ConfigError("mask schedule: T must be >= 1");
}

int MaskSchedule::rank_at(int t) const {
    if (t < 0 || t > T) {
        throw std::invalid_argument("rank_at: t=" + std::to_string(t) + " outside [0, " +
                                    std::to_string(T) + "]");
    }
    const std::int64_t span = static_cast<std::int64_t>(r - r_min);
    return static_cast<int>(span * (T - t) / T) + r_min;
}

Matrix MaskSchedule::mask(int t) const {
    const int active = rank_at(t);
    Matrix m(static_cast<std::size_t>(r), static_cast<std::size_t>(r));
    for (int i = 0; i < active; ++i) m(i, i) = 1.0;
    return m;
}

void MaskSchedule::mask_diag(int t, std::span<double> out) const {
    const int active = rank_at(t);
    for (int i = 0; i < r; ++i) out[i] = i < active ? 1.0 : 0.0;
}

const char* to_string(AdapterKind kind) {
    switch (kind) {
        case AdapterKind::PlainLoRA: return "PlainLoRA";
        case AdapterKind::VanillaTLoRA: return "VanillaTLoRA";
        case AdapterKind::OrthoLoRA: return "OrthoLoRA";
        case AdapterKind::TLoRA: return "TLoRA";
        case AdapterKind::AdaLoRASVD: return "AdaLoRASVD";
    }
    return "unknown";
}

AdapterKind adapter_kind_from_string(const std::string& s) {
    if (s == "PlainLoRA") return AdapterKind::PlainLoRA;
    if (s == "VanillaTLoRA") return AdapterKind::VanillaTLoRA;
    if (s == "OrthoLoRA") return AdapterKind::OrthoLoRA;
    if (s == "TLoRA") return AdapterKind::TLoRA;
    if (s == "AdaLoRASVD") return AdapterKind::AdaLoRASVD;
    throw ConfigError("unknown adapter kind '" + s + "'");
}

const char* to_string(const InitVariant& v) {
    const bool from_w = v.source == InitSource::FromW;
    switch (v.band) {
        case InitBand::Top: return from_w ? "from_w_top" : "from_r_top";
        case InitBand::Middle: return from_w ? "from_w_middle" : "from_r_middle";
        case InitBand::Last: return from_w ? "from_w_last" : "from_r_last";
    }
    return "unknown";
}

InitVariant init_variant_from_string(const std::string& s) {
    InitVariant v;
    if (s.starts_with("from_w_")) {
        v.source = InitSource::FromW;
    } else if (s.starts_with("from_r_")) {
        v.source = InitSource::FromR;
    } else {
        throw ConfigError("unknown init variant '" + s + "'");
    }
    const std::string band = s.substr(7);
    if (band == "top") {
        v.band = InitBand::Top;
    } else if (band == "middle") {
        v.band = InitBand::Middle;
    } else if (band == "last") {
        v.band = InitBand::Last;
    } else {
        throw ConfigError("unknown init variant '" + s + "'");
    }
    return v;
}

bool kind_uses_mask(AdapterKind kind) {
    return kind == AdapterKind::VanillaTLoRA || kind == AdapterKind::TLoRA;
}

bool kind_has_scale(AdapterKind kind) {
    return kind == AdapterKind::OrthoLoRA || kind == AdapterKind::TLoRA ||
           kind == AdapterKind::AdaLoRASVD;
}

bool kind_has_frozen_init(AdapterKind kind) {
    return kind == AdapterKind::OrthoLoRA || kind == AdapterKind::TLoRA;
}

int LinearAdapter::active_rank(int t) const {
    return schedule ? schedule->rank_at(t) : full_rank();
}

std::vector<double> LinearAdapter::mask_vector(int t) const {
    std::vector<double> m(static_cast<std::size_t>(full_rank()), 1.0);
    if (kind_uses_mask(kind)) {
        if (!schedule) throw ConfigError("adapter: masked kind without a schedule");
        schedule->mask_diag(t, m);
    }
    return m;
}

namespace {

// B * diag(coef) * A, dense.
Matrix scaled_product(const Matrix& b, std::span<const double> coef, const Matrix& a) {
    Matrix sa = a;
    for (std::size_t i = 0; i < sa.rows(); ++i) {
        const double c = coef[i];
        for (std::size_t j = 0; j < sa.cols(); ++j) sa(i, j) *= c;
    }
    return matmul(b, sa);
}

std::vector<double> term_coefficients(const LinearAdapter& ad, int t, bool frozen) {
    std::vector<double> coef = ad.mask_vector(t);
    if (kind_has_scale(ad.kind)) {
        const Matrix& s = frozen ? ad.S0 : ad.S.value;
        for (std::size_t i = 0; i < coef.size(); ++i) coef[i] *= s.data()[i];
    }
    return coef;
}

}  // namespace

Matrix LinearAdapter::effective_weight(int t) const {
    Matrix result = add(W, scaled_product(B.value, term_coefficients(*this, t, false), A.value));
    if (kind_has_frozen_init(kind)) {
        add_scaled(result, scaled_product(B0, term_coefficients(*this, t, true), A0), -1.0);
    }
    return result;
}

Matrix LinearAdapter::forward(const Matrix& x, int t) const {
    if (x.rows() != W.cols()) {
        throw std::invalid_argument("adapter forward: input has " + std::to_string(x.rows()) +
                                    " rows, expected " + std::to_string(W.cols()));
    }
    Matrix y = matmul(W, x);

    const auto apply_term = [&](const Matrix& bm, const Matrix& am,
                                std::span<const double> coef, double sign) {
        Matrix u = matmul(am, x);
        for (std::size_t i = 0; i < u.rows(); ++i) {
            const double c = coef[i];
            for (std::size_t j = 0; j < u.cols(); ++j) u(i, j) *= c;
        }
        add_scaled(y, matmul(bm, u), sign);
    };

    apply_term(B.value, A.value, term_coefficients(*this, t, false), 1.0);
    if (kind_has_frozen_init(kind)) {
        apply_term(B0, A0, term_coefficients(*this, t, true), -1.0);
    }
    return y;
}

namespace {

void check_rank(const Matrix& w, int r) {
    const std::size_t k = std::min(w.rows(), w.cols());
    if (r < 1 || static_cast<std::size_t>(r) > k) {
        throw ConfigError("adapter rank r=" + std::to_string(r) + " outside [1, " +
                          std::to_string(k) + "] for a " + std::to_string(w.rows()) + "x" +
                          std::to_string(w.cols()) + " base weight");
    }
}

}  // namespace

LinearAdapter init_plain_lora(const Matrix& w, int r, std::uint64_t seed) {
    check_rank(w, r);
    LinearAdapter ad;
    ad.kind = AdapterKind::PlainLoRA;
    ad.W = w;
    ad.A = Param(random_gaussian(static_cast<std::size_t>(r), w.cols(), 1.0 / r, seed));
    ad.B = Param(Matrix(w.rows(), static_cast<std::size_t>(r)));
    ad.seed = seed;
    return ad;
}

LinearAdapter init_ortho(const Matrix& w, int r, InitVariant variant, std::uint64_t seed) {
    check_rank(w, r);
    const Matrix source = variant.source == InitSource::FromW
                              ? w
                              : random_gaussian(w.rows(), w.cols(), 1.0 / r, seed);
    const SVDFactors f = svd(source);
    const std::size_t k = f.S.size();
    std::size_t start = 0;
    switch (variant.band) {
        case InitBand::Top: start = 0; break;
        case InitBand::Middle: start = (k - static_cast<std::size_t>(r)) / 2; break;
        case InitBand::Last: start = k - static_cast<std::size_t>(r); break;
    }

    Matrix a(static_cast<std::size_t>(r), w.cols());
    Matrix b(w.rows(), static_cast<std::size_t>(r));
    Matrix s(static_cast<std::size_t>(r), 1);
    for (int i = 0; i < r; ++i) {
        const std::size_t src = start + static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < w.cols(); ++j) a(i, j) = f.Vt(src, j);
        for (std::size_t j = 0; j < w.rows(); ++j) b(j, i) = f.U(j, src);
        s(i, 0) = f.S[src];
    }

    LinearAdapter ad;
    ad.kind = AdapterKind::OrthoLoRA;
    ad.W = w;
    ad.A = Param(a);
    ad.B = Param(b);
    ad.S = Param(s);
    ad.A0 = std::move(a);
    ad.B0 = std::move(b);
    ad.S0 = std::move(s);
    ad.variant = variant;
    ad.seed = seed;
    return ad;
}

LinearAdapter make_adapter(const Matrix& w, const AdapterSpec& spec, int horizon,
                           std::uint64_t seed) {
    const auto schedule_for = [&]() -> MaskSchedule {
        if (!spec.r_min) {
            throw ConfigError(std::string(to_string(spec.kind)) + " requires r_min");
        }
        return MaskSchedule(spec.r, *spec.r_min, horizon);
    };

    switch (spec.kind) {
        case AdapterKind::PlainLoRA:
            return init_plain_lora(w, spec.r, seed);
        case AdapterKind::VanillaTLoRA: {
            LinearAdapter ad = init_plain_lora(w, spec.r, seed);
            ad.kind = AdapterKind::VanillaTLoRA;
            ad.schedule = schedule_for();
            return ad;
        }
        case AdapterKind::OrthoLoRA:
            return init_ortho(w, spec.r, spec.variant, seed);
        case AdapterKind::TLoRA: {
            LinearAdapter ad = init_ortho(w, spec.r, spec.variant, seed);
            ad.kind = AdapterKind::TLoRA;
            ad.schedule = schedule_for();
            return ad;
        }
        case AdapterKind::AdaLoRASVD: {
            check_rank(w, spec.r);
            LinearAdapter ad;
            ad.kind = AdapterKind::AdaLoRASVD;
            ad.W = w;
            const std::size_t r = static_cast<std::size_t>(spec.r);
            ad.A = Param(random_gaussian(r, w.cols(), 1.0 / spec.r, seed_for_stream(seed, 0)));
            ad.B = Param(random_gaussian(w.rows(), r, 1.0 / spec.r, seed_for_stream(seed, 1)));
            ad.S = Param(Matrix(r, 1));  // zeros: effective weight starts at W
            ad.seed = seed;
            return ad;
        }
    }
    throw ConfigError("make_adapter: unknown kind");
}

PenaltyResult adalora_penalty(const Matrix& a, const Matrix& b, double lambda_reg) {
    if (lambda_reg < 0.0) throw std::invalid_argument("adalora_penalty: lambda_reg must be >= 0");
    PenaltyResult out;
    out.value = lambda_reg * (orthogonality_error(a, OrthoMode::Rows) +
                              orthogonality_error(b, OrthoMode::Cols));

    Matrix ea = matmul_abt(a, a);  // A A^T
    for (std::size_t i = 0; i < ea.rows(); ++i) ea(i, i) -= 1.0;
    out.grad_a = scale(matmul(ea, a), 4.0 * lambda_reg);

    Matrix eb = matmul_atb(b, b);  // B^T B
    for (std::size_t i = 0; i < eb.rows(); ++i) eb(i, i) -= 1.0;
    out.grad_b = scale(matmul(b, eb), 4.0 * lambda_reg);
    return out;
}

}  // namespace tlora
