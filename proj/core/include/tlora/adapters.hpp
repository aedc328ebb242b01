#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "tlora/matrix.hpp"
#include "tlora/param.hpp"

namespace tlora {

// Linear rank schedule: the active adapter rank shrinks from r at timestep 0
// to r_min at timestep T:  rank_at(t) = floor((r - r_min) * (T - t) / T) + r_min.
struct MaskSchedule {
    int r;
    int r_min;
    int T;

    MaskSchedule(int r_, int r_min_, int T_);

    int rank_at(int t) const;
    // r×r diagonal matrix with rank_at(t) leading ones.
    Matrix mask(int t) const;
    // Writes the 0/1 diagonal into out (length r).
    void mask_diag(int t, std::span<double> out) const;
};

enum class AdapterKind { PlainLoRA, VanillaTLoRA, OrthoLoRA, TLoRA, AdaLoRASVD };

enum class InitSource { FromW, FromR };
enum class InitBand { Top, Middle, Last };

// Which block of r consecutive singular triplets seeds the factors, and
// whether they come from the base weight or a fresh Gaussian matrix.
struct InitVariant {
    InitSource source = InitSource::FromR;
    InitBand band = InitBand::Last;
};

const char* to_string(AdapterKind kind);
const char* to_string(const InitVariant& v);
AdapterKind adapter_kind_from_string(const std::string& s);
InitVariant init_variant_from_string(const std::string& s);

bool kind_uses_mask(AdapterKind kind);
bool kind_has_scale(AdapterKind kind);
bool kind_has_frozen_init(AdapterKind kind);

// A frozen base weight W (n×m) plus low-rank trainable factors:
//   A: r×m, B: n×r, and for SVD-shaped kinds a diagonal scale S (r×1).
// Kinds initialized from orthonormal factors also keep frozen copies
// (A0, B0, S0) so the initial contribution can be subtracted back out,
// leaving the effective weight equal to W at construction.
struct LinearAdapter {
    AdapterKind kind = AdapterKind::PlainLoRA;
    Matrix W;
    Param A;
    Param B;
    Param S;  // r×1; empty for PlainLoRA/VanillaTLoRA
    Matrix A0, B0, S0;
    std::optional<MaskSchedule> schedule;
    InitVariant variant;
    std::uint64_t seed = 0;

    int full_rank() const { return static_cast<int>(A.value.rows()); }
    int active_rank(int t) const;

    // Dense W + (masked, scaled) low-rank terms; the reference path used by
    // tests and weight export.
    Matrix effective_weight(int t) const;

    // effective_weight(t) * x evaluated factored, never building the dense
    // n×m update: O((n+m)*r*batch) beyond the base product.
    Matrix forward(const Matrix& x, int t) const;

    // 0/1 activity per component at timestep t (all ones when unmasked).
    std::vector<double> mask_vector(int t) const;
};

// A ~ N(0, 1/r) (the shared scaled-Gaussian convention), B = 0.
LinearAdapter init_plain_lora(const Matrix& w, int r, std::uint64_t seed);

// Factors taken from a band of singular triplets of either W or a fresh
// R ~ N(0, 1/r) of the same shape; A0/B0/S0 frozen copies recorded.
LinearAdapter init_ortho(const Matrix& w, int r, InitVariant variant, std::uint64_t seed);

struct AdapterSpec {
    AdapterKind kind = AdapterKind::TLoRA;
    int r = 32;
    std::optional<int> r_min;  // required for masked kinds
    InitVariant variant;
    double lambda_reg = 0.0;
};

// Builds any adapter kind; T is the diffusion horizon for masked kinds.
// Throws ConfigError when a masked kind lacks r_min.
LinearAdapter make_adapter(const Matrix& w, const AdapterSpec& spec, int horizon,
                           std::uint64_t seed);

struct PenaltyResult {
    double value = 0.0;
    Matrix grad_a;
    Matrix grad_b;
};

// lambda * (||A A^T - I||_F^2 + ||B^T B - I||_F^2) and its gradients.
PenaltyResult adalora_penalty(const Matrix& a, const Matrix& b, double lambda_reg);

}  // namespace tlora
