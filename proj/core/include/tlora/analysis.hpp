#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tlora/adapters.hpp"
#include "tlora/diffusion.hpp"

namespace tlora {

// Singular spectrum of a trained factor. effective_rank is empty when the
// spectrum is all zero (e.g. a fresh PlainLoRA B); the CLI reports that as
// rank 0.
struct SpectrumReport {
    std::string layer;
    std::vector<double> sigma;               // non-increasing
    std::optional<int> effective_rank;       // at the 0.95 threshold
    int full_rank = 0;
};

// Spectrum of the trainable B factor (the A factor can be inspected with
// spectrum_of).
SpectrumReport spectrum(const LinearAdapter& adapter, const std::string& layer_name);
SpectrumReport spectrum_of(const Matrix& factor, const std::string& layer_name);

// err_A = ||A A^T - I||_F^2, err_B = ||B^T B - I||_F^2.
struct OrthogonalityPoint {
    double err_a;
    double err_b;
};
OrthogonalityPoint orthogonality_point(const LinearAdapter& adapter);

struct EvalReport {
    // Frobenius distance between the covariance of concept-conditioned
    // samples ("V*" + c0) and the true concept covariance.
    double concept_fidelity = 0.0;
    // Mean over contexts c1..c{n-1} of the distance between the sample
    // cloud mean ("V*" + ck) and mode k's mean.
    double context_alignment = 0.0;
    struct ContextRow {
        int context;
        double distance;
    };
    std::vector<ContextRow> per_context;
    int n_per_condition = 0;
};

// tokens, n, seed -> 2×n sample cloud.
using SampleFn =
    std::function<Matrix(const std::vector<std::string>& tokens, int n, std::uint64_t seed)>;

// Metric computation against an arbitrary sampler; used directly by the
// synthetic-oracle tests of the metric code.
EvalReport evaluate_with_sampler(const SampleFn& sampler, const ToyDataset& data,
                                 int n_per_condition, std::uint64_t seed);

// Standard evaluation of a denoiser via ancestral sampling. Deterministic
// in (denoiser parameters, data, n, seed).
EvalReport evaluate(Denoiser& denoiser, const NoiseSchedule& sched, const ToyDataset& data,
                    int n_per_condition, std::uint64_t seed);

}  // namespace tlora
