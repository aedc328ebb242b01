#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tlora/adapters.hpp"
#include "tlora/gradnet.hpp"
#include "tlora/matrix.hpp"
#include "tlora/rng.hpp"

namespace tlora {

// Forward-process coefficients: alpha_bar[t] is the cumulative signal
// retention after t noising steps, alpha_bar[0] = 1, strictly decreasing.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // beta[s] belongs to timestep s+1
    std::vector<double> alpha_bar;  // size T+1

    static NoiseSchedule linear(int T = 1000, double beta_min = 1e-4, double beta_max = 0.02);
};

// z_t = sqrt(alpha_bar[t]) * z0 + sqrt(1 - alpha_bar[t]) * eps.
Matrix forward_diffuse(const Matrix& z0, int t, const Matrix& eps, const NoiseSchedule& sched);
// Same with a per-column timestep.
Matrix forward_diffuse_batch(const Matrix& z0, std::span<const int> ts, const Matrix& eps,
                             const NoiseSchedule& sched);

struct TimestepSampler {
    enum class Mode { Uniform, Interval };
    Mode mode = Mode::Uniform;
    int lo = 0;
    int hi = 0;

    static TimestepSampler uniform();
    static TimestepSampler interval(int lo, int hi, int T);
    // Uniform over [1, T] or [max(lo,1), hi].
    int draw(Rng& rng, int T) const;
};

// Eight isotropic Gaussian modes on the unit circle, one context token each,
// plus a small anisotropic concept cloud bound to token "V*" at mode 0.
struct ToyDataset {
    int n_modes = 8;
    double mode_std = 0.05;
    double concept_cov_x = 0.01;
    double concept_cov_y = 0.0004;
    int concept_size = 4;
    int concept_mode = 0;

    std::array<double, 2> mode_mean(int k) const;
    // 2×concept_size points, deterministic in seed.
    Matrix concept_points(std::uint64_t seed) const;
};

struct DenoiserShape {
    int data_dim = 2;
    int time_dim = 16;
    int cond_dim = 8;
    int hidden_width = 64;
    int hidden_layers = 3;

    int input_dim() const { return data_dim + time_dim + cond_dim; }
};

inline constexpr const char* kConceptToken = "V*";

// MLP noise predictor: input projection, `hidden_layers` SiLU blocks (the
// layers that take adapters during fine-tuning), and a linear head. The
// condition embedding table (context tokens c0..c{n-1} plus "V*") is sampled
// once at init and stays frozen forever.
class Denoiser {
public:
    static Denoiser init(const DenoiserShape& shape, int n_context_tokens, std::uint64_t seed);

    // z: data_dim×batch, ts: one timestep per column (or a single broadcast
    // value), cond: cond_dim×batch. mask_t_override forces every adapter
    // mask to a fixed timestep while the time embedding still sees ts.
    Matrix forward(const Matrix& z, std::span<const int> ts, const Matrix& cond,
                   std::optional<int> mask_t_override = std::nullopt);
    // MSE against target; fills parameter gradients. Returns the loss.
    double forward_backward(const Matrix& z, std::span<const int> ts, const Matrix& cond,
                            const Matrix& target, std::optional<int> mask_t_override = std::nullopt);

    Matrix time_embedding(std::span<const int> ts) const;
    // Sum of the embeddings of the named tokens, as one column.
    Matrix embed_tokens(const std::vector<std::string>& tokens) const;
    int token_index(const std::string& token) const;
    std::vector<std::string> token_names() const;

    void attach_adapters(const AdapterSpec& spec, int horizon, std::uint64_t seed);
    bool adapted() const;

    std::vector<Param*> params();
    std::vector<Param*> trainable_params();

    DenoiserShape shape;
    DenseLayer in_proj;
    std::vector<DenseLayer> hidden;
    DenseLayer head;
    Matrix cond_table;  // (n_context_tokens + 1) × cond_dim; last row is "V*"
    int n_context = 0;

private:
    // forward caches
    std::vector<Matrix> pre_acts_;
    Matrix input_;
};

struct AdamConfigDefaults {
    static AdamConfig standard() { return AdamConfig{}; }
};

struct PretrainConfig {
    int steps = 20000;
    int batch_size = 32;
    AdamConfig adam;
    std::uint64_t seed = 1;
};

struct LossTrace {
    std::vector<double> loss;  // one entry per step
};

// Trains the raw denoiser on the mode prior (context-conditioned noise
// prediction). Throws NumericalError on a non-finite loss.
LossTrace pretrain(Denoiser& denoiser, const ToyDataset& data, const NoiseSchedule& sched,
                   const PretrainConfig& cfg);

struct FinetuneConfig {
    AdapterSpec adapter;
    TimestepSampler sampler;
    int steps = 800;
    AdamConfig adam;
    std::uint64_t seed = 1;
    bool record_trace = false;
    int spectrum_every = 25;  // cadence of effective-rank evaluation in the trace
};

struct FinetuneRecord {
    struct StepRow {
        int step;
        int t;
        int rank_t;
        double loss;
        double err_a;       // mean over adapted layers
        double err_b;
        double eff_rank_b;  // mean over layers, most recent evaluation; 0 when undefined
    };
    struct TraceRow {
        int step;
        int layer;
        double err_a;
        double err_b;
    };
    std::vector<StepRow> steps;
    std::vector<TraceRow> trace;
};

// Attaches adapters to the hidden layers, freezes everything else, and
// trains the adapter factors on (concept point, "V*" + c0) pairs with
// timesteps drawn from the sampler. lambda_reg > 0 adds the orthogonality
// penalty for each adapted layer.
FinetuneRecord finetune(Denoiser& denoiser, const ToyDataset& data, const NoiseSchedule& sched,
                        const FinetuneConfig& cfg);

// Ancestral sampling, t = T down to 1, adapter masks evaluated at each
// step's own timestep (or at mask_t_override). Chain j draws all its noise
// from seed_for_stream(seed, j), so results do not depend on how chains are
// batched. Returns data_dim×n.
Matrix sample(Denoiser& denoiser, const NoiseSchedule& sched,
              const std::vector<std::string>& tokens, int n, std::uint64_t seed,
              std::optional<int> mask_t_override = std::nullopt);

}  // namespace tlora
