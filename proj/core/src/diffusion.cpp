#include "tlora/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "tlora/errors.hpp"
#include "tlora/rng.hpp"
#include "tlora/svd.hpp"

namespace tlora {

namespace {

// Fixed sub-stream ids for deriving independent RNG streams from one
// experiment seed. Documented here because checkpoints reproduce only if
// this scheme stays stable.
constexpr std::uint64_t kStreamPretrainData = 1;
constexpr std::uint64_t kStreamFinetuneData = 2;
constexpr std::uint64_t kStreamConceptSet = 7;
constexpr std::uint64_t kStreamInProj = 10;
constexpr std::uint64_t kStreamHiddenBase = 11;
constexpr std::uint64_t kStreamHead = 20;
constexpr std::uint64_t kStreamCondTable = 30;
constexpr std::uint64_t kStreamAdapterBase = 100;

}  // namespace

NoiseSchedule NoiseSchedule::linear(int T, double beta_min, double beta_max) {
    if (T < 1) throw ConfigError("noise schedule: T must be >= 1");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || beta_min > beta_max) {
        throw ConfigError("noise schedule: need 0 < beta_min <= beta_max < 1");
    }
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<std::size_t>(T));
    s.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
    s.alpha_bar[0] = 1.0;
    for (int i = 0; i < T; ++i) {
        const double frac = T > 1 ? static_cast<double>(i) / (T - 1) : 0.0;
        s.beta[i] = beta_min + (beta_max - beta_min) * frac;
        s.alpha_bar[i + 1] = s.alpha_bar[i] * (1.0 - s.beta[i]);
    }
    return s;
}

Matrix forward_diffuse(const Matrix& z0, int t, const Matrix& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) {
        throw std::invalid_argument("forward_diffuse: t=" + std::to_string(t) +
                                    " outside [1, " + std::to_string(sched.T) + "]");
    }
    if (!z0.same_shape(eps)) throw std::invalid_argument("forward_diffuse: shape mismatch");
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
    Matrix out = scale(z0, std::sqrt(ab));
    add_scaled(out, eps, std::sqrt(1.0 - ab));
    return out;
}

Matrix forward_diffuse_batch(const Matrix& z0, std::span<const int> ts, const Matrix& eps,
                             const NoiseSchedule& sched) {
    if (!z0.same_shape(eps)) throw std::invalid_argument("forward_diffuse: shape mismatch");
    if (ts.size() != z0.cols()) throw std::invalid_argument("forward_diffuse: ts size mismatch");
    Matrix out(z0.rows(), z0.cols());
    for (std::size_t j = 0; j < z0.cols(); ++j) {
        const int t = ts[j];
        if (t < 1 || t > sched.T) {
            throw std::invalid_argument("forward_diffuse: t out of range");
        }
        const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
        const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
        for (std::size_t i = 0; i < z0.rows(); ++i) {
            out(i, j) = cs * z0(i, j) + cn * eps(i, j);
        }
    }
    return out;
}

TimestepSampler TimestepSampler::uniform() { return TimestepSampler{}; }

TimestepSampler TimestepSampler::interval(int lo, int hi, int T) {
    if (lo < 0 || lo >= hi || hi > T) {
        throw ConfigError("timestep interval: need 0 <= lo < hi <= T, got [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    TimestepSampler s;
    s.mode = Mode::Interval;
    s.lo = lo;
    s.hi = hi;
    return s;
}

int TimestepSampler::draw(Rng& rng, int T) const {
    if (mode == Mode::Uniform) return rng.uniform_int(1, T);
    return rng.uniform_int(std::max(lo, 1), hi);
}

std::array<double, 2> ToyDataset::mode_mean(int k) const {
    const double angle = 2.0 * std::numbers::pi * k / n_modes;
    return {std::cos(angle), std::sin(angle)};
}

Matrix ToyDataset::concept_points(std::uint64_t seed) const {
    Rng rng(seed);
    const auto center = mode_mean(concept_mode);
    const double sx = std::sqrt(concept_cov_x), sy = std::sqrt(concept_cov_y);
    Matrix pts(2, static_cast<std::size_t>(concept_size));
    for (int j = 0; j < concept_size; ++j) {
        pts(0, j) = center[0] + sx * rng.gaussian();
        pts(1, j) = center[1] + sy * rng.gaussian();
    }
    return pts;
}

Denoiser Denoiser::init(const DenoiserShape& shape, int n_context_tokens, std::uint64_t seed) {
    if (n_context_tokens < 1) throw ConfigError("denoiser: need at least one context token");
    Denoiser d;
    d.shape = shape;
    d.n_context = n_context_tokens;
    const std::size_t w = static_cast<std::size_t>(shape.hidden_width);
    d.in_proj = DenseLayer::init(w, static_cast<std::size_t>(shape.input_dim()),
                                 seed_for_stream(seed, kStreamInProj));
    for (int i = 0; i < shape.hidden_layers; ++i) {
        d.hidden.push_back(DenseLayer::init(w, w, seed_for_stream(seed, kStreamHiddenBase + i)));
    }
    d.head = DenseLayer::init(static_cast<std::size_t>(shape.data_dim), w,
                              seed_for_stream(seed, kStreamHead));
    d.cond_table = random_gaussian(static_cast<std::size_t>(n_context_tokens) + 1,
                                   static_cast<std::size_t>(shape.cond_dim), 1.0,
                                   seed_for_stream(seed, kStreamCondTable));
    return d;
}

Matrix Denoiser::time_embedding(std::span<const int> ts) const {
    const int pairs = shape.time_dim / 2;
    Matrix emb(static_cast<std::size_t>(shape.time_dim), ts.size());
    for (std::size_t j = 0; j < ts.size(); ++j) {
        const double t = static_cast<double>(ts[j]);
        for (int k = 0; k < pairs; ++k) {
            // periods spaced geometrically from 1 to 1000
            const double period = std::pow(1000.0, pairs > 1 ? static_cast<double>(k) / (pairs - 1) : 0.0);
            emb(2 * k, j) = std::sin(t / period);
            emb(2 * k + 1, j) = std::cos(t / period);
        }
    }
    return emb;
}

int Denoiser::token_index(const std::string& token) const {
    if (token == kConceptToken) return n_context;
    if (token.size() >= 2 && token[0] == 'c') {
        const int k = std::stoi(token.substr(1));
        if (k >= 0 && k < n_context) return k;
    }
    throw ConfigError("unknown condition token '" + token + "'");
}

std::vector<std::string> Denoiser::token_names() const {
    std::vector<std::string> names;
    for (int k = 0; k < n_context; ++k) names.push_back("c" + std::to_string(k));
    names.emplace_back(kConceptToken);
    return names;
}

Matrix Denoiser::embed_tokens(const std::vector<std::string>& tokens) const {
    if (tokens.empty()) throw ConfigError("embed_tokens: no tokens given");
    Matrix col(static_cast<std::size_t>(shape.cond_dim), 1);
    for (const std::string& token : tokens) {
        const int row = token_index(token);
        for (int j = 0; j < shape.cond_dim; ++j) {
            col(static_cast<std::size_t>(j), 0) += cond_table(row, static_cast<std::size_t>(j));
        }
    }
    return col;
}

Matrix Denoiser::forward(const Matrix& z, std::span<const int> ts, const Matrix& cond,
                         std::optional<int> mask_t_override) {
    const std::size_t batch = z.cols();
    if (cond.cols() != batch || cond.rows() != static_cast<std::size_t>(shape.cond_dim)) {
        throw std::invalid_argument("denoiser forward: condition shape mismatch");
    }
    if (!(ts.size() == 1 || ts.size() == batch)) {
        throw std::invalid_argument("denoiser forward: need one timestep per column");
    }
    std::vector<int> ts_full;
    if (ts.size() == 1 && batch != 1) {
        ts_full.assign(batch, ts[0]);
        ts = ts_full;
    }
    const int override_t = mask_t_override.value_or(0);
    std::span<const int> mask_ts = mask_t_override ? std::span<const int>(&override_t, 1) : ts;

    const Matrix blocks[3] = {z, time_embedding(ts), cond};
    input_ = concat_rows(blocks);

    pre_acts_.clear();
    pre_acts_.push_back(in_proj.forward(input_, mask_ts));
    Matrix h = silu_forward(pre_acts_.back());
    for (DenseLayer& layer : hidden) {
        pre_acts_.push_back(layer.forward(h, mask_ts));
        h = silu_forward(pre_acts_.back());
    }
    return head.forward(h, mask_ts);
}

double Denoiser::forward_backward(const Matrix& z, std::span<const int> ts, const Matrix& cond,
                                  const Matrix& target, std::optional<int> mask_t_override) {
    const Matrix pred = forward(z, ts, cond, mask_t_override);
    MseResult mse = mse_loss(pred, target);
    Matrix d = head.backward(mse.grad);
    for (std::size_t i = hidden.size(); i-- > 0;) {
        d = silu_backward(pre_acts_[i + 1], d);
        d = hidden[i].backward(d);
    }
    d = silu_backward(pre_acts_[0], d);
    in_proj.backward(d);
    return mse.loss;
}

void Denoiser::attach_adapters(const AdapterSpec& spec, int horizon, std::uint64_t seed) {
    if (adapted()) throw ConfigError("denoiser already has adapters attached");
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        hidden[i].attach_adapter(make_adapter(hidden[i].weight.value, spec, horizon,
                                              seed_for_stream(seed, kStreamAdapterBase + i)));
    }
    // Fine-tuning trains adapter factors only.
    in_proj.weight.trainable = false;
    in_proj.bias.trainable = false;
    head.weight.trainable = false;
    head.bias.trainable = false;
}

bool Denoiser::adapted() const {
    return !hidden.empty() && hidden.front().adapted();
}

std::vector<Param*> Denoiser::params() {
    std::vector<Param*> out;
    for (Param* p : in_proj.params()) out.push_back(p);
    for (DenseLayer& layer : hidden) {
        for (Param* p : layer.params()) out.push_back(p);
    }
    for (Param* p : head.params()) out.push_back(p);
    return out;
}

std::vector<Param*> Denoiser::trainable_params() {
    std::vector<Param*> out;
    for (Param* p : params()) {
        if (p->trainable) out.push_back(p);
    }
    return out;
}

LossTrace pretrain(Denoiser& denoiser, const ToyDataset& data, const NoiseSchedule& sched,
                   const PretrainConfig& cfg) {
    if (denoiser.adapted()) throw ConfigError("pretrain: denoiser must have no adapters");
    LossTrace trace;
    if (cfg.steps == 0) return trace;

    Rng rng(seed_for_stream(cfg.seed, kStreamPretrainData));
    std::vector<Param*> params = denoiser.params();
    AdamState adam(cfg.adam, params);

    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    Matrix z0(2, batch), eps(2, batch);
    Matrix cond(static_cast<std::size_t>(denoiser.shape.cond_dim), batch);
    std::vector<int> ts(batch);

    for (int step = 0; step < cfg.steps; ++step) {
        for (std::size_t j = 0; j < batch; ++j) {
            const int mode = rng.uniform_int(0, data.n_modes - 1);
            const auto mean = data.mode_mean(mode);
            z0(0, j) = mean[0] + data.mode_std * rng.gaussian();
            z0(1, j) = mean[1] + data.mode_std * rng.gaussian();
            ts[j] = rng.uniform_int(1, sched.T);
            eps(0, j) = rng.gaussian();
            eps(1, j) = rng.gaussian();
            for (int i = 0; i < denoiser.shape.cond_dim; ++i) {
                cond(static_cast<std::size_t>(i), j) =
                    denoiser.cond_table(mode, static_cast<std::size_t>(i));
            }
        }
        const Matrix zt = forward_diffuse_batch(z0, ts, eps, sched);
        const double loss = denoiser.forward_backward(zt, ts, cond, eps);
        if (!std::isfinite(loss)) {
            throw NumericalError("pretrain: non-finite loss at step " + std::to_string(step));
        }
        trace.loss.push_back(loss);
        adam.step(params);
    }
    return trace;
}

namespace {

double mean_eff_rank_b(const Denoiser& denoiser) {
    double sum = 0.0;
    int count = 0;
    for (const DenseLayer& layer : denoiser.hidden) {
        const SVDFactors f = svd(layer.adapter().B.value);
        int rank = 0;
        try {
            rank = effective_rank(f.S);
        } catch (const UndefinedRankError&) {
            rank = 0;  // zero factor, e.g. fresh PlainLoRA
        }
        sum += rank;
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

}  // namespace

FinetuneRecord finetune(Denoiser& denoiser, const ToyDataset& data, const NoiseSchedule& sched,
                        const FinetuneConfig& cfg) {
    denoiser.attach_adapters(cfg.adapter, sched.T, cfg.seed);

    const Matrix concept_set = data.concept_points(seed_for_stream(cfg.seed, kStreamConceptSet));
    const Matrix cond = denoiser.embed_tokens(
        {kConceptToken, "c" + std::to_string(data.concept_mode)});

    Rng rng(seed_for_stream(cfg.seed, kStreamFinetuneData));
    std::vector<Param*> params = denoiser.trainable_params();
    AdamState adam(cfg.adam, params);

    FinetuneRecord record;
    const auto record_trace_rows = [&](int step) {
        for (std::size_t i = 0; i < denoiser.hidden.size(); ++i) {
            const LinearAdapter& ad = denoiser.hidden[i].adapter();
            record.trace.push_back({step, static_cast<int>(i),
                                    orthogonality_error(ad.A.value, OrthoMode::Rows),
                                    orthogonality_error(ad.B.value, OrthoMode::Cols)});
        }
    };
    if (cfg.record_trace) record_trace_rows(0);

    double latest_eff_rank = cfg.record_trace ? mean_eff_rank_b(denoiser) : 0.0;
    Matrix z0(2, 1), eps(2, 1);

    for (int step = 1; step <= cfg.steps; ++step) {
        const int idx = rng.uniform_int(0, data.concept_size - 1);
        const int t = cfg.sampler.draw(rng, sched.T);
        z0(0, 0) = concept_set(0, static_cast<std::size_t>(idx));
        z0(1, 0) = concept_set(1, static_cast<std::size_t>(idx));
        eps(0, 0) = rng.gaussian();
        eps(1, 0) = rng.gaussian();
        const Matrix zt = forward_diffuse(z0, t, eps, sched);

        const int ts[1] = {t};
        double loss = denoiser.forward_backward(zt, ts, cond, eps);
        if (cfg.adapter.lambda_reg > 0.0) {
            for (DenseLayer& layer : denoiser.hidden) {
                LinearAdapter& ad = layer.adapter();
                PenaltyResult pen =
                    adalora_penalty(ad.A.value, ad.B.value, cfg.adapter.lambda_reg);
                loss += pen.value;
                add_scaled(ad.A.grad, pen.grad_a, 1.0);
                add_scaled(ad.B.grad, pen.grad_b, 1.0);
            }
        }
        if (!std::isfinite(loss)) {
            throw NumericalError("finetune: non-finite loss at step " + std::to_string(step));
        }
        adam.step(params);

        FinetuneRecord::StepRow row{};
        row.step = step;
        row.t = t;
        row.rank_t = denoiser.hidden.front().adapter().active_rank(t);
        row.loss = loss;
        if (cfg.record_trace) {
            record_trace_rows(step);
            double ea = 0.0, eb = 0.0;
            for (std::size_t i = 0; i < denoiser.hidden.size(); ++i) {
                const auto& tr = record.trace[record.trace.size() - denoiser.hidden.size() + i];
                ea += tr.err_a;
                eb += tr.err_b;
            }
            row.err_a = ea / denoiser.hidden.size();
            row.err_b = eb / denoiser.hidden.size();
            if (step % cfg.spectrum_every == 0 || step == cfg.steps) {
                latest_eff_rank = mean_eff_rank_b(denoiser);
            }
            row.eff_rank_b = latest_eff_rank;
        }
        record.steps.push_back(row);
    }
    return record;
}

Matrix sample(Denoiser& denoiser, const NoiseSchedule& sched,
              const std::vector<std::string>& tokens, int n, std::uint64_t seed,
              std::optional<int> mask_t_override) {
    if (n < 1) throw ConfigError("sample: n must be >= 1");
    const Matrix cond_col = denoiser.embed_tokens(tokens);
    Matrix cond(cond_col.rows(), static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < cond.rows(); ++i) {
        for (int j = 0; j < n; ++j) cond(i, static_cast<std::size_t>(j)) = cond_col(i, 0);
    }

    std::vector<Rng> chains;
    chains.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        chains.emplace_back(seed_for_stream(seed, static_cast<std::uint64_t>(j)));
    }

    Matrix z(2, static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        z(0, static_cast<std::size_t>(j)) = chains[static_cast<std::size_t>(j)].gaussian();
        z(1, static_cast<std::size_t>(j)) = chains[static_cast<std::size_t>(j)].gaussian();
    }

    for (int t = sched.T; t >= 1; --t) {
        const int ts[1] = {t};
        const Matrix eps_hat = denoiser.forward(z, ts, cond, mask_t_override);
        const double beta = sched.beta[static_cast<std::size_t>(t - 1)];
        const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
        const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
        const double noise_coef = beta / std::sqrt(1.0 - ab);
        const double sigma = std::sqrt(beta);
        for (std::size_t j = 0; j < z.cols(); ++j) {
            for (std::size_t i = 0; i < z.rows(); ++i) {
                z(i, j) = inv_sqrt_alpha * (z(i, j) - noise_coef * eps_hat(i, j));
                if (t > 1) z(i, j) += sigma * chains[j].gaussian();
            }
        }
    }
    return z;
}

}  // namespace tlora
