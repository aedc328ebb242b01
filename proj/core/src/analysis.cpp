#include "tlora/analysis.hpp"

#include <cmath>

#include "tlora/errors.hpp"
#include "tlora/rng.hpp"
#include "tlora/svd.hpp"

namespace tlora {

SpectrumReport spectrum_of(const Matrix& factor, const std::string& layer_name) {
    SpectrumReport report;
    report.layer = layer_name;
    const SVDFactors f = svd(factor);
    report.sigma = f.S;
    report.full_rank = static_cast<int>(f.S.size());
    try {
        report.effective_rank = effective_rank(report.sigma);
    } catch (const UndefinedRankError&) {
        report.effective_rank = std::nullopt;
    }
    return report;
}

SpectrumReport spectrum(const LinearAdapter& adapter, const std::string& layer_name) {
    return spectrum_of(adapter.B.value, layer_name);
}

OrthogonalityPoint orthogonality_point(const LinearAdapter& adapter) {
    return {orthogonality_error(adapter.A.value, OrthoMode::Rows),
            orthogonality_error(adapter.B.value, OrthoMode::Cols)};
}

namespace {

// Independent per-condition sub-streams so conditions can be evaluated in
// any order.
constexpr std::uint64_t kEvalStreamBase = 500;

std::array<double, 2> cloud_mean(const Matrix& pts) {
    std::array<double, 2> mean = {0.0, 0.0};
    for (std::size_t j = 0; j < pts.cols(); ++j) {
        mean[0] += pts(0, j);
        mean[1] += pts(1, j);
    }
    mean[0] /= static_cast<double>(pts.cols());
    mean[1] /= static_cast<double>(pts.cols());
    return mean;
}

// Population covariance (divides by n) of a 2×n cloud.
std::array<double, 4> cloud_covariance(const Matrix& pts) {
    const auto mean = cloud_mean(pts);
    std::array<double, 4> cov = {0.0, 0.0, 0.0, 0.0};
    const double inv = 1.0 / static_cast<double>(pts.cols());
    for (std::size_t j = 0; j < pts.cols(); ++j) {
        const double dx = pts(0, j) - mean[0];
        const double dy = pts(1, j) - mean[1];
        cov[0] += dx * dx * inv;
        cov[1] += dx * dy * inv;
        cov[2] += dx * dy * inv;
        cov[3] += dy * dy * inv;
    }
    return cov;
}

}  // namespace

EvalReport evaluate_with_sampler(const SampleFn& sampler, const ToyDataset& data,
                                 int n_per_condition, std::uint64_t seed) {
    if (n_per_condition < 1) throw ConfigError("evaluate: n_per_condition must be >= 1");
    EvalReport report;
    report.n_per_condition = n_per_condition;

    const std::string concept_ctx = "c" + std::to_string(data.concept_mode);
    const Matrix concept_cloud =
        sampler({kConceptToken, concept_ctx}, n_per_condition,
                seed_for_stream(seed, kEvalStreamBase + static_cast<std::uint64_t>(data.concept_mode)));
    const auto cov = cloud_covariance(concept_cloud);
    const double d00 = cov[0] - data.concept_cov_x;
    const double d01 = cov[1];
    const double d10 = cov[2];
    const double d11 = cov[3] - data.concept_cov_y;
    report.concept_fidelity = std::sqrt(d00 * d00 + d01 * d01 + d10 * d10 + d11 * d11);

    double total = 0.0;
    int counted = 0;
    for (int k = 0; k < data.n_modes; ++k) {
        if (k == data.concept_mode) continue;
        const Matrix cloud =
            sampler({kConceptToken, "c" + std::to_string(k)}, n_per_condition,
                    seed_for_stream(seed, kEvalStreamBase + static_cast<std::uint64_t>(k)));
        const auto mean = cloud_mean(cloud);
        const auto target = data.mode_mean(k);
        const double dist = std::hypot(mean[0] - target[0], mean[1] - target[1]);
        report.per_context.push_back({k, dist});
        total += dist;
        ++counted;
    }
    report.context_alignment = counted > 0 ? total / counted : 0.0;
    return report;
}

EvalReport evaluate(Denoiser& denoiser, const NoiseSchedule& sched, const ToyDataset& data,
                    int n_per_condition, std::uint64_t seed) {
    const SampleFn fn = [&](const std::vector<std::string>& tokens, int n, std::uint64_t s) {
        return sample(denoiser, sched, tokens, n, s);
    };
    return evaluate_with_sampler(fn, data, n_per_condition, seed);
}

}  // namespace tlora
