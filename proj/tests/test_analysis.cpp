#include <cmath>

#include <doctest.h>

#include "test_support.hpp"
#include "tlora/adapters.hpp"
#include "tlora/analysis.hpp"
#include "tlora/errors.hpp"
#include "tlora/rng.hpp"

using namespace tlora;
using testing::random_matrix;

TEST_CASE("spectrum of a fresh OrthoLoRA factor is flat") {
    const Matrix w = random_matrix(16, 16, 3);
    const LinearAdapter ad = init_ortho(w, 8, {InitSource::FromR, InitBand::Last}, 4);
    const SpectrumReport rep = spectrum(ad, "layer0");
    CHECK(rep.full_rank == 8);
    REQUIRE(rep.sigma.size() == 8);
    for (double s : rep.sigma) CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
    // uniform spectrum of length 8: ceil(0.95 * 8) = 8 values needed
    REQUIRE(rep.effective_rank.has_value());
    CHECK(*rep.effective_rank == 8);
}

TEST_CASE("spectrum of a zero factor reports an undefined rank") {
    const Matrix w = random_matrix(12, 10, 5);
    const LinearAdapter ad = init_plain_lora(w, 4, 6);  // B = 0
    const SpectrumReport rep = spectrum(ad, "layer0");
    CHECK_FALSE(rep.effective_rank.has_value());
    for (double s : rep.sigma) CHECK(s == 0.0);
}

TEST_CASE("spectrum effective rank is invariant under joint permutations") {
    const Matrix w = random_matrix(10, 10, 7);
    LinearAdapter ad = init_ortho(w, 5, {InitSource::FromW, InitBand::Top}, 8);
    Rng rng(9);
    for (std::size_t i = 0; i < ad.B.value.size(); ++i) ad.B.value.data()[i] += 0.3 * rng.gaussian();
    const SpectrumReport base = spectrum(ad, "x");

    // swap columns c1, c2 of B together with rows c1, c2 of A
    LinearAdapter permuted = ad;
    for (std::size_t i = 0; i < 10; ++i) std::swap(permuted.B.value(i, 1), permuted.B.value(i, 3));
    for (std::size_t j = 0; j < 10; ++j) std::swap(permuted.A.value(1, j), permuted.A.value(3, j));
    const SpectrumReport perm = spectrum(permuted, "x");
    CHECK(perm.effective_rank == base.effective_rank);
    for (std::size_t i = 0; i < base.sigma.size(); ++i) {
        CHECK(perm.sigma[i] == doctest::Approx(base.sigma[i]).epsilon(1e-9));
    }
}

TEST_CASE("orthogonality_point matches the factor errors") {
    const Matrix w = random_matrix(12, 10, 11);
    const LinearAdapter ortho = init_ortho(w, 4, {InitSource::FromR, InitBand::Last}, 12);
    const OrthogonalityPoint p = orthogonality_point(ortho);
    CHECK(p.err_a <= 1e-12);
    CHECK(p.err_b <= 1e-12);

    AdapterSpec spec;
    spec.kind = AdapterKind::AdaLoRASVD;
    spec.r = 4;
    const LinearAdapter ada = make_adapter(w, spec, 100, 13);
    const OrthogonalityPoint q = orthogonality_point(ada);
    CHECK(q.err_a > 1e-2);  // Gaussian init is far from orthonormal
    CHECK(q.err_b > 1e-2);
}

namespace {

// Sampler oracle: perfect concept-shaped clouds centered at whichever
// context is requested. Exercises the metric code without any model.
Matrix oracle_sampler(const ToyDataset& data, const std::vector<std::string>& tokens, int n,
                      std::uint64_t seed) {
    int mode = data.concept_mode;
    for (const std::string& tok : tokens) {
        if (tok.size() > 1 && tok[0] == 'c') mode = std::stoi(tok.substr(1));
    }
    const auto mean = data.mode_mean(mode);
    Rng rng(seed);
    Matrix out(2, static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        out(0, j) = mean[0] + std::sqrt(data.concept_cov_x) * rng.gaussian();
        out(1, j) = mean[1] + std::sqrt(data.concept_cov_y) * rng.gaussian();
    }
    return out;
}

}  // namespace

TEST_CASE("evaluate metrics vanish for an oracle sampler") {
    const ToyDataset data;
    const int n = 256;
    const SampleFn fn = [&](const std::vector<std::string>& tokens, int count,
                            std::uint64_t seed) { return oracle_sampler(data, tokens, count, seed); };
    const EvalReport rep = evaluate_with_sampler(fn, data, n, 17);

    const double tol = 3.0 / std::sqrt(static_cast<double>(n));
    CHECK(rep.concept_fidelity < tol);
    CHECK(rep.context_alignment < tol);
    CHECK(rep.per_context.size() == 7);
    for (const auto& row : rep.per_context) {
        CHECK(row.distance < tol);
        CHECK(row.context != data.concept_mode);
    }
}

TEST_CASE("evaluate detects a sampler stuck at the wrong mode") {
    const ToyDataset data;
    // ignores the requested context: always samples at mode 0
    const SampleFn fn = [&](const std::vector<std::string>&, int count, std::uint64_t seed) {
        return oracle_sampler(data, {"c0"}, count, seed);
    };
    const EvalReport rep = evaluate_with_sampler(fn, data, 256, 18);
    CHECK(rep.concept_fidelity < 0.2);
    CHECK(rep.context_alignment > 1.0);  // modes sit on the unit circle
}

TEST_CASE("evaluate is deterministic in its seed") {
    const ToyDataset data;
    const SampleFn fn = [&](const std::vector<std::string>& tokens, int count,
                            std::uint64_t seed) { return oracle_sampler(data, tokens, count, seed); };
    const EvalReport a = evaluate_with_sampler(fn, data, 64, 19);
    const EvalReport b = evaluate_with_sampler(fn, data, 64, 19);
    CHECK(a.concept_fidelity == b.concept_fidelity);
    CHECK(a.context_alignment == b.context_alignment);
    const EvalReport c = evaluate_with_sampler(fn, data, 64, 20);
    CHECK(a.concept_fidelity != c.concept_fidelity);
}
