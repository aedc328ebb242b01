#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "test_support.hpp"
#include "tlora/errors.hpp"
#include "tlora/matrix.hpp"
#include "tlora/rng.hpp"
#include "tlora/svd.hpp"

using namespace tlora;
using testing::max_abs_diff;
using testing::random_matrix;
using testing::symmetric_eigenvalues;

TEST_CASE("matrix arithmetic basics") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});

    const Matrix prod = matmul(a, b);
    CHECK(prod(0, 0) == 19.0);
    CHECK(prod(0, 1) == 22.0);
    CHECK(prod(1, 0) == 43.0);
    CHECK(prod(1, 1) == 50.0);

    CHECK(max_abs_diff(matmul_abt(a, b), matmul(a, transpose(b))) == 0.0);
    CHECK(max_abs_diff(matmul_atb(a, b), matmul(transpose(a), b)) == 0.0);

    CHECK(add(a, b)(1, 1) == 12.0);
    CHECK(sub(b, a)(0, 0) == 4.0);
    CHECK(scale(a, 2.0)(1, 0) == 6.0);
    CHECK(frobenius_norm(Matrix::from_rows({{3, 4}})) == doctest::Approx(5.0));

    CHECK_THROWS_AS(matmul(a, Matrix(3, 3)), std::invalid_argument);
    CHECK_THROWS_AS(add(a, Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("transpose round trip on random shapes") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Matrix m = random_matrix(5 + seed, 3 + 2 * seed, seed);
        CHECK(transpose(transpose(m)) == m);
    }
}

TEST_CASE("random_gaussian moments and determinism") {
    const Matrix g = random_gaussian(1000, 1000, 1.0 / 64.0, 7);
    double mean = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) mean += g.data()[i];
    mean /= static_cast<double>(g.size());
    CHECK(std::abs(mean) < 0.001);

    double var = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        var += (g.data()[i] - mean) * (g.data()[i] - mean);
    }
    var /= static_cast<double>(g.size());
    CHECK(var == doctest::Approx(1.0 / 64.0).epsilon(0.10));

    CHECK(random_gaussian(1000, 1000, 1.0 / 64.0, 7) == g);          // bit-identical
    CHECK(random_gaussian(1000, 1000, 1.0 / 64.0, 8) != g);          // seed matters
    CHECK_THROWS_AS(random_gaussian(2, 2, 0.0, 1), std::invalid_argument);
}

TEST_CASE("seed_for_stream decorrelates nearby pairs") {
    CHECK(seed_for_stream(1, 0) != seed_for_stream(1, 1));
    CHECK(seed_for_stream(1, 0) != seed_for_stream(2, 0));
    CHECK(seed_for_stream(1, 0) == seed_for_stream(1, 0));
}

namespace {

void check_svd_contract(const Matrix& w, double rel_tol = 1e-9) {
    const SVDFactors f = svd(w);
    const std::size_t k = std::min(w.rows(), w.cols());
    REQUIRE(f.S.size() == k);
    CHECK(f.U.rows() == w.rows());
    CHECK(f.U.cols() == k);
    CHECK(f.Vt.rows() == k);
    CHECK(f.Vt.cols() == w.cols());

    CHECK(std::sqrt(orthogonality_error(f.U, OrthoMode::Cols)) <= 1e-10);
    CHECK(std::sqrt(orthogonality_error(f.Vt, OrthoMode::Rows)) <= 1e-10);
    for (std::size_t i = 0; i < k; ++i) {
        CHECK(f.S[i] >= 0.0);
        if (i > 0) CHECK(f.S[i] <= f.S[i - 1]);
    }
    const double err = frobenius_norm(sub(f.reconstruct(), w));
    CHECK(err <= rel_tol * std::max(frobenius_norm(w), 1.0));
}

}  // namespace

TEST_CASE("svd of a diagonal matrix is itself") {
    const Matrix w = Matrix::from_rows({{3, 0}, {0, 2}});
    const SVDFactors f = svd(w);
    CHECK(f.S[0] == doctest::Approx(3.0));
    CHECK(f.S[1] == doctest::Approx(2.0));
    CHECK(max_abs_diff(f.U, Matrix::identity(2)) < 1e-14);
    CHECK(max_abs_diff(f.Vt, Matrix::identity(2)) < 1e-14);
}

TEST_CASE("svd of the swap matrix has unit spectrum") {
    const Matrix w = Matrix::from_rows({{0, 1}, {1, 0}});
    const SVDFactors f = svd(w);
    CHECK(f.S[0] == doctest::Approx(1.0));
    CHECK(f.S[1] == doctest::Approx(1.0));
    check_svd_contract(w);
}

TEST_CASE("svd reconstructs random matrices, tall wide and square") {
    check_svd_contract(random_matrix(8, 5, 21));
    check_svd_contract(random_matrix(5, 8, 22));
    check_svd_contract(random_matrix(16, 16, 23));
    check_svd_contract(random_matrix(64, 64, 24));
    check_svd_contract(random_matrix(128, 96, 25));
    check_svd_contract(random_matrix(96, 128, 26));
}

TEST_CASE("svd singular values match eigenvalues of W^T W") {
    const Matrix w = random_matrix(9, 6, 31);
    const SVDFactors f = svd(w);

    std::vector<double> eig = symmetric_eigenvalues(matmul_atb(w, w));
    std::sort(eig.begin(), eig.end(), std::greater<>());
    REQUIRE(eig.size() == f.S.size());
    for (std::size_t i = 0; i < eig.size(); ++i) {
        CHECK(f.S[i] == doctest::Approx(std::sqrt(std::max(eig[i], 0.0))).epsilon(1e-8));
    }
}

TEST_CASE("svd handles rank-deficient and zero matrices") {
    Matrix rank1(6, 4);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j) rank1(i, j) = (i + 1.0) * (j + 1.0);
    check_svd_contract(rank1);
    const SVDFactors f1 = svd(rank1);
    CHECK(f1.S[1] < 1e-10 * f1.S[0]);

    const Matrix zero(5, 3);
    const SVDFactors fz = svd(zero);
    for (double s : fz.S) CHECK(s == 0.0);
    CHECK(std::sqrt(orthogonality_error(fz.U, OrthoMode::Cols)) <= 1e-10);
    CHECK(std::sqrt(orthogonality_error(fz.Vt, OrthoMode::Rows)) <= 1e-10);
}

TEST_CASE("svd rejects non-finite input") {
    Matrix bad(2, 2);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(svd(bad), std::invalid_argument);
}

TEST_CASE("effective_rank hand-evaluated examples") {
    const std::vector<double> s1 = {10.0, 5.0, 0.1};
    CHECK(effective_rank(s1, 0.95) == 2);  // total 15.1, threshold 14.345

    const std::vector<double> uniform = {1.0, 1.0, 1.0, 1.0};
    CHECK(effective_rank(uniform, 0.95) == 4);  // threshold 3.8 needs all four

    const std::vector<double> rank_one = {1.0, 0.0, 0.0};
    CHECK(effective_rank(rank_one, 0.3) == 1);
    CHECK(effective_rank(rank_one, 1.0) == 1);
}

TEST_CASE("effective_rank properties") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> s(1 + rng.uniform_int(0, 12));
        for (double& v : s) v = std::abs(rng.gaussian());
        if (rep % 5 == 0) s.push_back(0.0);
        std::sort(s.begin(), s.end(), std::greater<>());

        // monotone in fraction
        int prev = 0;
        for (double fraction : {0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 1.0}) {
            const int k = effective_rank(s, fraction);
            CHECK(k >= prev);
            prev = k;
        }
        // fraction = 1 counts the strictly positive entries
        const int positives =
            static_cast<int>(std::count_if(s.begin(), s.end(), [](double v) { return v > 0.0; }));
        CHECK(effective_rank(s, 1.0) == positives);
    }
}

TEST_CASE("effective_rank error cases") {
    CHECK_THROWS_AS(effective_rank(std::vector<double>{0.0, 0.0}, 0.95), UndefinedRankError);
    CHECK_THROWS_AS(effective_rank(std::vector<double>{1.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(effective_rank(std::vector<double>{1.0}, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(effective_rank(std::vector<double>{1.0, 2.0}, 0.95), std::invalid_argument);
    CHECK_THROWS_AS(effective_rank(std::vector<double>{1.0, -0.5}, 0.95), std::invalid_argument);
}

TEST_CASE("orthogonality_error examples") {
    CHECK(orthogonality_error(Matrix::identity(3), OrthoMode::Rows) == 0.0);

    const Matrix a = Matrix::from_rows({{2, 0}, {0, 1}});
    CHECK(orthogonality_error(a, OrthoMode::Rows) == doctest::Approx(9.0));

    const SVDFactors f = svd(random_matrix(7, 5, 77));
    CHECK(orthogonality_error(f.Vt, OrthoMode::Rows) <= 1e-10);
    CHECK(orthogonality_error(f.U, OrthoMode::Cols) <= 1e-10);
}
