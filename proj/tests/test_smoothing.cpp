#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "trdq/smoothing.hpp"

using namespace trdq;

namespace {

Matrix random_matrix(Index rows, Index cols, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = g(rng);
    return m;
}

}  // namespace

TEST_CASE("symmetric maxima give unit delta") {
    Matrix x = Matrix::Zero(2, 3);
    x.row(0) << 4, -4, 4;
    Matrix w = Matrix::Zero(3, 2);
    w.col(0) << -4, 4, 4;
    const SmoothingDiag d = compute_delta(x, w, 0.5);
    for (Index j = 0; j < 3; ++j) CHECK(d.delta(j) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("alpha = 1 reduces to activation maxima") {
    const Matrix x = random_matrix(5, 4, 1);
    const Matrix w = random_matrix(4, 6, 2);
    const SmoothingDiag d = compute_delta(x, w, 1.0);
    const Vector xmax = max_abs_per_col(x);
    for (Index j = 0; j < 4; ++j) CHECK(d.delta(j) == doctest::Approx(xmax(j)).epsilon(1e-15));
}

TEST_CASE("hand evaluation: 8^0.5 / 2^0.5 = 2") {
    Matrix x(1, 2);
    x << 8, -8;
    Matrix w(2, 1);
    w << 2, 2;
    const SmoothingDiag d = compute_delta(x, w, 0.5);
    CHECK(d.delta(0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(d.delta(1) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("identity delta leaves operands unchanged") {
    const Matrix x = random_matrix(4, 6, 3);
    const Matrix w = random_matrix(6, 5, 4);
    SmoothingDiag d;
    d.delta = Vector::Ones(6);
    const auto [xh, wh] = apply_smoothing(x, w, d);
    CHECK(xh.isApprox(x, 0));
    CHECK(wh.isApprox(w, 0));
}

TEST_CASE("product invariance for arbitrary valid delta") {
    const Matrix x = random_matrix(8, 8, 5);
    const Matrix w = random_matrix(8, 8, 6);
    const Matrix ref = x * w;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.01, 100.0);
        SmoothingDiag d;
        d.delta.resize(8);
        for (Index j = 0; j < 8; ++j) d.delta(j) = u(rng);
        const auto [xh, wh] = apply_smoothing(x, w, d);
        CHECK((xh * wh - ref).norm() <= 1e-10 * ref.norm());
    }
}

TEST_CASE("alpha=0.5 balances per-channel maxima") {
    const Matrix x = random_matrix(16, 8, 7) * 10.0;
    const Matrix w = random_matrix(8, 12, 8);
    const SmoothingDiag d = compute_delta(x, w, 0.5);
    const auto [xh, wh] = apply_smoothing(x, w, d);
    const Vector xm = max_abs_per_col(xh);
    const Vector wm = max_abs_per_row(wh);
    for (Index j = 0; j < 8; ++j)
        CHECK(std::abs(xm(j) - wm(j)) <= 1e-9 * std::max(xm(j), wm(j)));
}

TEST_CASE("dead channels never yield zero, NaN or Inf") {
    Matrix x = random_matrix(4, 6, 9);
    x.col(2).setZero();
    Matrix w = random_matrix(6, 5, 10);
    w.row(4).setZero();
    for (double alpha : {0.0, 0.3, 0.5, 1.0}) {
        const SmoothingDiag d = compute_delta(x, w, alpha);
        for (Index j = 0; j < 6; ++j) {
            CHECK(d.delta(j) > 0.0);
            CHECK(std::isfinite(d.delta(j)));
        }
    }
}

TEST_CASE("shape and domain errors") {
    CHECK_THROWS_AS(compute_delta(Matrix::Ones(2, 3), Matrix::Ones(4, 2), 0.5), ShapeError);
    CHECK_THROWS_AS(compute_delta(Matrix::Ones(2, 3), Matrix::Ones(3, 2), 1.5), DomainError);
}
