#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "trdq/attention_share.hpp"

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

// Scalar-loop cosine used as an oracle against the library implementation.
double cosine_oracle(const Matrix& a, const Matrix& b) {
    double dot = 0, na = 0, nb = 0;
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) {
            dot += a(i, j) * b(i, j);
            na += a(i, j) * a(i, j);
            nb += b(i, j) * b(i, j);
        }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<AttentionRecord> paired_records(int blocks, int steps, uint64_t seed,
                                            double uncond_noise) {
    std::vector<AttentionRecord> recs;
    for (int b = 0; b < blocks; ++b)
        for (int t = 1; t <= steps; ++t) {
            Matrix cond = random_matrix(4, 8, seed + static_cast<uint64_t>(b * 100 + t)).cwiseAbs();
            Matrix uncond = cond + uncond_noise * random_matrix(4, 8, seed ^ static_cast<uint64_t>(b * 7919 + t));
            recs.push_back({b, t, Branch::Conditional, cond});
            recs.push_back({b, t, Branch::Unconditional, uncond});
        }
    return recs;
}

}  // namespace

TEST_CASE("cosine of identical, negated and orthogonal tensors") {
    const Matrix a = random_matrix(3, 5, 1);
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cosine_similarity(a, Matrix(-a)) == doctest::Approx(-1.0).epsilon(1e-14));

    Matrix e1 = Matrix::Zero(1, 4), e2 = Matrix::Zero(1, 4);
    e1(0, 0) = 2.0;
    e2(0, 1) = 3.0;
    CHECK(cosine_similarity(e1, e2) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("cosine matches the scalar oracle and is clamped to [-1, 1]") {
    for (uint64_t seed = 0; seed < 25; ++seed) {
        const Matrix a = random_matrix(4, 6, seed);
        const Matrix b = random_matrix(4, 6, seed + 1000);
        const double got = cosine_similarity(a, b);
        CHECK(got == doctest::Approx(cosine_oracle(a, b)).epsilon(1e-12));
        CHECK(got <= 1.0);
        CHECK(got >= -1.0);
    }
}

TEST_CASE("cosine symmetry and scale invariance") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix a = random_matrix(3, 7, seed);
        const Matrix b = random_matrix(3, 7, seed + 500);
        CHECK(cosine_similarity(a, b) == doctest::Approx(cosine_similarity(b, a)).epsilon(1e-15));
        CHECK(cosine_similarity(Matrix(2.5 * a), Matrix(0.01 * b)) ==
              doctest::Approx(cosine_similarity(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("zero tensor raises a domain error") {
    const Matrix a = random_matrix(2, 2, 3);
    const Matrix z = Matrix::Zero(2, 2);
    CHECK_THROWS_AS(cosine_similarity(a, z), DomainError);
    CHECK_THROWS_AS(cosine_similarity(z, a), DomainError);
}

TEST_CASE("similarity matrix over fully paired records") {
    const auto recs = paired_records(2, 3, 42, 0.05);
    const SimilarityMatrix sim = build_similarity_matrix(recs);
    CHECK(sim.values.size() == 6);
    for (const auto& r : recs) {
        if (r.branch != Branch::Conditional) continue;
        // Find the partner and check the stored value against the oracle.
        for (const auto& s : recs) {
            if (s.block_id == r.block_id && s.timestep == r.timestep &&
                s.branch == Branch::Unconditional) {
                CHECK(sim.values.at({r.block_id, r.timestep}) ==
                      doctest::Approx(cosine_oracle(r.attn, s.attn)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("identical branches give similarity exactly 1") {
    const auto recs = paired_records(3, 4, 7, 0.0);
    const SimilarityMatrix sim = build_similarity_matrix(recs);
    for (const auto& [key, v] : sim.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("unpaired records in either direction raise a coverage error") {
    auto recs = paired_records(1, 2, 9, 0.0);
    recs.push_back({5, 1, Branch::Conditional, random_matrix(2, 2, 11)});
    CHECK_THROWS_AS(build_similarity_matrix(recs), CoverageError);

    auto recs2 = paired_records(1, 2, 9, 0.0);
    recs2.push_back({5, 1, Branch::Unconditional, random_matrix(2, 2, 12)});
    CHECK_THROWS_AS(build_similarity_matrix(recs2), CoverageError);
}

TEST_CASE("sharing plan requires the threshold at every timestep") {
    SimilarityMatrix sim;
    sim.values[{0, 1}] = 0.99;
    sim.values[{0, 2}] = 0.98;
    sim.values[{1, 1}] = 0.99;
    sim.values[{1, 2}] = 0.90;   // one dip disqualifies block 1
    sim.values[{2, 1}] = 0.96;
    sim.values[{2, 2}] = 0.95;   // exactly at threshold still qualifies

    const SharingPlan plan = derive_sharing_plan(sim, 0.95);
    CHECK(plan.is_shared(0));
    CHECK_FALSE(plan.is_shared(1));
    CHECK(plan.is_shared(2));
    CHECK(plan.shared_blocks == std::set<int>{0, 2});
}

TEST_CASE("sharing plan matches a brute-force set filter on random grids") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> u(0.8, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        SimilarityMatrix sim;
        for (int b = 0; b < 5; ++b)
            for (int t = 1; t <= 6; ++t) sim.values[{b, t}] = u(rng);
        const double tau = 0.95;
        const SharingPlan plan = derive_sharing_plan(sim, tau);

        std::set<int> expected;
        for (int b = 0; b < 5; ++b) {
            bool ok = true;
            for (int t = 1; t <= 6; ++t) ok = ok && sim.values.at({b, t}) >= tau;
            if (ok) expected.insert(b);
        }
        CHECK(plan.shared_blocks == expected);
    }
}

TEST_CASE("threshold monotonicity: raising tau never adds blocks") {
    std::mt19937_64 rng(321);
    std::uniform_real_distribution<double> u(0.8, 1.0);
    SimilarityMatrix sim;
    for (int b = 0; b < 8; ++b)
        for (int t = 1; t <= 5; ++t) sim.values[{b, t}] = u(rng);
    const SharingPlan loose = derive_sharing_plan(sim, 0.85);
    const SharingPlan tight = derive_sharing_plan(sim, 0.97);
    for (int b : tight.shared_blocks) CHECK(loose.is_shared(b));
}

TEST_CASE("threshold outside (0, 1] is rejected") {
    SimilarityMatrix sim;
    sim.values[{0, 1}] = 1.0;
    CHECK_THROWS_AS(derive_sharing_plan(sim, 0.0), DomainError);
    CHECK_THROWS_AS(derive_sharing_plan(sim, -0.5), DomainError);
    CHECK_THROWS_AS(derive_sharing_plan(sim, 1.5), DomainError);
    CHECK_NOTHROW(derive_sharing_plan(sim, 1.0));
}

TEST_CASE("apply_sharing reuses the conditional tensor for shared blocks") {
    SharingPlan plan;
    plan.shared_blocks = {2};
    const Matrix cond = random_matrix(2, 4, 55);
    const Matrix fresh = random_matrix(2, 4, 56);

    bool ran = false;
    auto fn = [&]() {
        ran = true;
        return fresh;
    };

    const SharingResult shared = apply_sharing(plan, 2, 1, cond, fn);
    CHECK_FALSE(shared.computed);
    CHECK_FALSE(ran);
    CHECK(shared.attn_for_uncond == cond);

    const SharingResult owned = apply_sharing(plan, 3, 1, cond, fn);
    CHECK(owned.computed);
    CHECK(ran);
    CHECK(owned.attn_for_uncond == fresh);
}
