#include "trdq/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace trdq {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t stage, uint64_t block) {
    uint64_t h = seed + 0x9e3779b97f4a7c15ULL * (stage + 1) + 0xbf58476d1ce4e5b9ULL * (block + 1);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return h;
}

// Orthogonal matrix with uniform first row 1/sqrt(d); remaining rows are
// seeded Gaussian vectors orthonormalized by modified Gram-Schmidt with one
// re-orthogonalization pass.
Matrix build_uniform_first_row_orthogonal(Index d, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Matrix q(d, d);
    q.row(0).setConstant(1.0 / std::sqrt(static_cast<double>(d)));
    for (Index i = 1; i < d; ++i) {
        while (true) {
            Eigen::RowVectorXd v(d);
            for (Index j = 0; j < d; ++j) v(j) = gauss(rng);
            for (int pass = 0; pass < 2; ++pass)
                for (Index k = 0; k < i; ++k)
                    v -= v.dot(q.row(k)) * q.row(k);
            const double n = v.norm();
            if (n > 1e-8) {
                q.row(i) = v / n;
                break;
            }
        }
    }
    return q;
}

std::pair<Index, Index> argmax_abs(const Matrix& x) {
    Index bi = 0, bj = 0;
    double best = -1.0;
    for (Index i = 0; i < x.rows(); ++i)
        for (Index j = 0; j < x.cols(); ++j)
            if (std::abs(x(i, j)) > best) {
                best = std::abs(x(i, j));
                bi = i;
                bj = j;
            }
    return {bi, bj};
}

void check_block_layout(Index channels, Index block_size, const char* what) {
    if (block_size <= 0 || (block_size & (block_size - 1)) != 0)
        throw ShapeError(std::string(what) + ": block size must be a power of two");
    if (channels % block_size != 0)
        throw ShapeError(std::string(what) + ": block size " + std::to_string(block_size) +
                         " does not divide channel count " + std::to_string(channels));
}

}  // namespace

bool RotationBlock::is_orthogonal(double tol) const {
    const Matrix err = matrix * matrix.transpose() - Matrix::Identity(size(), size());
    return err.cwiseAbs().maxCoeff() < tol;
}

BlockRotation BlockRotation::identity(Index channels, Index block_size) {
    check_block_layout(channels, block_size, "BlockRotation::identity");
    BlockRotation r;
    r.channel_count = channels;
    for (Index b = 0; b < channels / block_size; ++b)
        r.blocks.push_back({Matrix::Identity(block_size, block_size)});
    return r;
}

Matrix apply_block_rotation(const Matrix& x, const BlockRotation& r) {
    if (x.cols() != r.channel_count)
        throw ShapeError("apply_block_rotation: channel mismatch");
    const Index bs = r.block_size();
    Matrix out(x.rows(), x.cols());
    for (size_t b = 0; b < r.blocks.size(); ++b)
        out.middleCols(static_cast<Index>(b) * bs, bs) =
            x.middleCols(static_cast<Index>(b) * bs, bs) * r.blocks[b].matrix;
    return out;
}

Matrix apply_block_rotation_transposed_left(const BlockRotation& r, const Matrix& w) {
    if (w.rows() != r.channel_count)
        throw ShapeError("apply_block_rotation_transposed_left: channel mismatch");
    const Index bs = r.block_size();
    Matrix out(w.rows(), w.cols());
    for (size_t b = 0; b < r.blocks.size(); ++b)
        out.middleRows(static_cast<Index>(b) * bs, bs) =
            r.blocks[b].matrix.transpose() * w.middleRows(static_cast<Index>(b) * bs, bs);
    return out;
}

BalancingParams BalancingParams::identity(Index channels, Index block_size) {
    BalancingParams bp;
    bp.delta.delta = Vector::Ones(channels);
    bp.r1 = BlockRotation::identity(channels, block_size);
    bp.p = PermutationVector::identity(channels);
    bp.r2 = BlockRotation::identity(channels, block_size);
    return bp;
}

RotationBlock build_single_rotation(const Matrix& x_block, uint64_t seed) {
    check_finite(x_block, "build_single_rotation");
    const Index d = x_block.cols();
    Matrix r = build_uniform_first_row_orthogonal(d, seed);
    const auto [oi, oj] = argmax_abs(x_block);
    (void)oi;
    if (oj != 0) {
        r.row(0).swap(r.row(oj));   // C1 on the left
        r.col(0).swap(r.col(oj));   // C2 on the right
    }
    return {std::move(r)};
}

std::vector<RotationBlock> build_greedy_chain(const Matrix& x_block,
                                              const RotationBuildConfig& cfg) {
    if (cfg.max_greedy_steps < 1)
        throw DomainError("build_greedy_rotation: max_greedy_steps must be >= 1");
    std::vector<RotationBlock> chain;
    Matrix cur = x_block;
    double prev_max = max_abs(cur);
    for (int k = 1; k <= cfg.max_greedy_steps; ++k) {
        RotationBlock step = build_single_rotation(cur, mix_seed(cfg.rng_seed, 0, static_cast<uint64_t>(k)));
        cur = cur * step.matrix;
        chain.push_back(std::move(step));
        const double m = max_abs(cur);
        if ((prev_max - m) / std::max(prev_max, 1e-300) < cfg.stop_tol) break;
        prev_max = m;
    }
    return chain;
}

RotationBlock build_greedy_rotation(const Matrix& x_block, const RotationBuildConfig& cfg) {
    const Index d = x_block.cols();
    const auto chain = build_greedy_chain(x_block, cfg);

    Matrix acc = Matrix::Identity(d, d);
    Matrix best = acc;
    double best_max = max_abs(x_block);
    Matrix cur = x_block;
    for (const auto& step : chain) {
        acc = acc * step.matrix;
        cur = cur * step.matrix;
        const double m = max_abs(cur);
        if (m < best_max) {
            best_max = m;
            best = acc;
        }
    }
    return {std::move(best)};
}

PermutationVector build_zigzag_permutation(const Vector& per_channel_max, Index block_size) {
    const Index c = per_channel_max.size();
    check_block_layout(c, block_size, "build_zigzag_permutation");
    const Index k = c / block_size;

    std::vector<Index> order(static_cast<size_t>(c));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return per_channel_max(a) > per_channel_max(b);
    });

    // Snake deal: blocks 0..K-1 then K-1..0, repeating.
    std::vector<std::vector<Index>> assigned(static_cast<size_t>(k));
    for (Index rank = 0; rank < c; ++rank) {
        const Index pos = rank % (2 * k);
        const Index block = pos < k ? pos : 2 * k - 1 - pos;
        assigned[static_cast<size_t>(block)].push_back(order[static_cast<size_t>(rank)]);
    }

    PermutationVector p;
    p.entries.reserve(static_cast<size_t>(c));
    for (const auto& blk : assigned)
        p.entries.insert(p.entries.end(), blk.begin(), blk.end());
    return p;
}

BalancingParams assemble_balancing(const Matrix& x_calib, const Matrix& w,
                                   double alpha, const RotationBuildConfig& cfg,
                                   const BalancingToggles& toggles) {
    if (x_calib.cols() != w.rows())
        throw ShapeError("assemble_balancing: x.cols vs w.rows mismatch");
    const Index c = x_calib.cols();
    check_block_layout(c, cfg.block_size, "assemble_balancing");
    const Index bs = cfg.block_size;
    const Index k = c / bs;

    BalancingParams bp = BalancingParams::identity(c, bs);
    Matrix cur = x_calib;

    if (toggles.smooth) {
        bp.delta = compute_delta(x_calib, w, alpha);
        cur = cur.array().rowwise() / bp.delta.delta.transpose().array();
    }
    if (toggles.r1) {
        for (Index b = 0; b < k; ++b) {
            RotationBuildConfig bcfg = cfg;
            bcfg.rng_seed = mix_seed(cfg.rng_seed, 1, static_cast<uint64_t>(b));
            bp.r1.blocks[static_cast<size_t>(b)] = build_greedy_rotation(cur.middleCols(b * bs, bs), bcfg);
        }
        cur = apply_block_rotation(cur, bp.r1);
    }
    if (toggles.p) {
        bp.p = build_zigzag_permutation(max_abs_per_col(cur), bs);
        cur = apply_permutation(cur, bp.p, Axis::Cols);
    }
    if (toggles.r2) {
        for (Index b = 0; b < k; ++b) {
            RotationBuildConfig bcfg = cfg;
            bcfg.rng_seed = mix_seed(cfg.rng_seed, 2, static_cast<uint64_t>(b));
            bp.r2.blocks[static_cast<size_t>(b)] = build_greedy_rotation(cur.middleCols(b * bs, bs), bcfg);
        }
    }
    return bp;
}

Matrix transform_activations(const Matrix& x, const BalancingParams& bp) {
    if (x.cols() != bp.channel_count())
        throw ShapeError("transform_activations: channel mismatch");
    Matrix cur = x.array().rowwise() / bp.delta.delta.transpose().array();
    cur = apply_block_rotation(cur, bp.r1);
    cur = apply_permutation(cur, bp.p, Axis::Cols);
    return apply_block_rotation(cur, bp.r2);
}

Matrix transform_weights(const Matrix& w, const BalancingParams& bp) {
    if (w.rows() != bp.channel_count())
        throw ShapeError("transform_weights: channel mismatch");
    Matrix cur = w.array().colwise() * bp.delta.delta.array();
    cur = apply_block_rotation_transposed_left(bp.r1, cur);
    cur = apply_permutation(cur, bp.p, Axis::Rows);
    return apply_block_rotation_transposed_left(bp.r2, cur);
}

}  // namespace trdq
