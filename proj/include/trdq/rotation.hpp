#ifndef TRDQ_ROTATION_HPP
#define TRDQ_ROTATION_HPP

#include <cstdint>
#include <vector>

#include "trdq/smoothing.hpp"
#include "trdq/tensor.hpp"

namespace trdq {

// One 2^n x 2^n orthogonal block of a block-diagonal rotation.
struct RotationBlock {
    Matrix matrix;

    Index size() const { return matrix.rows(); }
    bool is_orthogonal(double tol = 1e-10) const;
};

// Block-diagonal rotation over channel_count = blocks.size() * block size
// channels. Never materialized as a dense C x C matrix on the hot path.
struct BlockRotation {
    std::vector<RotationBlock> blocks;
    Index channel_count = 0;

    Index block_size() const { return blocks.empty() ? 0 : blocks.front().size(); }
    static BlockRotation identity(Index channels, Index block_size);
};

// Applies x * R (blockwise) / R^T * w (blockwise).
Matrix apply_block_rotation(const Matrix& x, const BlockRotation& r);
Matrix apply_block_rotation_transposed_left(const BlockRotation& r, const Matrix& w);

struct RotationBuildConfig {
    Index block_size = 16;        // power of two
    int max_greedy_steps = 8;     // cap on the greedy chain length
    uint64_t rng_seed = 0;
    double stop_tol = 1e-3;       // relative improvement threshold
};

// Per-timestep balancing parameter set {delta, R1, P, R2}.
struct BalancingParams {
    SmoothingDiag delta;
    BlockRotation r1;
    PermutationVector p;
    BlockRotation r2;

    Index channel_count() const { return delta.delta.size(); }
    static BalancingParams identity(Index channels, Index block_size);
};

// Component toggles for ablation studies; a disabled stage contributes an
// identity factor and later stages are built on the correspondingly
// transformed activations.
struct BalancingToggles {
    bool smooth = true;
    bool r1 = true;
    bool p = true;
    bool r2 = true;
};

// Single outlier-chasing rotation: swap the max-magnitude column to the
// front, apply a random orthogonal matrix with uniform first row, swap back.
RotationBlock build_single_rotation(const Matrix& x_block, uint64_t seed);

// The raw greedy chain, one single-step rotation per entry, before prefix
// selection. Exposed so prefix behaviour can be evaluated independently.
std::vector<RotationBlock> build_greedy_chain(const Matrix& x_block,
                                              const RotationBuildConfig& cfg);

// Greedy chain of single rotations; returns the prefix product minimizing
// the max-abs of the rotated activations (the empty prefix counts, so the
// result never exceeds the input's max-abs).
RotationBlock build_greedy_rotation(const Matrix& x_block, const RotationBuildConfig& cfg);

// Snake-order channel-to-block assignment by descending activation maxima.
PermutationVector build_zigzag_permutation(const Vector& per_channel_max, Index block_size);

BalancingParams assemble_balancing(const Matrix& x_calib, const Matrix& w,
                                   double alpha, const RotationBuildConfig& cfg,
                                   const BalancingToggles& toggles = {});

// G(x) = (x * delta^-1) * R1 * P * R2
Matrix transform_activations(const Matrix& x, const BalancingParams& bp);
// H(w) = R2^T * P^T * R1^T * (delta * w)
Matrix transform_weights(const Matrix& w, const BalancingParams& bp);

}  // namespace trdq

#endif
