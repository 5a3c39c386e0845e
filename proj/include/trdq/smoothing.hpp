#ifndef TRDQ_SMOOTHING_HPP
#define TRDQ_SMOOTHING_HPP

#include <utility>

#include "trdq/tensor.hpp"

namespace trdq {

// Per-channel migration diagonal: activations are divided by delta,
// weights multiplied, leaving the layer output unchanged.
struct SmoothingDiag {
    Vector delta;   // strictly positive, length C_in
    double alpha = 0.5;
};

// delta_j = max|X_j|^alpha / max|W_j|^(1-alpha), with both maxima floored
// at 1e-8 so dead channels cannot produce Inf or zero.
SmoothingDiag compute_delta(const Matrix& x, const Matrix& w, double alpha);

std::pair<Matrix, Matrix> apply_smoothing(const Matrix& x, const Matrix& w,
                                          const SmoothingDiag& d);

}  // namespace trdq

#endif
