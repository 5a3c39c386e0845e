#include "trdq/smoothing.hpp"

#include <cmath>

namespace trdq {

namespace {
constexpr double kChannelFloor = 1e-8;
}

SmoothingDiag compute_delta(const Matrix& x, const Matrix& w, double alpha) {
    if (x.cols() != w.rows())
        throw ShapeError("compute_delta: x.cols " + std::to_string(x.cols()) +
                         " vs w.rows " + std::to_string(w.rows()));
    if (alpha < 0.0 || alpha > 1.0)
        throw DomainError("compute_delta: alpha must be in [0, 1]");
    check_finite(x, "compute_delta(x)");
    check_finite(w, "compute_delta(w)");

    const Vector xmax = max_abs_per_col(x).cwiseMax(kChannelFloor);
    const Vector wmax = max_abs_per_row(w).cwiseMax(kChannelFloor);

    SmoothingDiag d;
    d.alpha = alpha;
    d.delta.resize(x.cols());
    for (Index j = 0; j < x.cols(); ++j)
        d.delta(j) = std::pow(xmax(j), alpha) / std::pow(wmax(j), 1.0 - alpha);
    return d;
}

std::pair<Matrix, Matrix> apply_smoothing(const Matrix& x, const Matrix& w,
                                          const SmoothingDiag& d) {
    if (x.cols() != d.delta.size() || w.rows() != d.delta.size())
        throw ShapeError("apply_smoothing: delta length mismatch");
    Matrix xh = x.array().rowwise() / d.delta.transpose().array();
    Matrix wh = w.array().colwise() * d.delta.array();
    return {std::move(xh), std::move(wh)};
}

}  // namespace trdq
