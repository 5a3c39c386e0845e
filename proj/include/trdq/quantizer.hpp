#ifndef TRDQ_QUANTIZER_HPP
#define TRDQ_QUANTIZER_HPP

#include <cstdint>
#include <vector>

#include "trdq/tensor.hpp"

namespace trdq {

enum class Granularity { PerToken, PerChannel, PerGroup };

struct QuantConfig {
    int bits = 8;                             // b in [2, 8]
    Granularity granularity = Granularity::PerToken;
    Index group_size = 0;                     // used when granularity == PerGroup
    bool dynamic = true;                      // recompute s, z per call

    int levels() const { return (1 << bits) - 1; }
};

using IntMatrix = Eigen::Matrix<int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Integer payload plus per-group affine parameters. Reconstruction is
// x_hat = (ints - z) * s per group.
struct QuantizedTensor {
    IntMatrix ints;
    Vector scales;        // one s per group, strictly positive
    Vector zero_points;   // one z per group
    QuantConfig config;

    Index rows() const { return ints.rows(); }
    Index cols() const { return ints.cols(); }
    Index group_count() const { return scales.size(); }
};

struct QuantErrorMetrics {
    double mse = 0.0;
    double max_abs_err = 0.0;
    double sqnr_db = 0.0;
};

// Round-half-away-from-zero; fixed so serialized payloads are bit-exact
// across platforms.
inline double round_nearest(double v) { return std::round(v); }

QuantizedTensor quantize(const Matrix& x, const QuantConfig& cfg);
Matrix dequantize(const QuantizedTensor& q);
Matrix fake_quantize(const Matrix& x, const QuantConfig& cfg);
QuantErrorMetrics quant_error(const Matrix& x, const QuantConfig& cfg);

}  // namespace trdq

#endif
