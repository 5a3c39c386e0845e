#include "trdq/quantizer.hpp"

#include <cmath>
#include <limits>

namespace trdq {

namespace {

struct GroupSpan {
    Index row0, rows, col0, cols;
};

void validate_config(const Matrix& x, const QuantConfig& cfg) {
    if (cfg.bits < 2 || cfg.bits > 8)
        throw DomainError("quantize: bits must be in [2, 8], got " + std::to_string(cfg.bits));
    if (x.size() == 0) throw DomainError("quantize: empty tensor");
    check_finite(x, "quantize");
    if (cfg.granularity == Granularity::PerGroup) {
        if (cfg.group_size <= 0 || x.cols() % cfg.group_size != 0)
            throw ShapeError("quantize: group size " + std::to_string(cfg.group_size) +
                             " does not divide channel count " + std::to_string(x.cols()));
    }
}

std::vector<GroupSpan> group_spans(const Matrix& x, const QuantConfig& cfg) {
    std::vector<GroupSpan> spans;
    switch (cfg.granularity) {
        case Granularity::PerToken:
            for (Index i = 0; i < x.rows(); ++i)
                spans.push_back({i, 1, 0, x.cols()});
            break;
        case Granularity::PerChannel:
            for (Index j = 0; j < x.cols(); ++j)
                spans.push_back({0, x.rows(), j, 1});
            break;
        case Granularity::PerGroup:
            for (Index g = 0; g < x.cols() / cfg.group_size; ++g)
                spans.push_back({0, x.rows(), g * cfg.group_size, cfg.group_size});
            break;
    }
    return spans;
}

}  // namespace

QuantizedTensor quantize(const Matrix& x, const QuantConfig& cfg) {
    validate_config(x, cfg);
    const auto spans = group_spans(x, cfg);
    const double levels = cfg.levels();

    QuantizedTensor q;
    q.config = cfg;
    q.ints.resize(x.rows(), x.cols());
    q.scales.resize(static_cast<Index>(spans.size()));
    q.zero_points.resize(static_cast<Index>(spans.size()));

    for (size_t g = 0; g < spans.size(); ++g) {
        const auto& sp = spans[g];
        auto block = x.block(sp.row0, sp.col0, sp.rows, sp.cols);
        const double lo = block.minCoeff();
        const double hi = block.maxCoeff();
        double s, z;
        if (hi == lo) {
            // Degenerate range: pick s = 1 and an exact (real-valued) zero
            // point so dequantize reproduces the constant with zero error.
            s = 1.0;
            z = -lo;
            q.ints.block(sp.row0, sp.col0, sp.rows, sp.cols).setZero();
        } else {
            s = (hi - lo) / levels;
            z = round_nearest(-lo / s);
            for (Index i = 0; i < sp.rows; ++i) {
                for (Index j = 0; j < sp.cols; ++j) {
                    const double v = x(sp.row0 + i, sp.col0 + j);
                    double iv = round_nearest(v / s) + z;
                    iv = std::min(std::max(iv, 0.0), levels);
                    q.ints(sp.row0 + i, sp.col0 + j) = static_cast<int32_t>(iv);
                }
            }
        }
        q.scales(static_cast<Index>(g)) = s;
        q.zero_points(static_cast<Index>(g)) = z;
    }
    return q;
}

Matrix dequantize(const QuantizedTensor& q) {
    const auto spans = group_spans(Matrix::Zero(q.rows(), q.cols()), q.config);
    Matrix out(q.rows(), q.cols());
    for (size_t g = 0; g < spans.size(); ++g) {
        const auto& sp = spans[g];
        const double s = q.scales(static_cast<Index>(g));
        const double z = q.zero_points(static_cast<Index>(g));
        out.block(sp.row0, sp.col0, sp.rows, sp.cols) =
            (q.ints.block(sp.row0, sp.col0, sp.rows, sp.cols).cast<double>().array() - z) * s;
    }
    return out;
}

Matrix fake_quantize(const Matrix& x, const QuantConfig& cfg) {
    return dequantize(quantize(x, cfg));
}

QuantErrorMetrics quant_error(const Matrix& x, const QuantConfig& cfg) {
    const Matrix xh = fake_quantize(x, cfg);
    const Matrix err = x - xh;
    QuantErrorMetrics m;
    m.mse = err.squaredNorm() / static_cast<double>(err.size());
    m.max_abs_err = err.cwiseAbs().maxCoeff();
    const double signal = x.squaredNorm();
    const double noise = err.squaredNorm();
    m.sqnr_db = noise > 0.0 ? 10.0 * std::log10(signal / noise)
                            : std::numeric_limits<double>::infinity();
    return m;
}

}  // namespace trdq
