#include "trdq/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace trdq {

PermutationVector PermutationVector::identity(Index n) {
    PermutationVector p;
    p.entries.resize(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) p.entries[static_cast<size_t>(i)] = i;
    return p;
}

bool PermutationVector::is_valid() const {
    std::vector<char> seen(entries.size(), 0);
    for (Index e : entries) {
        if (e < 0 || e >= size() || seen[static_cast<size_t>(e)]) return false;
        seen[static_cast<size_t>(e)] = 1;
    }
    return true;
}

PermutationVector inverse(const PermutationVector& p) {
    PermutationVector inv;
    inv.entries.resize(p.entries.size());
    for (Index j = 0; j < p.size(); ++j)
        inv.entries[static_cast<size_t>(p.entries[static_cast<size_t>(j)])] = j;
    return inv;
}

Matrix densify(const PermutationVector& p) {
    const Index n = p.size();
    Matrix m = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) m(p.entries[static_cast<size_t>(j)], j) = 1.0;
    return m;
}

void check_finite(const Matrix& x, const char* what) {
    if (!x.allFinite())
        throw DomainError(std::string(what) + ": non-finite values");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()));
    return a * b;
}

Matrix transpose(const Matrix& a) {
    return a.transpose();
}

Matrix apply_permutation(const Matrix& x, const PermutationVector& p, Axis axis) {
    const Index n = axis == Axis::Cols ? x.cols() : x.rows();
    if (p.size() != n)
        throw ShapeError("apply_permutation: permutation length " +
                         std::to_string(p.size()) + " vs axis extent " +
                         std::to_string(n));
    Matrix out(x.rows(), x.cols());
    if (axis == Axis::Cols) {
        for (Index j = 0; j < n; ++j)
            out.col(j) = x.col(p.entries[static_cast<size_t>(j)]);
    } else {
        for (Index i = 0; i < n; ++i)
            out.row(i) = x.row(p.entries[static_cast<size_t>(i)]);
    }
    return out;
}

double max_abs(const Matrix& x) {
    if (x.size() == 0) throw DomainError("max_abs: empty tensor");
    return x.cwiseAbs().maxCoeff();
}

Vector max_abs_per_row(const Matrix& x) {
    if (x.size() == 0) throw DomainError("max_abs_per_row: empty tensor");
    return x.cwiseAbs().rowwise().maxCoeff();
}

Vector max_abs_per_col(const Matrix& x) {
    if (x.size() == 0) throw DomainError("max_abs_per_col: empty tensor");
    return x.cwiseAbs().colwise().maxCoeff().transpose();
}

}  // namespace trdq
