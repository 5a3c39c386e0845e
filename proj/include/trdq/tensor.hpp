#ifndef TRDQ_TENSOR_HPP
#define TRDQ_TENSOR_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "trdq/errors.hpp"

namespace trdq {

// Row-major throughout: the in-memory layout is also the file layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Axis { Rows, Cols };

// Compact representation of a permutation matrix: entries[j] is the source
// index feeding destination j (gather semantics).
struct PermutationVector {
    std::vector<Index> entries;

    Index size() const { return static_cast<Index>(entries.size()); }
    static PermutationVector identity(Index n);
    bool is_valid() const;
};

PermutationVector inverse(const PermutationVector& p);

// Densifies p into the matrix M with M(p[j], j) = 1, so that x * M gathers
// columns and M.transpose() * w gathers rows with the same index vector.
Matrix densify(const PermutationVector& p);

void check_finite(const Matrix& x, const char* what);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix apply_permutation(const Matrix& x, const PermutationVector& p, Axis axis);

double max_abs(const Matrix& x);
Vector max_abs_per_row(const Matrix& x);
Vector max_abs_per_col(const Matrix& x);

}  // namespace trdq

#endif
