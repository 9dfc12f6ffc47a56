#pragma once

#include <cstddef>
#include <vector>

namespace osrpc {

// Minimal dense row-major matrix. The model only ever factors q x q systems
// with q = S + K (tens of columns), so no BLAS backend is warranted.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, fill) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }

  const std::vector<double>& data() const { return a_; }
  std::vector<double>& data() { return a_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> a_;
};

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
// Throws DecompositionError naming the failing leading minor otherwise.
Matrix cholesky(const Matrix& a);

// Solves A x = b given the lower Cholesky factor L of A.
std::vector<double> chol_solve(const Matrix& L, const std::vector<double>& b);

// Solves L^T x = b (back substitution with the lower factor's transpose).
std::vector<double> backsolve_transposed(const Matrix& L,
                                         const std::vector<double>& b);

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

// A^T A and A^T y for a dense design.
Matrix crossprod(const Matrix& a);
std::vector<double> crossprod_vec(const Matrix& a, const std::vector<double>& y);

}  // namespace osrpc
