#include "osrpc/linalg.hpp"

#include <cmath>
#include <string>

#include "osrpc/errors.hpp"

namespace osrpc {

Matrix cholesky(const Matrix& a) {
  const int n = a.rows();
  if (a.cols() != n) {
    throw InvalidParameterError("cholesky: matrix must be square");
  }
  Matrix L(n, n);
  for (int j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (int k = 0; k < j; ++k) diag -= L(j, k) * L(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      throw DecompositionError(
          "cholesky: matrix not positive definite, leading minor of order " +
              std::to_string(j + 1) + " failed",
          j + 1);
    }
    const double d = std::sqrt(diag);
    L(j, j) = d;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / d;
    }
  }
  return L;
}

std::vector<double> chol_solve(const Matrix& L, const std::vector<double>& b) {
  const int n = L.rows();
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= L(i, k) * y[k];
    y[i] = s / L(i, i);
  }
  std::vector<double> x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int k = i + 1; k < n; ++k) s -= L(k, i) * x[k];
    x[i] = s / L(i, i);
  }
  return x;
}

std::vector<double> backsolve_transposed(const Matrix& L,
                                         const std::vector<double>& b) {
  const int n = L.rows();
  std::vector<double> x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= L(k, i) * x[k];
    x[i] = s / L(i, i);
  }
  return x;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  std::vector<double> out(a.rows(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    out[i] = s;
  }
  return out;
}

Matrix crossprod(const Matrix& a) {
  const int q = a.cols();
  Matrix g(q, q);
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < q; ++j) {
      const double aij = a(i, j);
      if (aij == 0.0) continue;
      for (int k = j; k < q; ++k) g(j, k) += aij * a(i, k);
    }
  }
  for (int j = 0; j < q; ++j)
    for (int k = 0; k < j; ++k) g(j, k) = g(k, j);
  return g;
}

std::vector<double> crossprod_vec(const Matrix& a,
                                  const std::vector<double>& y) {
  std::vector<double> out(a.cols(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    const double yi = y[i];
    for (int j = 0; j < a.cols(); ++j) out[j] += a(i, j) * yi;
  }
  return out;
}

}  // namespace osrpc
