#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace igdf {

// Dense row-major matrix of doubles. Desk-scale: no BLAS, just cache-friendly
// loops compiled at -O2.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
};

// C = A * B^T where A is [m,k] and B is [n,k]; result [m,n].
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dim mismatch");
  Matrix c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.data.data() + static_cast<std::size_t>(i) * a.cols;
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.data.data() + static_cast<std::size_t>(j) * b.cols;
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
      c(i, j) = acc;
    }
  }
  return c;
}

// C = A * B where A is [m,k], B is [k,n].
inline Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul_nn: inner dim mismatch");
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    double* ci = c.data.data() + static_cast<std::size_t>(i) * c.cols;
    const double* ai = a.data.data() + static_cast<std::size_t>(i) * a.cols;
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.data.data() + static_cast<std::size_t>(k) * b.cols;
      for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// C = A^T * B where A is [k,m], B is [k,n]; result [m,n].
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: outer dim mismatch");
  Matrix c(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    const double* ak = a.data.data() + static_cast<std::size_t>(k) * a.cols;
    const double* bk = b.data.data() + static_cast<std::size_t>(k) * b.cols;
    for (int i = 0; i < a.cols; ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.data.data() + static_cast<std::size_t>(i) * c.cols;
      for (int j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

// Solve A x = b by Gaussian elimination with partial pivoting. A is copied.
inline std::vector<double> solve_linear(Matrix a, std::vector<double> b) {
  const int n = a.rows;
  if (a.cols != n || static_cast<int>(b.size()) != n)
    throw std::invalid_argument("solve_linear: shape mismatch");
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::abs(a(col, col));
    for (int r = col + 1; r < n; ++r) {
      const double v = std::abs(a(r, col));
      if (v > best) { best = v; piv = r; }
    }
    if (best < 1e-14) throw std::runtime_error("solve_linear: singular system");
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(a(piv, c), a(col, c));
      std::swap(b[piv], b[col]);
    }
    const double d = a(col, col);
    for (int r = col + 1; r < n; ++r) {
      const double f = a(r, col) / d;
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= a(r, c) * x[c];
    x[r] = acc / a(r, r);
  }
  return x;
}

}  // namespace igdf
