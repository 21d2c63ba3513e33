#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace edgeinf {

// Dense row-major matrix of doubles. Shapes are fixed per computation node;
// ensure_shape lets workspaces reuse storage across repeated passes.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {}

  static Matrix scalar(double v) {
    Matrix m(1, 1);
    m.data[0] = v;
    return m;
  }

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }
  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

  size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void ensure_shape(int r, int c) {
    if (rows != r || cols != c) {
      rows = r;
      cols = c;
      data.resize(static_cast<size_t>(r) * c);
    }
  }
  void set_zero() { std::fill(data.begin(), data.end(), 0.0); }

  double as_scalar() const { return data[0]; }
};

inline void add_inplace(Matrix& a, const Matrix& b) {
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

inline void sub_inplace(Matrix& a, const Matrix& b) {
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] -= b.data[i];
}

inline void scale_inplace(Matrix& a, double c) {
  for (double& x : a.data) x *= c;
}

// Flat-vector helpers; reductions run in a fixed sequential order so repeated
// evaluations are bitwise identical.
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const std::vector<double>& a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.data); }

}  // namespace edgeinf
