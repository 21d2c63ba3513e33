#pragma once

#include <cmath>
#include <vector>

#include "edgeinf/gcn.hpp"
#include "edgeinf/graph.hpp"
#include "edgeinf/influence.hpp"
#include "edgeinf/matrix.hpp"
#include "edgeinf/rng.hpp"

namespace edgeinf::test {

// ---- dense linear-algebra oracle (independent of the solver under test) ----

inline std::vector<double> dense_matvec(const Matrix& a, const std::vector<double>& x) {
  std::vector<double> y(a.rows, 0.0);
  for (int i = 0; i < a.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < a.cols; ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

// Cholesky solve of SPD a·x = b.
inline std::vector<double> cholesky_solve(Matrix a, std::vector<double> b) {
  const int n = a.rows;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      if (i == j)
        a(i, i) = std::sqrt(s);
      else
        a(i, j) = s / a(j, j);
    }
  }
  for (int i = 0; i < n; ++i) {  // L y = b
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= a(i, k) * b[k];
    b[i] = s / a(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {  // Lᵀ x = y
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= a(k, i) * b[k];
    b[i] = s / a(i, i);
  }
  return b;
}

// Random SPD matrix with the requested condition number: Q·diag(λ)·Qᵀ with Q
// from modified Gram-Schmidt on a Gaussian matrix.
inline Matrix random_spd(int n, double cond, Rng& rng) {
  Matrix q(n, n);
  for (double& v : q.data) v = rng.normal();
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < j; ++k) {
      double d = 0.0;
      for (int i = 0; i < n; ++i) d += q(i, j) * q(i, k);
      for (int i = 0; i < n; ++i) q(i, j) -= d * q(i, k);
    }
    double norm = 0.0;
    for (int i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (int i = 0; i < n; ++i) q(i, j) /= norm;
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    eig[i] = std::exp(std::log(cond) * t);  // log-uniform grid in [1, cond]
  }
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += q(i, k) * eig[k] * q(j, k);
      a(i, j) = s;
    }
  return a;
}

class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(Matrix a) : a_(std::move(a)) {}
  int dim() const override { return a_.rows; }
  void apply(const std::vector<double>& x, std::vector<double>& out) override {
    out = dense_matvec(a_, x);
  }
  const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
};

class DiagonalOperator final : public LinearOperator {
 public:
  explicit DiagonalOperator(std::vector<double> d) : d_(std::move(d)) {}
  int dim() const override { return static_cast<int>(d_.size()); }
  void apply(const std::vector<double>& x, std::vector<double>& out) override {
    out.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = d_[i] * x[i];
  }

 private:
  std::vector<double> d_;
};

// ---- fixtures ----

inline Graph tiny_graph(int n, double edge_prob, uint64_t seed, int classes = 2) {
  Rng rng(seed);
  Graph::Data d;
  d.num_nodes = n;
  d.num_classes = classes;
  d.labels.resize(n);
  for (int v = 0; v < n; ++v) d.labels[v] = static_cast<int>(rng.uniform_int(classes));
  d.features.ensure_shape(n, classes);
  for (int v = 0; v < n; ++v)
    for (int c = 0; c < classes; ++c)
      d.features(v, c) = (d.labels[v] == c ? 1.0 : 0.0) + 0.3 * rng.normal();
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.uniform() < edge_prob) d.edges.push_back({u, v});
  for (int v = 0; v < n; ++v) {
    if (v % 3 == 0)
      d.train.push_back(v);
    else if (v % 3 == 1)
      d.val.push_back(v);
    else
      d.test.push_back(v);
  }
  return Graph(std::move(d));
}

inline GcnParams random_params(const GcnConfig& config, uint64_t seed, double scale = 0.4) {
  Rng rng(seed);
  GcnParams p = init_params(config);
  for (auto& w : p.weights)
    for (double& x : w.data) x = scale * rng.normal();
  for (auto& b : p.biases)
    for (double& x : b.data) x = 0.1 * rng.normal();
  return p;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace edgeinf::test
