#include "edgeinf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "edgeinf/error.hpp"

namespace edgeinf {

std::shared_ptr<const AdjacencyStructure> AdjacencyStructure::build(
    int num_nodes, std::vector<std::pair<int, int>> canonical_pairs) {
  auto s = std::make_shared<AdjacencyStructure>();
  s->num_nodes = num_nodes;
  std::sort(canonical_pairs.begin(), canonical_pairs.end());
  s->entries = std::move(canonical_pairs);
  s->neighbors.resize(num_nodes);
  for (int e = 0; e < static_cast<int>(s->entries.size()); ++e) {
    auto [u, v] = s->entries[e];
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes || u >= v)
      throw Error(ErrorKind::Invalid, "adjacency entry out of range or not canonical");
    if (e > 0 && s->entries[e] == s->entries[e - 1])
      throw Error(ErrorKind::Invalid, "duplicate adjacency entry");
    s->neighbors[u].push_back({v, e});
    s->neighbors[v].push_back({u, e});
  }
  for (auto& nb : s->neighbors) std::sort(nb.begin(), nb.end());
  return s;
}

int AdjacencyStructure::entry_index(int u, int v) const {
  if (u > v) std::swap(u, v);
  auto it = std::lower_bound(entries.begin(), entries.end(), std::make_pair(u, v));
  if (it == entries.end() || *it != std::make_pair(u, v)) return -1;
  return static_cast<int>(it - entries.begin());
}

namespace kernels {

namespace {
Mode g_mode = Mode::Parallel;
int g_threads = 0;
}  // namespace

Mode mode() { return g_mode; }
void set_mode(Mode m) { g_mode = m; }

void set_threads(int n) {
#ifdef _OPENMP
  if (n <= 0) n = omp_get_max_threads();
  omp_set_num_threads(n);
#else
  if (n <= 0) n = 1;
#endif
  g_threads = n;
  g_mode = (n <= 1) ? Mode::Serial : Mode::Parallel;
}

int threads() {
#ifdef _OPENMP
  if (g_threads <= 0) return omp_get_max_threads();
#endif
  return g_threads <= 0 ? 1 : g_threads;
}

namespace {

inline void shape_out(Matrix& c, int r, int cols, bool accumulate) {
  c.ensure_shape(r, cols);
  if (!accumulate) c.set_zero();
}

inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& c, int i) {
  double* crow = c.row(i);
  const double* arow = a.row(i);
  for (int k = 0; k < a.cols; ++k) {
    const double aik = arow[k];
    if (aik == 0.0) continue;
    const double* brow = b.row(k);
    for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
  }
}

// c row i of aᵀ·b: c(i,j) = Σ_k a(k,i)·b(k,j); fixed k order per element.
inline void matmul_tn_row(const Matrix& a, const Matrix& b, Matrix& c, int i) {
  double* crow = c.row(i);
  for (int j = 0; j < b.cols; ++j) {
    double s = 0.0;
    for (int k = 0; k < a.rows; ++k) s += a(k, i) * b(k, j);
    crow[j] += s;
  }
}

inline void matmul_nt_row(const Matrix& a, const Matrix& b, Matrix& c, int i) {
  double* crow = c.row(i);
  const double* arow = a.row(i);
  for (int j = 0; j < b.rows; ++j) {
    const double* brow = b.row(j);
    double s = 0.0;
    for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
    crow[j] += s;
  }
}

inline void spmm_row(const AdjacencyStructure& s, const std::vector<double>& w, const Matrix& x,
                     Matrix& y, int i) {
  double* yrow = y.row(i);
  const double* xrow = x.row(i);
  for (int j = 0; j < x.cols; ++j) yrow[j] += xrow[j];
  for (auto [other, e] : s.neighbors[i]) {
    const double we = w[e];
    const double* orow = x.row(other);
    for (int j = 0; j < x.cols; ++j) yrow[j] += we * orow[j];
  }
}

inline double row_dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

}  // namespace

// ------------------------------- serial lane -------------------------------

void serial::matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  shape_out(c, a.rows, b.cols, accumulate);
  for (int i = 0; i < a.rows; ++i) matmul_row(a, b, c, i);
}

void serial::matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  shape_out(c, a.cols, b.cols, accumulate);
  for (int i = 0; i < a.cols; ++i) matmul_tn_row(a, b, c, i);
}

void serial::matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  shape_out(c, a.rows, b.rows, accumulate);
  for (int i = 0; i < a.rows; ++i) matmul_nt_row(a, b, c, i);
}

void serial::spmm_sym(const AdjacencyStructure& s, const std::vector<double>& w, const Matrix& x,
                      Matrix& y, bool accumulate) {
  shape_out(y, x.rows, x.cols, accumulate);
  for (int i = 0; i < x.rows; ++i) spmm_row(s, w, x, y, i);
}

void serial::spmm_sym_weight_grad(const AdjacencyStructure& s, const Matrix& g, const Matrix& x,
                                  std::vector<double>& out) {
  for (int e = 0; e < s.num_entries(); ++e) {
    auto [u, v] = s.entries[e];
    out[e] += row_dot(g.row(u), x.row(v), x.cols) + row_dot(g.row(v), x.row(u), x.cols);
  }
}

void serial::row_scale(const std::vector<double>& scale, const Matrix& x, Matrix& y,
                       bool accumulate) {
  shape_out(y, x.rows, x.cols, accumulate);
  for (int i = 0; i < x.rows; ++i) {
    double* yrow = y.row(i);
    const double* xrow = x.row(i);
    const double si = scale[i];
    for (int j = 0; j < x.cols; ++j) yrow[j] += si * xrow[j];
  }
}

void serial::relu(const Matrix& x, Matrix& y) {
  y.ensure_shape(x.rows, x.cols);
  for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
}

void serial::relu_backward(const Matrix& x, const Matrix& g, Matrix& y) {
  for (size_t i = 0; i < x.data.size(); ++i)
    if (x.data[i] > 0.0) y.data[i] += g.data[i];
}

// ------------------------------- OpenMP lane -------------------------------

void omp::matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  shape_out(c, a.rows, b.cols, accumulate);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) matmul_row(a, b, c, i);
}

void omp::matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  shape_out(c, a.cols, b.cols, accumulate);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.cols; ++i) matmul_tn_row(a, b, c, i);
}

void omp::matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  shape_out(c, a.rows, b.rows, accumulate);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) matmul_nt_row(a, b, c, i);
}

void omp::spmm_sym(const AdjacencyStructure& s, const std::vector<double>& w, const Matrix& x,
                   Matrix& y, bool accumulate) {
  shape_out(y, x.rows, x.cols, accumulate);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.rows; ++i) spmm_row(s, w, x, y, i);
}

void omp::spmm_sym_weight_grad(const AdjacencyStructure& s, const Matrix& g, const Matrix& x,
                               std::vector<double>& out) {
#pragma omp parallel for schedule(static)
  for (int e = 0; e < s.num_entries(); ++e) {
    auto [u, v] = s.entries[e];
    out[e] += row_dot(g.row(u), x.row(v), x.cols) + row_dot(g.row(v), x.row(u), x.cols);
  }
}

void omp::row_scale(const std::vector<double>& scale, const Matrix& x, Matrix& y,
                    bool accumulate) {
  shape_out(y, x.rows, x.cols, accumulate);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.rows; ++i) {
    double* yrow = y.row(i);
    const double* xrow = x.row(i);
    const double si = scale[i];
    for (int j = 0; j < x.cols; ++j) yrow[j] += si * xrow[j];
  }
}

void omp::relu(const Matrix& x, Matrix& y) {
  y.ensure_shape(x.rows, x.cols);
  const long n = static_cast<long>(x.data.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
}

void omp::relu_backward(const Matrix& x, const Matrix& g, Matrix& y) {
  const long n = static_cast<long>(x.data.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i)
    if (x.data[i] > 0.0) y.data[i] += g.data[i];
}

// ------------------------------- dispatch ----------------------------------

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols != b.rows) throw Error(ErrorKind::Invalid, "matmul shape mismatch");
  g_mode == Mode::Serial ? serial::matmul(a, b, c, accumulate) : omp::matmul(a, b, c, accumulate);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.rows != b.rows) throw Error(ErrorKind::Invalid, "matmul_tn shape mismatch");
  g_mode == Mode::Serial ? serial::matmul_tn(a, b, c, accumulate)
                         : omp::matmul_tn(a, b, c, accumulate);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (a.cols != b.cols) throw Error(ErrorKind::Invalid, "matmul_nt shape mismatch");
  g_mode == Mode::Serial ? serial::matmul_nt(a, b, c, accumulate)
                         : omp::matmul_nt(a, b, c, accumulate);
}

void spmm_sym(const AdjacencyStructure& s, const std::vector<double>& w, const Matrix& x,
              Matrix& y, bool accumulate) {
  if (x.rows != s.num_nodes) throw Error(ErrorKind::Invalid, "spmm_sym shape mismatch");
  g_mode == Mode::Serial ? serial::spmm_sym(s, w, x, y, accumulate)
                         : omp::spmm_sym(s, w, x, y, accumulate);
}

void spmm_sym_weight_grad(const AdjacencyStructure& s, const Matrix& g, const Matrix& x,
                          std::vector<double>& out) {
  g_mode == Mode::Serial ? serial::spmm_sym_weight_grad(s, g, x, out)
                         : omp::spmm_sym_weight_grad(s, g, x, out);
}

void row_scale(const std::vector<double>& scale, const Matrix& x, Matrix& y, bool accumulate) {
  g_mode == Mode::Serial ? serial::row_scale(scale, x, y, accumulate)
                         : omp::row_scale(scale, x, y, accumulate);
}

void relu(const Matrix& x, Matrix& y) {
  g_mode == Mode::Serial ? serial::relu(x, y) : omp::relu(x, y);
}

void relu_backward(const Matrix& x, const Matrix& g, Matrix& y) {
  g_mode == Mode::Serial ? serial::relu_backward(x, g, y) : omp::relu_backward(x, g, y);
}

void log_softmax(const Matrix& x, Matrix& y) {
  y.ensure_shape(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xr = x.row(i);
    double* yr = y.row(i);
    double mx = xr[0];
    for (int j = 1; j < x.cols; ++j) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (int j = 0; j < x.cols; ++j) z += std::exp(xr[j] - mx);
    const double lz = std::log(z) + mx;
    for (int j = 0; j < x.cols; ++j) yr[j] = xr[j] - lz;
  }
}

void softmax_from_log(const Matrix& log_p, Matrix& p) {
  p.ensure_shape(log_p.rows, log_p.cols);
  for (size_t i = 0; i < log_p.data.size(); ++i) p.data[i] = std::exp(log_p.data[i]);
}

}  // namespace kernels
}  // namespace edgeinf
