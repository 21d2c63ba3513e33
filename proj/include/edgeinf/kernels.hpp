#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "edgeinf/matrix.hpp"

namespace edgeinf {

// Symmetric sparse structure over unordered node pairs. Entry weights live
// outside; the structure is immutable and shared by graphs, programs and
// kernels. Entries are canonical (u < v), sorted lexicographically, and each
// node's neighbor list is sorted, so every traversal order is fixed.
struct AdjacencyStructure {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> entries;                 // canonical pairs
  std::vector<std::vector<std::pair<int, int>>> neighbors;  // node -> (other, entry_id)

  static std::shared_ptr<const AdjacencyStructure> build(
      int num_nodes, std::vector<std::pair<int, int>> canonical_pairs);

  // Index of canonical pair {u,v}, or -1 if absent.
  int entry_index(int u, int v) const;
  int num_entries() const { return static_cast<int>(entries.size()); }
};

namespace kernels {

enum class Mode { Serial, Parallel };

Mode mode();
void set_mode(Mode m);
// Sets the OpenMP thread count and picks Serial for n <= 1, Parallel otherwise.
void set_threads(int n);
int threads();

// Dense products. C is shaped by the callee; when accumulate is set the
// result is added onto C. Parallel and serial lanes produce bitwise
// identical results: parallelism is over output rows and each output
// element accumulates in a fixed order.
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);  // aᵀ·b
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);  // a·bᵀ

// y = x + A_w·x with A_w the symmetric weighted adjacency (self-loop weight 1
// folded in). Weights are per structure entry.
void spmm_sym(const AdjacencyStructure& s, const std::vector<double>& w, const Matrix& x,
              Matrix& y, bool accumulate = false);

// Per-entry gradient of spmm_sym w.r.t. the weights:
// out[e] += g_row(u)·x_row(v) + g_row(v)·x_row(u).
void spmm_sym_weight_grad(const AdjacencyStructure& s, const Matrix& g, const Matrix& x,
                          std::vector<double>& out);

// y_row(i) = s[i] * x_row(i)
void row_scale(const std::vector<double>& scale, const Matrix& x, Matrix& y,
               bool accumulate = false);

void relu(const Matrix& x, Matrix& y);
// y += g ⊙ 1[x > 0]
void relu_backward(const Matrix& x, const Matrix& g, Matrix& y);

// Row-wise log-softmax.
void log_softmax(const Matrix& x, Matrix& y);
// p = softmax(x) recovered from y = log_softmax(x).
void softmax_from_log(const Matrix& log_p, Matrix& p);

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void spmm_sym(const AdjacencyStructure& s, const std::vector<double>& w, const Matrix& x,
              Matrix& y, bool accumulate);
void spmm_sym_weight_grad(const AdjacencyStructure& s, const Matrix& g, const Matrix& x,
                          std::vector<double>& out);
void row_scale(const std::vector<double>& scale, const Matrix& x, Matrix& y, bool accumulate);
void relu(const Matrix& x, Matrix& y);
void relu_backward(const Matrix& x, const Matrix& g, Matrix& y);
}  // namespace serial

namespace omp {
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void spmm_sym(const AdjacencyStructure& s, const std::vector<double>& w, const Matrix& x,
              Matrix& y, bool accumulate);
void spmm_sym_weight_grad(const AdjacencyStructure& s, const Matrix& g, const Matrix& x,
                          std::vector<double>& out);
void row_scale(const std::vector<double>& scale, const Matrix& x, Matrix& y, bool accumulate);
void relu(const Matrix& x, Matrix& y);
void relu_backward(const Matrix& x, const Matrix& g, Matrix& y);
}  // namespace omp

}  // namespace kernels
}  // namespace edgeinf
