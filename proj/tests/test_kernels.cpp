#include <doctest.h>

#include "edgeinf/kernels.hpp"
#include "edgeinf/rng.hpp"
#include "test_support.hpp"

using namespace edgeinf;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.data) x = rng.normal();
  return m;
}

bool same_bits(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("matmul matches a naive reference") {
    Rng rng(1);
    Matrix a = random_matrix(7, 5, rng), b = random_matrix(5, 9, rng), c;
    kernels::matmul(a, b, c);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 9; ++j) {
        double s = 0.0;
        for (int k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
        CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
      }
  }

  TEST_CASE("transpose variants agree with explicit transposes") {
    Rng rng(2);
    Matrix a = random_matrix(6, 4, rng), b = random_matrix(6, 5, rng);
    Matrix at(4, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 4; ++j) at(j, i) = a(i, j);
    Matrix c1, c2;
    kernels::matmul_tn(a, b, c1);
    kernels::matmul(at, b, c2);
    for (size_t i = 0; i < c1.data.size(); ++i) CHECK(c1.data[i] == doctest::Approx(c2.data[i]));

    Matrix d = random_matrix(3, 4, rng);
    Matrix dt(4, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) dt(j, i) = d(i, j);
    Matrix e1, e2;
    kernels::matmul_nt(a, d, e1);
    kernels::matmul(a, dt, e2);
    for (size_t i = 0; i < e1.data.size(); ++i) CHECK(e1.data[i] == doctest::Approx(e2.data[i]));
  }

  TEST_CASE("serial and openmp lanes are bitwise identical") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      const int n = 16 + static_cast<int>(rng.uniform_int(48));
      const int k = 8 + static_cast<int>(rng.uniform_int(24));
      const int m = 8 + static_cast<int>(rng.uniform_int(24));
      Matrix a = random_matrix(n, k, rng), b = random_matrix(k, m, rng);
      Matrix cs, cp;
      kernels::serial::matmul(a, b, cs, false);
      kernels::omp::matmul(a, b, cp, false);
      CHECK(same_bits(cs, cp));

      Matrix ts, tp;
      kernels::serial::matmul_tn(a, random_matrix(n, m, rng), ts, false);
      // rebuild with identical rhs for both lanes
      Rng rng2(100 + trial);
      Matrix rhs = random_matrix(n, m, rng2);
      kernels::serial::matmul_tn(a, rhs, ts, false);
      kernels::omp::matmul_tn(a, rhs, tp, false);
      CHECK(same_bits(ts, tp));
    }

    Graph g = test::tiny_graph(20, 0.3, 4);
    WeightedAdjacency adj = graph_adjacency(g);
    Rng rng3(5);
    Matrix x = random_matrix(20, 7, rng3);
    Matrix ys, yp;
    kernels::serial::spmm_sym(*adj.structure, adj.weights, x, ys, false);
    kernels::omp::spmm_sym(*adj.structure, adj.weights, x, yp, false);
    CHECK(same_bits(ys, yp));

    std::vector<double> gs(adj.weights.size(), 0.0), gp(adj.weights.size(), 0.0);
    Matrix cot = random_matrix(20, 7, rng3);
    kernels::serial::spmm_sym_weight_grad(*adj.structure, cot, x, gs);
    kernels::omp::spmm_sym_weight_grad(*adj.structure, cot, x, gp);
    for (size_t i = 0; i < gs.size(); ++i) CHECK(gs[i] == gp[i]);
  }

  TEST_CASE("spmm_sym computes x + A_w x against a dense build") {
    Graph g = test::tiny_graph(12, 0.4, 6);
    WeightedAdjacency adj = graph_adjacency(g);
    Rng rng(7);
    Matrix x = random_matrix(12, 3, rng);
    Matrix y;
    kernels::spmm_sym(*adj.structure, adj.weights, x, y);

    Matrix dense(12, 12);
    for (int i = 0; i < 12; ++i) dense(i, i) = 1.0;
    for (int e = 0; e < adj.structure->num_entries(); ++e) {
      auto [u, v] = adj.structure->entries[e];
      dense(u, v) = adj.weights[e];
      dense(v, u) = adj.weights[e];
    }
    Matrix expect;
    kernels::matmul(dense, x, expect);
    for (size_t i = 0; i < y.data.size(); ++i)
      CHECK(y.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-13));
  }

  TEST_CASE("log_softmax rows sum to one after exp") {
    Rng rng(8);
    Matrix x = random_matrix(5, 4, rng), ls, p;
    kernels::log_softmax(x, ls);
    kernels::softmax_from_log(ls, p);
    for (int i = 0; i < 5; ++i) {
      double s = 0.0;
      for (int j = 0; j < 4; ++j) s += p(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("adjacency structure rejects malformed entries") {
    CHECK_THROWS(AdjacencyStructure::build(3, {{0, 0}}));
    CHECK_THROWS(AdjacencyStructure::build(3, {{1, 0}}));
    CHECK_THROWS(AdjacencyStructure::build(3, {{0, 1}, {0, 1}}));
    CHECK_THROWS(AdjacencyStructure::build(2, {{0, 5}}));
    auto s = AdjacencyStructure::build(3, {{0, 2}, {0, 1}});
    CHECK(s->entry_index(2, 0) == 1);
    CHECK(s->entry_index(1, 2) == -1);
  }
}
