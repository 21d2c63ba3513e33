// Compares the serial reference kernels against the OpenMP lane and checks
// they agree bitwise while doing it.
#include <chrono>
#include <cstdio>
#include <vector>

#include "edgeinf/gcn.hpp"
#include "edgeinf/graph.hpp"
#include "edgeinf/influence.hpp"
#include "edgeinf/kernels.hpp"
#include "edgeinf/rng.hpp"
#include "edgeinf/trainer.hpp"

using namespace edgeinf;

namespace {

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.data) x = rng.normal();
  return m;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now_s();
    f();
    best = std::min(best, now_s() - t0);
  }
  return best;
}

bool same_bits(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

void report(const char* name, double serial_s, double omp_s, bool exact) {
  std::printf("%-28s %10.3f ms %10.3f ms %7.2fx   %s\n", name, serial_s * 1e3, omp_s * 1e3,
              serial_s / omp_s, exact ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;
  if (argc > 1) threads = std::atoi(argv[1]);
  kernels::set_threads(threads);
  kernels::set_mode(kernels::Mode::Parallel);
  std::printf("threads: %d\n", kernels::threads());
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  Rng rng(7);
  {
    Matrix a = random_matrix(512, 256, rng), b = random_matrix(256, 256, rng);
    Matrix cs, cp;
    const double ts = time_best_of(5, [&] { kernels::serial::matmul(a, b, cs, false); });
    const double tp = time_best_of(5, [&] { kernels::omp::matmul(a, b, cp, false); });
    report("matmul 512x256x256", ts, tp, same_bits(cs, cp));
  }
  {
    Matrix a = random_matrix(512, 256, rng), b = random_matrix(512, 256, rng);
    Matrix cs, cp;
    const double ts = time_best_of(5, [&] { kernels::serial::matmul_tn(a, b, cs, false); });
    const double tp = time_best_of(5, [&] { kernels::omp::matmul_tn(a, b, cp, false); });
    report("matmul_tn 256x512x256", ts, tp, same_bits(cs, cp));
  }
  {
    SbmSpec spec;
    spec.block_sizes = {256, 256, 256};
    spec.p_in = 0.05;
    spec.p_out = 0.005;
    Graph g = generate_sbm(spec, 11);
    WeightedAdjacency adj = graph_adjacency(g);
    Matrix x = random_matrix(g.num_nodes(), 64, rng);
    Matrix ys, yp;
    const double ts =
        time_best_of(5, [&] { kernels::serial::spmm_sym(*adj.structure, adj.weights, x, ys, false); });
    const double tp =
        time_best_of(5, [&] { kernels::omp::spmm_sym(*adj.structure, adj.weights, x, yp, false); });
    report("spmm 768 nodes x 64", ts, tp, same_bits(ys, yp));
  }
  {
    SbmSpec spec;
    spec.block_sizes = {30, 30, 30};
    Graph g = generate_sbm(spec, 0);
    GcnConfig mc;
    mc.in_dim = g.feature_dim();
    mc.classes = g.num_classes();
    TrainConfig tc;
    tc.epochs = 50;
    GcnParams params = train(g, mc, tc).params;

    GgnOperator op(mc, params, g, 0.01);
    std::vector<double> v(param_dim(mc), 0.5), out(v.size());
    kernels::set_mode(kernels::Mode::Serial);
    const double ts = time_best_of(3, [&] {
      for (int i = 0; i < 50; ++i) op.apply(v, out);
    });
    std::vector<double> out_serial = out;
    kernels::set_mode(kernels::Mode::Parallel);
    const double tp = time_best_of(3, [&] {
      for (int i = 0; i < 50; ++i) op.apply(v, out);
    });
    bool exact = out.size() == out_serial.size();
    for (size_t i = 0; exact && i < out.size(); ++i) exact = out[i] == out_serial[i];
    report("ggn apply x50 (90 nodes)", ts, tp, exact);
  }
  return 0;
}
