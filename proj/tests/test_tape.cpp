#include <doctest.h>

#include <cmath>

#include "edgeinf/error.hpp"
#include "edgeinf/gcn.hpp"
#include "edgeinf/tape.hpp"
#include "test_support.hpp"

using namespace edgeinf;

namespace {

DiffProgram::Bindings random_bindings(const DiffProgram& p, uint64_t seed, double scale = 0.7) {
  Rng rng(seed);
  DiffProgram::Bindings b;
  for (const auto& name : p.slot_names()) {
    auto [r, c] = p.slot_shape(name);
    Matrix m(r, c);
    for (double& x : m.data) x = scale * rng.normal();
    b[name] = std::move(m);
  }
  return b;
}

// Full-program gradient check for every slot against central differences.
void check_all_slots_fd(const DiffProgram& p, const DiffProgram::Bindings& inputs, double step,
                        double tol) {
  auto grads = p.vjp(inputs, Matrix::scalar(1.0));
  for (const auto& name : p.slot_names()) {
    Matrix fd = finite_difference_gradient(p, inputs, name, step);
    const Matrix& an = grads.at(name);
    for (size_t i = 0; i < fd.data.size(); ++i) {
      const double a = an.data[i], b = fd.data[i];
      CHECK(std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1.0}));
    }
  }
}

// GCN training-loss program over a tiny random graph with one materialized
// zero-weight candidate entry.
struct GcnFixture {
  Graph graph;
  GcnConfig config;
  WeightedAdjacency adj;
  std::shared_ptr<DiffProgram> loss;
  DiffProgram::Bindings inputs;

  explicit GcnFixture(uint64_t seed, int layers = 2, int hidden = 3)
      : graph(test::tiny_graph(6, 0.45, seed)) {
    config.layers = layers;
    config.hidden = hidden;
    config.in_dim = graph.feature_dim();
    config.classes = graph.num_classes();
    config.seed = seed;
    int a = -1, b = -1;
    for (int i = 0; i < graph.num_nodes() && a < 0; ++i)
      for (int j = i + 1; j < graph.num_nodes() && a < 0; ++j)
        if (!graph.has_edge(i, j)) {
          a = i;
          b = j;
        }
    adj = augmented_adjacency(graph, {{a, b}});
    loss = build_masked_ce_program(config, adj.structure, graph.features(), graph.labels(),
                                   graph.train_nodes(), DiffProgram::Reduction::Mean);
    inputs = adjacency_binding(adj);
    bind_params(inputs, config, test::random_params(config, seed + 1));
  }
};

}  // namespace

TEST_SUITE("tape") {
  TEST_CASE("evaluate: identity, relu and uniform cross-entropy") {
    DiffProgram ident;
    ident.set_output(ident.input("x", 2, 2));
    Matrix x(2, 2, {1.0, -2.0, 3.0, 4.0});
    CHECK(ident.evaluate({{"x", x}}).data == x.data);

    DiffProgram relu;
    relu.set_output(relu.relu(relu.input("x", 1, 2)));
    Matrix r = relu.evaluate({{"x", Matrix(1, 2, {-1.0, 2.0})}});
    CHECK(r.data == std::vector<double>{0.0, 2.0});

    // uniform logits over 4 classes -> ln 4 per masked node
    DiffProgram ce;
    int logits = ce.input("x", 3, 4);
    DiffProgram::NllSpec spec;
    spec.mask = {0, 2};
    spec.labels = {1, 0, 3};
    spec.reduction = DiffProgram::Reduction::Mean;
    ce.set_output(ce.masked_nll(ce.log_softmax(logits), spec));
    Matrix u(3, 4);
    CHECK(ce.evaluate({{"x", u}}).as_scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }

  TEST_CASE("unbound slot and shape mismatches are rejected") {
    DiffProgram p;
    p.set_output(p.input("x", 2, 2));
    CHECK_THROWS_WITH_AS(p.evaluate({}), doctest::Contains("unbound"), Error);
    CHECK_THROWS_AS(p.evaluate({{"x", Matrix(1, 2)}}), Error);
    CHECK_THROWS_AS(p.vjp({{"x", Matrix(2, 2)}}, Matrix(1, 1)), Error);
  }

  TEST_CASE("vjp: quadratic gradient and zero cotangent") {
    DiffProgram p;
    p.set_output(p.squared_norm(p.input("theta", 1, 2)));
    DiffProgram::Bindings in{{"theta", Matrix(1, 2, {1.0, 2.0})}};
    auto g = p.vjp(in, Matrix::scalar(1.0));
    CHECK(g.at("theta").data == std::vector<double>{2.0, 4.0});
    auto z = p.vjp(in, Matrix::scalar(0.0));
    CHECK(z.at("theta").data == std::vector<double>{0.0, 0.0});
  }

  TEST_CASE("jvp: linear map and zero tangent") {
    DiffProgram p;
    int w = p.input("W", 3, 2);
    int x = p.constant(Matrix(1, 3, {1.0, 2.0, 3.0}));
    p.set_output(p.matmul(x, w));
    Matrix w0(3, 2);
    DiffProgram::Bindings in{{"W", w0}};
    Matrix dw(3, 2, {1, 0, 0, 1, 0, 0});
    Matrix out = p.jvp(in, {{"W", dw}});
    CHECK(out.data[0] == doctest::Approx(1.0));  // ΔW·x row: [1·1+0·2+0·3, 1·2]
    CHECK(out.data[1] == doctest::Approx(2.0));
    Matrix zero = p.jvp(in, {});
    CHECK(zero.data == std::vector<double>{0.0, 0.0});
  }

  TEST_CASE("finite differences: analytic derivative of x^2 and constants") {
    DiffProgram p;
    p.set_output(p.squared_norm(p.input("x", 1, 1)));
    DiffProgram::Bindings in{{"x", Matrix::scalar(3.0)}};
    Matrix fd = finite_difference_gradient(p, in, "x", 1e-5);
    CHECK(fd.as_scalar() == doctest::Approx(6.0).epsilon(1e-8));

    DiffProgram c;
    c.set_output(c.scale(c.squared_norm(c.input("x", 1, 1)), 0.0));
    Matrix fz = finite_difference_gradient(c, {{"x", Matrix::scalar(2.0)}}, "x", 1e-5);
    CHECK(std::abs(fz.as_scalar()) < 1e-10);

    DiffProgram m;
    m.set_output(m.input("x", 2, 2));
    CHECK_THROWS_AS(finite_difference_gradient(m, {{"x", Matrix(2, 2)}}, "x", 1e-5), Error);
  }

  TEST_CASE("per-operator gradients match finite differences") {
    // sub + squared_norm + scale
    {
      DiffProgram p;
      int a = p.input("a", 3, 2);
      int b = p.input("b", 3, 2);
      p.set_output(p.scale(p.squared_norm(p.sub(a, b)), 0.5));
      check_all_slots_fd(p, random_bindings(p, 31), 1e-5, 1e-6);
    }
    // matmul chain with bias and relu
    {
      DiffProgram p;
      int x = p.constant(Matrix(2, 3, {0.2, -0.4, 1.0, 0.7, 0.1, -0.3}));
      int w = p.input("W", 3, 2);
      int b = p.input("b", 1, 2);
      p.set_output(p.squared_norm(p.relu(p.add_bias(p.matmul(x, w), b))));
      check_all_slots_fd(p, random_bindings(p, 32), 1e-5, 1e-6);
    }
    // log-softmax + masked nll, mean and sum
    for (auto red : {DiffProgram::Reduction::Mean, DiffProgram::Reduction::Sum}) {
      DiffProgram p;
      int x = p.input("x", 4, 3);
      DiffProgram::NllSpec spec;
      spec.mask = {0, 1, 3};
      spec.labels = {2, 0, 1, 1};
      spec.reduction = red;
      p.set_output(p.masked_nll(p.log_softmax(x), spec));
      check_all_slots_fd(p, random_bindings(p, 33), 1e-5, 1e-6);
    }
    // masked inner product
    {
      DiffProgram p;
      int x = p.input("x", 3, 2);
      Matrix coeff(3, 2, {1.0, -2.0, 0.5, 0.0, 3.0, 1.0});
      p.set_output(p.masked_inner(x, coeff, {0, 2}, -0.25));
      check_all_slots_fd(p, random_bindings(p, 34), 1e-5, 1e-6);
    }
    // bregman cross-entropy head
    {
      DiffProgram p;
      int x = p.input("x", 3, 3);
      Rng rng(35);
      Matrix ref(3, 3);
      for (double& v : ref.data) v = 0.3 * rng.normal();
      DiffProgram::NllSpec spec;
      spec.mask = {0, 2};
      spec.labels = {1, 1, 0};
      spec.reduction = DiffProgram::Reduction::Sum;
      p.set_output(p.bregman_ce(x, ref, spec, 0.5));
      check_all_slots_fd(p, random_bindings(p, 36), 1e-5, 1e-6);
    }
    // row_diff_norm
    {
      DiffProgram p;
      int a = p.input("a", 3, 4);
      int b = p.input("b", 3, 4);
      p.set_output(p.row_diff_norm(a, b, 1));
      check_all_slots_fd(p, random_bindings(p, 37), 1e-5, 1e-6);
    }
  }

  TEST_CASE("gcn loss gradients match finite differences on random instances") {
    for (uint64_t seed : {101u, 102u, 103u}) {
      GcnFixture f(seed);
      check_all_slots_fd(*f.loss, f.inputs, 1e-4, 1e-4);
    }
  }

  TEST_CASE("adjacency gradients flow through the degree normalization at zero weight") {
    GcnFixture f(202);
    auto grads = f.loss->vjp(f.inputs, Matrix::scalar(1.0));
    Matrix fd = finite_difference_gradient(*f.loss, f.inputs, "adj", 1e-5);
    const Matrix& an = grads.at("adj");
    bool some_nonzero = false;
    for (size_t e = 0; e < fd.data.size(); ++e) {
      CHECK(std::abs(an.data[e] - fd.data[e]) <=
            1e-4 * std::max({std::abs(an.data[e]), std::abs(fd.data[e]), 1.0}));
      if (an.data[e] != 0.0) some_nonzero = true;
    }
    CHECK(some_nonzero);
    // the materialized zero-weight entry is the last one added; its gradient
    // must exist and match finite differences (checked above) even though the
    // weight is exactly zero
    const auto& entries = f.adj.structure->entries;
    bool found_zero = false;
    for (size_t e = 0; e < entries.size(); ++e)
      if (f.inputs.at("adj").data[e] == 0.0) found_zero = true;
    CHECK(found_zero);
  }

  TEST_CASE("transpose consistency of jvp and vjp") {
    for (uint64_t seed : {71u, 72u}) {
      GcnFixture f(seed);
      auto logits = build_logits_program(f.config, f.adj.structure, f.graph.features());
      Rng rng(seed * 13);
      DiffProgram::Bindings tangents;
      for (const auto& name : logits->slot_names()) {
        auto [r, c] = logits->slot_shape(name);
        Matrix m(r, c);
        for (double& x : m.data) x = rng.normal();
        tangents[name] = std::move(m);
      }
      auto [orows, ocols] = logits->shape(logits->output());
      Matrix cot(orows, ocols);
      for (double& x : cot.data) x = rng.normal();

      Matrix jw = logits->jvp(f.inputs, tangents);
      double lhs = 0.0;
      for (size_t i = 0; i < jw.data.size(); ++i) lhs += cot.data[i] * jw.data[i];

      auto vj = logits->vjp(f.inputs, cot);
      double rhs = 0.0;
      for (const auto& name : logits->slot_names()) {
        const Matrix& g = vj.at(name);
        const Matrix& t = tangents.at(name);
        for (size_t i = 0; i < g.data.size(); ++i) rhs += g.data[i] * t.data[i];
      }
      CHECK(test::rel_err(lhs, rhs, 1e-12) <= 1e-10);
    }
  }

  TEST_CASE("evaluation is bitwise deterministic") {
    GcnFixture f(303);
    Matrix a = f.loss->evaluate(f.inputs);
    Matrix b = f.loss->evaluate(f.inputs);
    CHECK(a.data == b.data);
    auto g1 = f.loss->vjp(f.inputs, Matrix::scalar(1.0));
    auto g2 = f.loss->vjp(f.inputs, Matrix::scalar(1.0));
    for (const auto& name : f.loss->slot_names()) CHECK(g1.at(name).data == g2.at(name).data);
  }

  TEST_CASE("hvp matches finite differences of the gradient") {
    GcnFixture f(404, /*layers=*/2, /*hidden=*/3);
    Rng rng(405);
    std::vector<double> v(param_dim(f.config));
    for (double& x : v) x = rng.normal();
    DiffProgram::Bindings tangents = param_tangents(f.config, v);

    auto hv = f.loss->hvp(f.inputs, tangents);
    std::vector<double> hv_flat = flatten_slot_grads(f.config, hv);

    // directional finite difference of the parameter gradient
    const double step = 1e-5;
    GcnParams base;
    for (int l = 0; l < f.config.layers; ++l) {
      base.weights.push_back(f.inputs.at(weight_slot(l)));
      base.biases.push_back(f.inputs.at(bias_slot(l)));
    }
    std::vector<double> flat = base.flatten();
    auto grad_at = [&](double t) {
      std::vector<double> shifted = flat;
      axpy(t, v, shifted);
      DiffProgram::Bindings in = f.inputs;
      bind_params(in, f.config, GcnParams::unflatten(f.config, shifted));
      return flatten_slot_grads(f.config, f.loss->vjp(in, Matrix::scalar(1.0)));
    };
    std::vector<double> gp = grad_at(step), gm = grad_at(-step);
    for (size_t i = 0; i < hv_flat.size(); ++i) {
      const double fd = (gp[i] - gm[i]) / (2.0 * step);
      CHECK(std::abs(hv_flat[i] - fd) <= 1e-4 * std::max({std::abs(hv_flat[i]), std::abs(fd), 1.0}));
    }
  }

  TEST_CASE("hvp is symmetric as a bilinear form") {
    GcnFixture f(505);
    Rng rng(506);
    const int dim = param_dim(f.config);
    std::vector<double> u(dim), w(dim);
    for (double& x : u) x = rng.normal();
    for (double& x : w) x = rng.normal();
    auto hu = flatten_slot_grads(f.config, f.loss->hvp(f.inputs, param_tangents(f.config, u)));
    auto hw = flatten_slot_grads(f.config, f.loss->hvp(f.inputs, param_tangents(f.config, w)));
    CHECK(test::rel_err(dot(w, hu), dot(u, hw), 1e-12) <= 1e-9);
  }

  TEST_CASE("dirichlet node gradients match finite differences") {
    Graph g = test::tiny_graph(6, 0.5, 61);
    WeightedAdjacency adj = graph_adjacency(g);
    DiffProgram p;
    int a = p.input("adj", adj.structure->num_entries(), 1);
    int h = p.input("h", 6, 3);
    p.set_output(p.dirichlet(a, h, adj.structure, 0.5));
    DiffProgram::Bindings in = random_bindings(p, 62);
    check_all_slots_fd(p, in, 1e-5, 1e-6);
  }
}
