#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "edgeinf/error.hpp"
#include "edgeinf/gcn.hpp"
#include "test_support.hpp"

using namespace edgeinf;

TEST_SUITE("gcn") {
  TEST_CASE("init is deterministic, biases zero, weights inside the glorot bound") {
    GcnConfig c;
    c.layers = 3;
    c.in_dim = 64;
    c.hidden = 64;
    c.classes = 64;
    c.seed = 12;
    GcnParams a = init_params(c), b = init_params(c);
    CHECK(a.flatten() == b.flatten());
    for (const auto& bias : a.biases)
      for (double x : bias.data) CHECK(x == 0.0);
    const double bound = std::sqrt(6.0 / 128.0);
    for (const auto& w : a.weights)
      for (double x : w.data) {
        CHECK(x <= bound);
        CHECK(x >= -bound);
      }
    GcnConfig other = c;
    other.seed = 13;
    CHECK(init_params(other).flatten() != a.flatten());
  }

  TEST_CASE("flatten/unflatten round-trips exactly") {
    GcnConfig c;
    c.layers = 2;
    c.in_dim = 5;
    c.hidden = 4;
    c.classes = 3;
    GcnParams p = test::random_params(c, 9);
    std::vector<double> flat = p.flatten();
    GcnParams q = GcnParams::unflatten(c, flat);
    CHECK(q.flatten() == flat);
    CHECK(static_cast<int>(flat.size()) == param_dim(c));
    flat.push_back(0.0);
    CHECK_THROWS_AS(GcnParams::unflatten(c, flat), Error);
  }

  TEST_CASE("forward on a single isolated node is the identity map") {
    Graph::Data d;
    d.num_nodes = 1;
    d.num_classes = 2;
    d.features = Matrix(1, 2, {0.7, -1.3});
    d.labels = {0};
    d.train = {0};
    Graph g(std::move(d));
    GcnConfig c;
    c.layers = 1;
    c.in_dim = 2;
    c.hidden = 2;
    c.classes = 2;
    GcnParams p;
    Matrix w(2, 2);
    w(0, 0) = 1.0;
    w(1, 1) = 1.0;
    p.weights.push_back(w);
    p.biases.push_back(Matrix(1, 2));
    ForwardResult f = gcn_forward(c, p, graph_adjacency(g), g.features());
    CHECK(f.logits.data[0] == doctest::Approx(0.7));
    CHECK(f.logits.data[1] == doctest::Approx(-1.3));
  }

  TEST_CASE("zero features and zero biases give zero logits") {
    Graph g = test::tiny_graph(7, 0.5, 22);
    GcnConfig c;
    c.layers = 2;
    c.in_dim = g.feature_dim();
    c.hidden = 3;
    c.classes = g.num_classes();
    GcnParams p = test::random_params(c, 23);
    for (auto& b : p.biases) b.set_zero();
    Matrix zero(g.num_nodes(), g.feature_dim());
    ForwardResult f = gcn_forward(c, p, graph_adjacency(g), zero);
    for (double x : f.logits.data) CHECK(x == 0.0);
  }

  TEST_CASE("two-node normalization matches the hand-computed 1/2 matrix") {
    Graph::Data d;
    d.num_nodes = 2;
    d.num_classes = 2;
    d.features = Matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    d.labels = {0, 1};
    d.edges = {{0, 1}};
    d.train = {0};
    Graph g(std::move(d));
    GcnConfig c;
    c.layers = 1;
    c.in_dim = 2;
    c.hidden = 2;
    c.classes = 2;
    GcnParams p;
    Matrix w(2, 2);
    w(0, 0) = 1.0;
    w(1, 1) = 1.0;
    p.weights.push_back(w);
    p.biases.push_back(Matrix(1, 2));
    // Â = D^{-1/2}(A+I)D^{-1/2} = [[1/2,1/2],[1/2,1/2]], so Â·X is constant 1/2.
    ForwardResult f = gcn_forward(c, p, graph_adjacency(g), g.features());
    for (double x : f.logits.data) CHECK(x == doctest::Approx(0.5).epsilon(1e-15));
  }

  TEST_CASE("embeddings are returned for every layer") {
    Graph g = test::tiny_graph(6, 0.4, 31);
    GcnConfig c;
    c.layers = 3;
    c.in_dim = g.feature_dim();
    c.hidden = 4;
    c.classes = g.num_classes();
    GcnParams p = test::random_params(c, 32);
    ForwardResult f = gcn_forward(c, p, graph_adjacency(g), g.features());
    CHECK(f.embeddings.size() == 4);
    CHECK(f.embeddings.front().cols == g.feature_dim());
    CHECK(f.embeddings.back().data == f.logits.data);
  }

  TEST_CASE("uniform logits give ln C loss") {
    Graph g = test::tiny_graph(6, 0.4, 41);
    GcnConfig c;
    c.layers = 1;
    c.in_dim = g.feature_dim();
    c.hidden = 2;
    c.classes = g.num_classes();
    GcnParams zero;
    zero.weights.push_back(Matrix(g.feature_dim(), g.num_classes()));
    zero.biases.push_back(Matrix(1, g.num_classes()));
    LossGrad lg = loss_and_grad(c, zero, g, g.train_nodes());
    CHECK(lg.loss == doctest::Approx(std::log(static_cast<double>(g.num_classes()))).epsilon(1e-12));
  }

  TEST_CASE("saturated correct logits give near-zero loss") {
    Graph g = test::tiny_graph(6, 0.4, 42);
    GcnConfig c;
    c.layers = 1;
    c.in_dim = g.feature_dim();
    c.hidden = 2;
    c.classes = g.num_classes();
    // Features are roughly one-hot labels; a large identity weight saturates
    // the prediction toward the true class for the label-aligned part.
    Graph::Data d;
    d.num_nodes = 4;
    d.num_classes = 2;
    d.features = Matrix(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
    d.labels = {0, 0, 1, 1};
    d.edges = {{0, 1}, {2, 3}};
    d.train = {0, 1, 2, 3};
    Graph clean(std::move(d));
    GcnParams p;
    Matrix w(2, 2);
    w(0, 0) = 1000.0;
    w(1, 1) = 1000.0;
    p.weights.push_back(w);
    p.biases.push_back(Matrix(1, 2));
    LossGrad lg = loss_and_grad(c, p, clean, clean.train_nodes());
    CHECK(lg.loss <= 1e-10);
  }

  TEST_CASE("loss gradient matches finite differences on a 6-node instance") {
    Graph g = test::tiny_graph(6, 0.45, 51);
    GcnConfig c;
    c.layers = 2;
    c.in_dim = g.feature_dim();
    c.hidden = 3;
    c.classes = g.num_classes();
    GcnParams p = test::random_params(c, 52);
    LossGrad lg = loss_and_grad(c, p, g, g.train_nodes());

    const double step = 1e-5;
    std::vector<double> flat = p.flatten();
    for (size_t i = 0; i < flat.size(); i += 3) {  // sample coordinates
      std::vector<double> f2 = flat;
      f2[i] += step;
      double lp = loss_and_grad(c, GcnParams::unflatten(c, f2), g, g.train_nodes()).loss;
      f2[i] = flat[i] - step;
      double lm = loss_and_grad(c, GcnParams::unflatten(c, f2), g, g.train_nodes()).loss;
      const double fd = (lp - lm) / (2.0 * step);
      CHECK(std::abs(lg.grad[i] - fd) <= 1e-4 * std::max({std::abs(fd), std::abs(lg.grad[i]), 1.0}));
    }
    CHECK_THROWS_AS(loss_and_grad(c, p, g, {}), Error);
  }

  TEST_CASE("output hessian: closed form, degenerate limit, and FD oracle") {
    Matrix h = output_loss_hessian({0.0, 0.0}, 0);
    CHECK(h(0, 0) == doctest::Approx(0.25));
    CHECK(h(0, 1) == doctest::Approx(-0.25));
    CHECK(h(1, 0) == doctest::Approx(-0.25));
    CHECK(h(1, 1) == doctest::Approx(0.25));

    Matrix sat = output_loss_hessian({1000.0, 0.0, 0.0}, 0);
    for (double x : sat.data) CHECK(std::abs(x) < 1e-12);

    std::vector<double> logits{0.3, -0.7, 1.1};
    const int y = 2;
    Matrix hh = output_loss_hessian(logits, y);
    auto loss_at = [&](const std::vector<double>& l) {
      double mx = std::max({l[0], l[1], l[2]});
      double z = std::exp(l[0] - mx) + std::exp(l[1] - mx) + std::exp(l[2] - mx);
      return -(l[y] - mx - std::log(z));
    };
    const double step = 1e-4;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        auto l = logits;
        l[i] += step;
        l[j] += step;
        double fpp = loss_at(l);
        l = logits;
        l[i] += step;
        l[j] -= step;
        double fpm = loss_at(l);
        l = logits;
        l[i] -= step;
        l[j] += step;
        double fmp = loss_at(l);
        l = logits;
        l[i] -= step;
        l[j] -= step;
        double fmm = loss_at(l);
        const double fd = (fpp - fpm - fmp + fmm) / (4.0 * step * step);
        CHECK(std::abs(hh(i, j) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }

    Rng rng(61);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> l{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
      Matrix hm = output_loss_hessian(l, 1);
      std::vector<double> x{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
      double quad = 0.0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          CHECK(hm(i, j) == doctest::Approx(hm(j, i)).epsilon(1e-14));
          quad += x[i] * hm(i, j) * x[j];
        }
      CHECK(quad >= -1e-12);
    }
  }

  TEST_CASE("forward on edited graph equals forward on the reweighted adjacency") {
    Graph g = test::tiny_graph(9, 0.4, 71);
    GcnConfig c;
    c.layers = 2;
    c.in_dim = g.feature_dim();
    c.hidden = 3;
    c.classes = g.num_classes();
    GcnParams p = test::random_params(c, 72);
    const double eps = -1.0 / static_cast<double>(g.train_nodes().size());

    auto [u, v] = g.edges().front();
    CandidateEdit del(u, v, EditKind::Delete);
    ForwardResult a = gcn_forward(c, p, graph_adjacency(apply_edit(g, del)), g.features());
    ForwardResult b = gcn_forward(c, p, reweighted_adjacency(g, del, eps), g.features());
    for (size_t i = 0; i < a.logits.data.size(); ++i)
      CHECK(std::abs(a.logits.data[i] - b.logits.data[i]) <= 1e-12);

    int x = -1, y = -1;
    for (int i = 0; i < g.num_nodes() && x < 0; ++i)
      for (int j = i + 1; j < g.num_nodes() && x < 0; ++j)
        if (!g.has_edge(i, j)) {
          x = i;
          y = j;
        }
    CandidateEdit ins(x, y, EditKind::Insert);
    ForwardResult ai = gcn_forward(c, p, graph_adjacency(apply_edit(g, ins)), g.features());
    ForwardResult bi = gcn_forward(c, p, reweighted_adjacency(g, ins, eps), g.features());
    for (size_t i = 0; i < ai.logits.data.size(); ++i)
      CHECK(std::abs(ai.logits.data[i] - bi.logits.data[i]) <= 1e-12);
  }

  TEST_CASE("forward outputs do not depend on labels") {
    Graph g = test::tiny_graph(8, 0.4, 81);
    GcnConfig c;
    c.layers = 2;
    c.in_dim = g.feature_dim();
    c.hidden = 3;
    c.classes = g.num_classes();
    GcnParams p = test::random_params(c, 82);
    ForwardResult a = gcn_forward(c, p, graph_adjacency(g), g.features());

    Graph::Data d;
    d.num_nodes = g.num_nodes();
    d.num_classes = g.num_classes();
    d.features = g.features();
    d.labels = g.labels();
    for (int& l : d.labels) l = (l + 1) % g.num_classes();
    d.edges = g.edges();
    d.train = g.train_nodes();
    d.val = g.val_nodes();
    d.test = g.test_nodes();
    Graph permuted(std::move(d));
    ForwardResult b = gcn_forward(c, p, graph_adjacency(permuted), permuted.features());
    CHECK(a.logits.data == b.logits.data);
  }

  TEST_CASE("checkpoint save/load round trip") {
    GcnConfig c;
    c.layers = 2;
    c.in_dim = 3;
    c.hidden = 4;
    c.classes = 2;
    c.seed = 5;
    Checkpoint ck;
    ck.config = c;
    ck.params = test::random_params(c, 6);
    ck.meta.epochs = 17;
    ck.meta.lr = 0.05;
    ck.meta.weight_decay = 1e-4;
    ck.meta.seed = 5;
    ck.meta.final_val_acc = 0.75;
    auto path = (std::filesystem::temp_directory_path() / "edgeinf_ck.json").string();
    ck.save(path);
    Checkpoint lo = Checkpoint::load(path);
    CHECK(lo.params.flatten() == ck.params.flatten());
    CHECK(lo.config.hidden == 4);
    CHECK(lo.meta.epochs == 17);
    CHECK(lo.meta.final_val_acc == 0.75);
    CHECK_THROWS_AS(Checkpoint::load("/nonexistent.json"), Error);
  }
}
