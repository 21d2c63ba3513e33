#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "edgeinf/error.hpp"
#include "edgeinf/graph.hpp"
#include "test_support.hpp"

using namespace edgeinf;

namespace {

std::string write_temp(const std::string& content) {
  static int counter = 0;
  auto path = std::filesystem::temp_directory_path() /
              ("edgeinf_graph_" + std::to_string(++counter) + ".json");
  std::ofstream out(path);
  out << content;
  return path.string();
}

const char* kTinyBundle = R"({
  "num_nodes": 2, "num_classes": 2,
  "features": [[1.0],[0.5]],
  "labels": [0, 1],
  "edges": [[0, 1]],
  "train": [0], "val": [1], "test": []
})";

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("smallest valid bundle loads") {
    Graph g = Graph::load(write_temp(kTinyBundle));
    CHECK(g.num_nodes() == 2);
    CHECK(g.num_edges() == 1);
    CHECK(g.feature_dim() == 1);
    CHECK(g.has_edge(1, 0));
  }

  TEST_CASE("self-loop edge is rejected") {
    std::string b = kTinyBundle;
    b.replace(b.find("[[0, 1]]"), 8, "[[1, 1]]");
    CHECK_THROWS_WITH_AS(Graph::load(write_temp(b)), doctest::Contains("self-loop"), Error);
  }

  TEST_CASE("duplicate edge in either order is rejected") {
    std::string b = kTinyBundle;
    b.replace(b.find("[[0, 1]]"), 8, "[[0,1],[1,0]]");
    CHECK_THROWS_WITH_AS(Graph::load(write_temp(b)), doctest::Contains("duplicate edge"), Error);
  }

  TEST_CASE("distinct diagnostics for schema violations") {
    std::string overlap = kTinyBundle;
    overlap.replace(overlap.find("\"val\": [1]"), 10, "\"val\": [0]");
    CHECK_THROWS_WITH_AS(Graph::load(write_temp(overlap)), doctest::Contains("mask"), Error);

    std::string badlabel = kTinyBundle;
    badlabel.replace(badlabel.find("[0, 1]"), 6, "[0, 7]");
    CHECK_THROWS_WITH_AS(Graph::load(write_temp(badlabel)), doctest::Contains("label out of range"),
                         Error);

    std::string shortfeat = kTinyBundle;
    shortfeat.replace(shortfeat.find("[[1.0],[0.5]]"), 13, "[[1.0]]");
    CHECK_THROWS_AS(Graph::load(write_temp(shortfeat)), Error);

    CHECK_THROWS_WITH_AS(Graph::load(write_temp("{ not json")), doctest::Contains("malformed JSON"),
                         Error);
    CHECK_THROWS_AS(Graph::load("/nonexistent/path.json"), Error);
  }

  TEST_CASE("save/load round trip") {
    Graph g = test::tiny_graph(9, 0.4, 3);
    auto path = write_temp("");
    g.save(path);
    Graph h = Graph::load(path);
    CHECK(h.num_nodes() == g.num_nodes());
    CHECK(h.edges() == g.edges());
    CHECK(h.labels() == g.labels());
    CHECK(h.train_nodes() == g.train_nodes());
  }

  TEST_CASE("barbell: k=5 b=1 gives 10 nodes and two cliques joined once") {
    Graph g = generate_barbell({5, 1, 0.1}, 42);
    CHECK(g.num_nodes() == 10);
    CHECK(g.num_edges() == 2 * 10 + 1);  // two K5s plus the bridge
    CHECK(g.has_edge(4, 5));
    for (int v = 0; v < 5; ++v) CHECK(g.labels()[v] == 0);
    for (int v = 5; v < 10; ++v) CHECK(g.labels()[v] == 1);
    CHECK_FALSE(g.train_nodes().empty());
    CHECK_FALSE(g.val_nodes().empty());
  }

  TEST_CASE("barbell: bridge interior nodes alternate labels") {
    Graph g = generate_barbell({4, 3, 0.1}, 1);
    CHECK(g.num_nodes() == 8 + 2);
    CHECK(g.labels()[8] == 0);
    CHECK(g.labels()[9] == 1);
    // path 3 - 8 - 9 - 4
    CHECK(g.has_edge(3, 8));
    CHECK(g.has_edge(8, 9));
    CHECK(g.has_edge(4, 9));
    CHECK_THROWS_AS(generate_barbell({2, 1, 0.1}, 0), Error);
  }

  TEST_CASE("sbm degenerate probabilities give disjoint cliques") {
    SbmSpec spec;
    spec.block_sizes = {10, 10};
    spec.p_in = 1.0;
    spec.p_out = 0.0;
    Graph g = generate_sbm(spec, 3);
    CHECK(g.num_edges() == 2 * 45);
    for (auto [u, v] : g.edges()) CHECK(g.labels()[u] == g.labels()[v]);
    CHECK_THROWS_AS(generate_sbm({{0}, 0.5, 0.5, 0.1}, 0), Error);
    CHECK_THROWS_AS(generate_sbm({{3, 3}, 1.5, 0.0, 0.1}, 0), Error);
  }

  TEST_CASE("sbm edge count lies within 3 sigma of its expectation") {
    SbmSpec spec;
    spec.block_sizes = {30, 30, 30};
    spec.p_in = 0.3;
    spec.p_out = 0.02;
    Graph g = generate_sbm(spec, 0);
    // 3 blocks of C(30,2)=435 in-pairs at 0.3 plus 2700 cross-pairs at 0.02.
    const double mean = 3 * 435 * 0.3 + 2700 * 0.02;
    const double var = 3 * 435 * 0.3 * 0.7 + 2700 * 0.02 * 0.98;
    CHECK(std::abs(g.num_edges() - mean) <= 3.0 * std::sqrt(var));
  }

  TEST_CASE("generators are reproducible under a fixed seed") {
    Graph a = generate_sbm({{12, 12}, 0.4, 0.05, 0.1}, 9);
    Graph b = generate_sbm({{12, 12}, 0.4, 0.05, 0.1}, 9);
    CHECK(a.edges() == b.edges());
    CHECK(a.features().data == b.features().data);
    CHECK(a.train_nodes() == b.train_nodes());
    Graph c = generate_sbm({{12, 12}, 0.4, 0.05, 0.1}, 10);
    CHECK(a.edges() != c.edges());
  }

  TEST_CASE("exact hop sets on a path and a triangle") {
    Graph::Data d;
    d.num_nodes = 3;
    d.num_classes = 1;
    d.features.ensure_shape(3, 1);
    d.labels = {0, 0, 0};
    d.edges = {{0, 1}, {1, 2}};
    d.train = {0};
    Graph path(std::move(d));
    CHECK(exact_hop_set(path, 0, 1) == std::vector<int>{1});
    CHECK(exact_hop_set(path, 0, 2) == std::vector<int>{2});
    CHECK(exact_hop_set(path, 0, 3).empty());

    Graph::Data t;
    t.num_nodes = 3;
    t.num_classes = 1;
    t.features.ensure_shape(3, 1);
    t.labels = {0, 0, 0};
    t.edges = {{0, 1}, {0, 2}, {1, 2}};
    t.train = {0};
    Graph tri(std::move(t));
    CHECK(exact_hop_set(tri, 0, 2).empty());
    CHECK_THROWS_AS(exact_hop_set(tri, 5, 1), Error);
    CHECK_THROWS_AS(exact_hop_set(tri, 0, 0), Error);
  }

  TEST_CASE("barbell hop sets match a brute-force BFS oracle") {
    Graph g = generate_barbell({5, 1, 0.1}, 17);
    // Brute force all-pairs distances by repeated BFS over the edge list.
    auto dist = [&](int s, int t) {
      std::vector<int> d(g.num_nodes(), -1);
      std::vector<int> q{s};
      d[s] = 0;
      for (size_t qi = 0; qi < q.size(); ++qi) {
        int x = q[qi];
        for (auto [a, b] : g.edges()) {
          int y = -1;
          if (a == x) y = b;
          if (b == x) y = a;
          if (y >= 0 && d[y] < 0) {
            d[y] = d[x] + 1;
            q.push_back(y);
          }
        }
      }
      return d[t];
    };
    for (int v : {0, 7}) {
      for (int hops = 1; hops <= 3; ++hops) {
        std::set<int> expect;
        for (int t = 0; t < g.num_nodes(); ++t)
          if (dist(v, t) == hops) expect.insert(t);
        auto got = exact_hop_set(g, v, hops);
        CHECK(std::set<int>(got.begin(), got.end()) == expect);
      }
    }
    // Non-junction clique node: nodes at distance exactly 2 = far junction.
    auto far = exact_hop_set(g, 0, 2);
    CHECK(far == std::vector<int>{5});
  }

  TEST_CASE("hop sets partition reachable nodes") {
    Graph g = test::tiny_graph(14, 0.25, 21);
    for (int v = 0; v < g.num_nodes(); ++v) {
      std::set<int> seen;
      int total = 0;
      for (int hops = 1; hops <= g.num_nodes(); ++hops) {
        for (int x : exact_hop_set(g, v, hops)) {
          CHECK(seen.insert(x).second);  // disjoint levels
          ++total;
        }
      }
      (void)total;
      CHECK(seen.count(v) == 0);
    }
  }

  TEST_CASE("apply_edit delete/insert and their inverse") {
    Graph g = test::tiny_graph(8, 0.5, 5);
    auto [u, v] = g.edges().front();
    Graph del = apply_edit(g, CandidateEdit(u, v, EditKind::Delete));
    CHECK(del.num_edges() == g.num_edges() - 1);
    CHECK_FALSE(del.has_edge(u, v));
    Graph back = apply_edit(del, CandidateEdit(u, v, EditKind::Insert));
    CHECK(back.edges() == g.edges());
    CHECK_THROWS_AS(apply_edit(g, CandidateEdit(u, v, EditKind::Insert)), Error);
    CHECK_THROWS_AS(apply_edit(del, CandidateEdit(u, v, EditKind::Delete)), Error);
  }

  TEST_CASE("insert completes a triangle") {
    Graph::Data d;
    d.num_nodes = 3;
    d.num_classes = 1;
    d.features.ensure_shape(3, 1);
    d.labels = {0, 0, 0};
    d.edges = {{0, 1}, {1, 2}};
    d.train = {0};
    Graph g(std::move(d));
    Graph full = apply_edit(g, CandidateEdit(0, 2, EditKind::Insert));
    CHECK(full.num_edges() == 3);
  }

  TEST_CASE("reweighted adjacency formula end points") {
    Graph g = test::tiny_graph(10, 0.4, 11);
    const double eps = -1.0 / static_cast<double>(g.train_nodes().size());
    auto [u, v] = g.edges().front();
    WeightedAdjacency del = reweighted_adjacency(g, CandidateEdit(u, v, EditKind::Delete), eps);
    CHECK(del.entry(u, v) == 0.0);
    CHECK(del.entry(v, u) == 0.0);

    int a = -1, b = -1;
    for (int i = 0; i < g.num_nodes() && a < 0; ++i)
      for (int j = i + 1; j < g.num_nodes() && a < 0; ++j)
        if (!g.has_edge(i, j)) {
          a = i;
          b = j;
        }
    REQUIRE(a >= 0);
    WeightedAdjacency ins = reweighted_adjacency(g, CandidateEdit(a, b, EditKind::Insert), eps);
    CHECK(ins.entry(a, b) == 1.0);

    WeightedAdjacency zero = reweighted_adjacency(g, CandidateEdit(u, v, EditKind::Delete), 0.0);
    CHECK(zero.entry(u, v) == 1.0);
    WeightedAdjacency zero2 = reweighted_adjacency(g, CandidateEdit(a, b, EditKind::Insert), 0.0);
    CHECK(zero2.entry(a, b) == 0.0);
  }

  TEST_CASE("reweighted delete matches the edited graph's adjacency") {
    Graph g = test::tiny_graph(10, 0.4, 13);
    const double eps = -1.0 / static_cast<double>(g.train_nodes().size());
    auto [u, v] = g.edges().front();
    CandidateEdit edit(u, v, EditKind::Delete);
    WeightedAdjacency rw = reweighted_adjacency(g, edit, eps);
    Graph edited = apply_edit(g, edit);
    WeightedAdjacency ea = graph_adjacency(edited);
    for (int i = 0; i < g.num_nodes(); ++i)
      for (int j = 0; j < g.num_nodes(); ++j) CHECK(rw.entry(i, j) == ea.entry(i, j));
  }

  TEST_CASE("edge classification by label equality") {
    Graph g = test::tiny_graph(8, 0.5, 19, 3);
    for (auto [u, v] : g.edges()) {
      EdgeClass c = classify_edge(g, u, v);
      CHECK((c == EdgeClass::Homophilic) == (g.labels()[u] == g.labels()[v]));
    }
    SbmSpec spec;
    spec.block_sizes = {6, 6};
    spec.p_in = 0.9;
    spec.p_out = 0.0;
    Graph h = generate_sbm(spec, 4);
    for (auto [u, v] : h.edges()) CHECK(classify_edge(h, u, v) == EdgeClass::Homophilic);
  }
}
