#include "edgeinf/graph.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "edgeinf/error.hpp"
#include "edgeinf/rng.hpp"

namespace edgeinf {

using nlohmann::json;

const char* edit_kind_name(EditKind k) { return k == EditKind::Delete ? "delete" : "insert"; }

EditKind parse_edit_kind(const std::string& s) {
  if (s == "delete") return EditKind::Delete;
  if (s == "insert") return EditKind::Insert;
  throw Error(ErrorKind::Invalid, "unknown edit kind: " + s);
}

CandidateEdit::CandidateEdit(int a, int b, EditKind k) : u(std::min(a, b)), v(std::max(a, b)), kind(k) {
  if (a == b) throw Error(ErrorKind::Invalid, "edit endpoints must differ");
  if (a < 0 || b < 0) throw Error(ErrorKind::Invalid, "edit endpoints must be non-negative");
}

const char* edge_class_name(EdgeClass c) {
  return c == EdgeClass::Homophilic ? "homophilic" : "heterophilic";
}

Graph::Graph(Data data) : d_(std::move(data)) {
  const int n = d_.num_nodes;
  if (n <= 0) throw Error(ErrorKind::Schema, "graph must have at least one node");
  if (d_.num_classes <= 0) throw Error(ErrorKind::Schema, "graph must have at least one class");
  if (d_.features.rows != n)
    throw Error(ErrorKind::Schema, "feature matrix row count (" + std::to_string(d_.features.rows) +
                                       ") does not equal num_nodes (" + std::to_string(n) + ")");
  if (static_cast<int>(d_.labels.size()) != n)
    throw Error(ErrorKind::Schema, "label count does not equal num_nodes");
  for (int i = 0; i < n; ++i)
    if (d_.labels[i] < 0 || d_.labels[i] >= d_.num_classes)
      throw Error(ErrorKind::Schema,
                  "label out of range at node " + std::to_string(i) + ": " + std::to_string(d_.labels[i]));

  for (auto& [u, v] : d_.edges) {
    if (u == v) throw Error(ErrorKind::Schema, "self-loop edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw Error(ErrorKind::Schema, "edge endpoint out of range (" + std::to_string(u) + "," + std::to_string(v) + ")");
    if (u > v) std::swap(u, v);
  }
  std::sort(d_.edges.begin(), d_.edges.end());
  for (size_t i = 1; i < d_.edges.size(); ++i)
    if (d_.edges[i] == d_.edges[i - 1])
      throw Error(ErrorKind::Schema, "duplicate edge (" + std::to_string(d_.edges[i].first) + "," +
                                         std::to_string(d_.edges[i].second) + ")");

  auto check_mask = [n](std::vector<int>& m, const char* name) {
    std::sort(m.begin(), m.end());
    for (size_t i = 0; i < m.size(); ++i) {
      if (m[i] < 0 || m[i] >= n)
        throw Error(ErrorKind::Schema, std::string(name) + " mask index out of range");
      if (i > 0 && m[i] == m[i - 1])
        throw Error(ErrorKind::Schema, std::string(name) + " mask has duplicate index");
    }
  };
  check_mask(d_.train, "train");
  check_mask(d_.val, "val");
  check_mask(d_.test, "test");

  std::vector<int> owner(n, -1);
  auto claim = [&](const std::vector<int>& m, int tag, const char* name) {
    for (int v : m) {
      if (owner[v] != -1)
        throw Error(ErrorKind::Schema, std::string("node ") + std::to_string(v) + " appears in " + name +
                                           " mask and another mask");
      owner[v] = tag;
    }
  };
  claim(d_.train, 0, "train");
  claim(d_.val, 1, "val");
  claim(d_.test, 2, "test");
}

bool Graph::has_edge(int u, int v) const {
  if (u > v) std::swap(u, v);
  return std::binary_search(d_.edges.begin(), d_.edges.end(), std::make_pair(u, v));
}

namespace {

json require(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorKind::Schema, std::string("graph bundle missing key: ") + key);
  return j.at(key);
}

std::vector<int> int_list(const json& j, const char* key) {
  std::vector<int> out;
  for (const auto& x : require(j, key)) {
    if (!x.is_number_integer()) throw Error(ErrorKind::Schema, std::string(key) + " must be an integer array");
    out.push_back(x.get<int>());
  }
  return out;
}

}  // namespace

Graph Graph::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open graph bundle: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, "malformed JSON in " + path + ": " + e.what());
  }

  Data d;
  d.num_nodes = require(j, "num_nodes").get<int>();
  d.num_classes = require(j, "num_classes").get<int>();

  const auto& feats = require(j, "features");
  if (!feats.is_array() || feats.empty())
    throw Error(ErrorKind::Schema, "features must be a non-empty array of rows");
  const int dim = static_cast<int>(feats.at(0).size());
  d.features.ensure_shape(static_cast<int>(feats.size()), dim);
  for (int i = 0; i < d.features.rows; ++i) {
    const auto& row = feats.at(i);
    if (static_cast<int>(row.size()) != dim)
      throw Error(ErrorKind::Schema, "feature rows have inconsistent dimension");
    for (int k = 0; k < dim; ++k) d.features(i, k) = row.at(k).get<double>();
  }

  d.labels = int_list(j, "labels");
  for (const auto& e : require(j, "edges")) {
    if (!e.is_array() || e.size() != 2) throw Error(ErrorKind::Schema, "edges must be [u,v] pairs");
    d.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  }
  d.train = int_list(j, "train");
  d.val = int_list(j, "val");
  d.test = int_list(j, "test");
  return Graph(std::move(d));
}

std::string Graph::to_json() const {
  json j;
  j["num_nodes"] = d_.num_nodes;
  j["num_classes"] = d_.num_classes;
  json feats = json::array();
  for (int i = 0; i < d_.num_nodes; ++i) {
    json row = json::array();
    for (int k = 0; k < d_.features.cols; ++k) row.push_back(d_.features(i, k));
    feats.push_back(std::move(row));
  }
  j["features"] = std::move(feats);
  j["labels"] = d_.labels;
  json edges = json::array();
  for (auto [u, v] : d_.edges) edges.push_back(json::array({u, v}));
  j["edges"] = std::move(edges);
  j["train"] = d_.train;
  j["val"] = d_.val;
  j["test"] = d_.test;
  return j.dump(2);
}

void Graph::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write graph bundle: " + path);
  out << to_json() << "\n";
}

namespace {

// Per-class split into train/val/test with 30/30/40 ratios (at least one
// train and one val node per class when the class has >= 3 nodes).
void assign_masks(Graph::Data& d, Rng& rng) {
  std::vector<std::vector<int>> by_class(d.num_classes);
  for (int v = 0; v < d.num_nodes; ++v) by_class[d.labels[v]].push_back(v);
  for (auto& nodes : by_class) {
    rng.shuffle(nodes);
    const int c = static_cast<int>(nodes.size());
    if (c == 0) continue;
    int n_train = std::max(1, static_cast<int>(c * 0.3));
    int n_val = std::max(c >= 2 ? 1 : 0, static_cast<int>(c * 0.3));
    if (n_train + n_val > c) n_val = c - n_train;
    for (int i = 0; i < c; ++i) {
      if (i < n_train)
        d.train.push_back(nodes[i]);
      else if (i < n_train + n_val)
        d.val.push_back(nodes[i]);
      else
        d.test.push_back(nodes[i]);
    }
  }
}

void one_hot_noise_features(Graph::Data& d, double noise, Rng& rng) {
  d.features.ensure_shape(d.num_nodes, d.num_classes);
  for (int v = 0; v < d.num_nodes; ++v)
    for (int k = 0; k < d.num_classes; ++k)
      d.features(v, k) = (d.labels[v] == k ? 1.0 : 0.0) + noise * rng.normal();
}

}  // namespace

Graph generate_barbell(const BarbellSpec& spec, uint64_t seed) {
  const int k = spec.clique_size;
  const int b = spec.bridge_length;
  if (k < 3) throw Error(ErrorKind::Invalid, "barbell clique size must be >= 3");
  if (b < 1) throw Error(ErrorKind::Invalid, "barbell bridge length must be >= 1");

  Graph::Data d;
  d.num_classes = 2;
  const int bridge_nodes = b - 1;
  d.num_nodes = 2 * k + bridge_nodes;
  d.labels.assign(d.num_nodes, 0);
  for (int v = k; v < 2 * k; ++v) d.labels[v] = 1;
  // Bridge interior nodes alternate between the two classes.
  for (int i = 0; i < bridge_nodes; ++i) d.labels[2 * k + i] = i % 2;

  for (int u = 0; u < k; ++u)
    for (int v = u + 1; v < k; ++v) d.edges.push_back({u, v});
  for (int u = k; u < 2 * k; ++u)
    for (int v = u + 1; v < 2 * k; ++v) d.edges.push_back({u, v});
  // Path of b edges from clique-A junction (k-1) to clique-B junction (k).
  int prev = k - 1;
  for (int i = 0; i < bridge_nodes; ++i) {
    d.edges.push_back({std::min(prev, 2 * k + i), std::max(prev, 2 * k + i)});
    prev = 2 * k + i;
  }
  d.edges.push_back({std::min(prev, k), std::max(prev, k)});

  Rng rng(seed);
  one_hot_noise_features(d, spec.feature_noise, rng);
  // Bridge interior nodes carry noise-only features.
  for (int i = 0; i < bridge_nodes; ++i) {
    const int v = 2 * k + i;
    for (int c = 0; c < d.num_classes; ++c)
      d.features(v, c) -= (d.labels[v] == c ? 1.0 : 0.0);
  }
  assign_masks(d, rng);
  return Graph(std::move(d));
}

Graph generate_sbm(const SbmSpec& spec, uint64_t seed) {
  if (spec.block_sizes.empty()) throw Error(ErrorKind::Invalid, "sbm needs at least one block");
  for (int s : spec.block_sizes)
    if (s <= 0) throw Error(ErrorKind::Invalid, "sbm blocks must be non-empty");
  if (spec.p_in < 0.0 || spec.p_in > 1.0 || spec.p_out < 0.0 || spec.p_out > 1.0)
    throw Error(ErrorKind::Invalid, "sbm probabilities must lie in [0,1]");

  Graph::Data d;
  d.num_classes = static_cast<int>(spec.block_sizes.size());
  d.num_nodes = 0;
  for (int b = 0; b < d.num_classes; ++b)
    for (int i = 0; i < spec.block_sizes[b]; ++i) {
      d.labels.push_back(b);
      ++d.num_nodes;
    }

  Rng rng(seed);
  for (int u = 0; u < d.num_nodes; ++u)
    for (int v = u + 1; v < d.num_nodes; ++v) {
      const double p = d.labels[u] == d.labels[v] ? spec.p_in : spec.p_out;
      if (rng.uniform() < p) d.edges.push_back({u, v});
    }

  one_hot_noise_features(d, spec.feature_noise, rng);
  assign_masks(d, rng);
  return Graph(std::move(d));
}

std::vector<int> exact_hop_set(const Graph& g, int v, int hops) {
  if (v < 0 || v >= g.num_nodes()) throw Error(ErrorKind::Invalid, "hop-set source node out of range");
  if (hops < 1) throw Error(ErrorKind::Invalid, "hop count must be >= 1");

  std::vector<std::vector<int>> adj(g.num_nodes());
  for (auto [a, b] : g.edges()) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> dist(g.num_nodes(), -1);
  std::queue<int> q;
  dist[v] = 0;
  q.push(v);
  while (!q.empty()) {
    int x = q.front();
    q.pop();
    if (dist[x] >= hops) continue;
    for (int y : adj[x])
      if (dist[y] < 0) {
        dist[y] = dist[x] + 1;
        q.push(y);
      }
  }
  std::vector<int> out;
  for (int x = 0; x < g.num_nodes(); ++x)
    if (dist[x] == hops) out.push_back(x);
  return out;
}

void validate_edit(const Graph& g, const CandidateEdit& edit) {
  if (edit.u < 0 || edit.v >= g.num_nodes() || edit.u == edit.v)
    throw Error(ErrorKind::Invalid, "edit endpoints out of range");
  const bool present = g.has_edge(edit.u, edit.v);
  if (edit.kind == EditKind::Delete && !present)
    throw Error(ErrorKind::Invalid, "delete edit targets absent edge (" + std::to_string(edit.u) + "," +
                                        std::to_string(edit.v) + ")");
  if (edit.kind == EditKind::Insert && present)
    throw Error(ErrorKind::Invalid, "insert edit targets existing edge (" + std::to_string(edit.u) + "," +
                                        std::to_string(edit.v) + ")");
}

Graph apply_edit(const Graph& g, const CandidateEdit& edit) {
  validate_edit(g, edit);
  Graph::Data d;
  d.num_nodes = g.num_nodes();
  d.num_classes = g.num_classes();
  d.features = g.features();
  d.labels = g.labels();
  d.train = g.train_nodes();
  d.val = g.val_nodes();
  d.test = g.test_nodes();
  d.edges = g.edges();
  const std::pair<int, int> target{edit.u, edit.v};
  if (edit.kind == EditKind::Delete) {
    d.edges.erase(std::remove(d.edges.begin(), d.edges.end(), target), d.edges.end());
  } else {
    d.edges.push_back(target);
  }
  return Graph(std::move(d));
}

WeightedAdjacency graph_adjacency(const Graph& g) {
  WeightedAdjacency w;
  w.structure = AdjacencyStructure::build(g.num_nodes(), g.edges());
  w.weights.assign(w.structure->entries.size(), 1.0);
  return w;
}

WeightedAdjacency augmented_adjacency(const Graph& g,
                                      const std::vector<std::pair<int, int>>& extra_pairs) {
  auto pairs = g.edges();
  std::set<std::pair<int, int>> seen(pairs.begin(), pairs.end());
  for (auto [a, b] : extra_pairs) {
    if (a == b) throw Error(ErrorKind::Invalid, "cannot materialize a self-loop entry");
    auto p = std::minmax(a, b);
    if (seen.insert({p.first, p.second}).second) pairs.push_back({p.first, p.second});
  }
  WeightedAdjacency w;
  w.structure = AdjacencyStructure::build(g.num_nodes(), std::move(pairs));
  w.weights.assign(w.structure->entries.size(), 0.0);
  for (auto [u, v] : g.edges()) w.weights[w.structure->entry_index(u, v)] = 1.0;
  return w;
}

WeightedAdjacency reweighted_adjacency(const Graph& g, const CandidateEdit& edit, double eps) {
  validate_edit(g, edit);
  const int n_train = static_cast<int>(g.train_nodes().size());
  if (n_train <= 0) throw Error(ErrorKind::Invalid, "reweighting requires a nonempty train mask");

  WeightedAdjacency w = augmented_adjacency(g, {{edit.u, edit.v}});
  const int e = w.structure->entry_index(edit.u, edit.v);
  const double base = g.has_edge(edit.u, edit.v) ? 1.0 : 0.0;
  w.weights[e] = base + (2.0 * base - 1.0) * static_cast<double>(n_train) * eps;
  return w;
}

EdgeClass classify_edge(const Graph& g, int u, int v) {
  if (u < 0 || v < 0 || u >= g.num_nodes() || v >= g.num_nodes())
    throw Error(ErrorKind::Invalid, "edge endpoints out of range");
  return g.labels()[u] == g.labels()[v] ? EdgeClass::Homophilic : EdgeClass::Heterophilic;
}

}  // namespace edgeinf
