#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "edgeinf/kernels.hpp"
#include "edgeinf/matrix.hpp"

namespace edgeinf {

enum class EditKind { Delete, Insert };

const char* edit_kind_name(EditKind k);
EditKind parse_edit_kind(const std::string& s);

// One undirected edge edit. Endpoints are kept in canonical (min,max) order.
struct CandidateEdit {
  int u = 0;
  int v = 0;
  EditKind kind = EditKind::Delete;

  CandidateEdit() = default;
  CandidateEdit(int a, int b, EditKind k);

  bool operator==(const CandidateEdit& o) const = default;
  bool operator<(const CandidateEdit& o) const {
    if (u != o.u) return u < o.u;
    if (v != o.v) return v < o.v;
    return static_cast<int>(kind) < static_cast<int>(o.kind);
  }
};

enum class EdgeClass { Homophilic, Heterophilic };
const char* edge_class_name(EdgeClass c);

// Immutable node-classification graph: features, labels, undirected edges and
// disjoint train/val/test node sets.
class Graph {
 public:
  struct Data {
    int num_nodes = 0;
    int num_classes = 0;
    Matrix features;              // num_nodes × d
    std::vector<int> labels;      // per node, in [0, num_classes)
    std::vector<std::pair<int, int>> edges;  // canonical (min,max), unique
    std::vector<int> train, val, test;       // sorted node index lists
  };

  // Validates all invariants (canonical unique edges, no self-loops, disjoint
  // masks, label range, feature shape) and throws ErrorKind::Schema on
  // violation.
  explicit Graph(Data data);

  int num_nodes() const { return d_.num_nodes; }
  int num_classes() const { return d_.num_classes; }
  int feature_dim() const { return d_.features.cols; }
  const Matrix& features() const { return d_.features; }
  const std::vector<int>& labels() const { return d_.labels; }
  const std::vector<std::pair<int, int>>& edges() const { return d_.edges; }
  int num_edges() const { return static_cast<int>(d_.edges.size()); }
  const std::vector<int>& train_nodes() const { return d_.train; }
  const std::vector<int>& val_nodes() const { return d_.val; }
  const std::vector<int>& test_nodes() const { return d_.test; }

  bool has_edge(int u, int v) const;

  static Graph load(const std::string& path);
  void save(const std::string& path) const;
  std::string to_json() const;

 private:
  Data d_;
};

// Symmetric weighted adjacency over an explicit entry set. Entries beyond the
// graph's edges (candidate insertions) may be materialized at weight zero so
// derivatives with respect to them are addressable.
struct WeightedAdjacency {
  std::shared_ptr<const AdjacencyStructure> structure;
  std::vector<double> weights;  // per structure entry

  int dimension() const { return structure->num_nodes; }
  double entry(int i, int j) const {
    int e = structure->entry_index(i, j);
    return e < 0 ? 0.0 : weights[e];
  }
};

// Generator specs. Both produce features = one-hot(label) + noise·N(0,1) and
// per-class deterministic train/val/test splits.
struct BarbellSpec {
  int clique_size = 5;
  int bridge_length = 1;
  double feature_noise = 0.1;
};

struct SbmSpec {
  std::vector<int> block_sizes;
  double p_in = 0.3;
  double p_out = 0.02;
  double feature_noise = 0.1;
};

Graph generate_barbell(const BarbellSpec& spec, uint64_t seed);
Graph generate_sbm(const SbmSpec& spec, uint64_t seed);

// Nodes at shortest-path distance exactly L from v (BFS levels). L >= 1.
std::vector<int> exact_hop_set(const Graph& g, int v, int hops);

// Throws ErrorKind::Invalid if the edit does not apply to this graph.
void validate_edit(const Graph& g, const CandidateEdit& edit);

// New graph with the edit realized; the input is unchanged.
Graph apply_edit(const Graph& g, const CandidateEdit& edit);

// Adjacency with the target entry reweighted to A_uv + (2·[edge exists]−1)·N·eps,
// N = |train|; the entry is materialized even at weight zero.
WeightedAdjacency reweighted_adjacency(const Graph& g, const CandidateEdit& edit, double eps);

// Unit-weight adjacency over the graph's edges.
WeightedAdjacency graph_adjacency(const Graph& g);

// Adjacency over the graph's edges plus extra materialized pairs (weight 0).
WeightedAdjacency augmented_adjacency(const Graph& g,
                                      const std::vector<std::pair<int, int>>& extra_pairs);

EdgeClass classify_edge(const Graph& g, int u, int v);

}  // namespace edgeinf
