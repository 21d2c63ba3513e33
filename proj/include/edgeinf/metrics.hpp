#pragma once

#include <memory>
#include <string>
#include <vector>

#include "edgeinf/gcn.hpp"
#include "edgeinf/graph.hpp"
#include "edgeinf/tape.hpp"

namespace edgeinf {

enum class MetricKind { ValidationLoss, DirichletEnergy, OverSquashing };

struct EvalMetric {
  MetricKind kind = MetricKind::ValidationLoss;
  int hops = 0;               // OverSquashing: 0 resolves to the model depth
  bool mean_normalize = false;  // OverSquashing: divide the sum by |V|

  static EvalMetric validation_loss() { return {MetricKind::ValidationLoss, 0, false}; }
  static EvalMetric dirichlet_energy() { return {MetricKind::DirichletEnergy, 0, false}; }
  static EvalMetric oversquashing(int hops = 0, bool mean = false) {
    return {MetricKind::OverSquashing, hops, mean};
  }

  int resolved_hops(const GcnConfig& config) const { return hops > 0 ? hops : config.layers; }
  std::string name() const;
  static EvalMetric parse(const std::string& name);
};

// Mean cross-entropy over the validation nodes.
double validation_loss(const GcnConfig& config, const GcnParams& params, const Graph& graph);

// (1/(2|E|))·Σ_{u,v} A_uv·‖h_u − h_v‖² over final-layer embeddings, i.e. the
// average squared embedding distance across adjacent node pairs.
double dirichlet_energy(const GcnConfig& config, const GcnParams& params, const Graph& graph);

// Σ_v ‖h_v − h'_v‖₂ where h' is the forward pass with the features of every
// node exactly `hops` away from v zeroed; structure is unchanged.
double oversquashing(const GcnConfig& config, const GcnParams& params, const Graph& graph,
                     int hops, bool mean_normalize = false);

double eval_metric(const EvalMetric& metric, const GcnConfig& config, const GcnParams& params,
                   const Graph& graph);

// Scalar program computing the metric at the graph's weights, with parameter
// slots and one adjacency slot covering the graph's edges plus
// `materialized_pairs` (candidate entries at weight zero). One backward pass
// yields ∇_θ f and ∂f/∂A for every entry at once.
std::shared_ptr<DiffProgram> metric_program(const EvalMetric& metric, const GcnConfig& config,
                                            const Graph& graph,
                                            std::shared_ptr<const AdjacencyStructure> structure);

}  // namespace edgeinf
