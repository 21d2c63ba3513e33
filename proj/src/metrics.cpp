#include "edgeinf/metrics.hpp"

#include <cmath>

#include "edgeinf/error.hpp"

namespace edgeinf {

std::string EvalMetric::name() const {
  switch (kind) {
    case MetricKind::ValidationLoss: return "val-loss";
    case MetricKind::DirichletEnergy: return "dirichlet";
    case MetricKind::OverSquashing: return "oversquash";
  }
  return "?";
}

EvalMetric EvalMetric::parse(const std::string& name) {
  if (name == "val-loss") return validation_loss();
  if (name == "dirichlet") return dirichlet_energy();
  if (name == "oversquash") return oversquashing();
  throw Error(ErrorKind::Invalid, "unknown metric: " + name + " (expected val-loss|dirichlet|oversquash)");
}

double validation_loss(const GcnConfig& config, const GcnParams& params, const Graph& graph) {
  if (graph.val_nodes().empty()) throw Error(ErrorKind::Invalid, "validation loss requires a nonempty val mask");
  ForwardResult f = gcn_forward(config, params, graph_adjacency(graph), graph.features());
  Matrix ls;
  kernels::log_softmax(f.logits, ls);
  double s = 0.0;
  for (int v : graph.val_nodes()) s -= ls(v, graph.labels()[v]);
  return s / static_cast<double>(graph.val_nodes().size());
}

double dirichlet_energy(const GcnConfig& config, const GcnParams& params, const Graph& graph) {
  if (graph.num_edges() == 0) throw Error(ErrorKind::Invalid, "dirichlet energy requires at least one edge");
  WeightedAdjacency adj = graph_adjacency(graph);
  ForwardResult f = gcn_forward(config, params, adj, graph.features());
  const Matrix& h = f.logits;
  double s = 0.0;
  for (int e = 0; e < adj.structure->num_entries(); ++e) {
    auto [u, v] = adj.structure->entries[e];
    const double* hu = h.row(u);
    const double* hv = h.row(v);
    double d2 = 0.0;
    for (int j = 0; j < h.cols; ++j) {
      const double d = hu[j] - hv[j];
      d2 += d * d;
    }
    s += adj.weights[e] * d2;
  }
  return s / static_cast<double>(graph.num_edges());
}

double oversquashing(const GcnConfig& config, const GcnParams& params, const Graph& graph,
                     int hops, bool mean_normalize) {
  if (hops < 1) throw Error(ErrorKind::Invalid, "over-squashing hop count must be >= 1");
  WeightedAdjacency adj = graph_adjacency(graph);
  ForwardResult full = gcn_forward(config, params, adj, graph.features());

  const int n = graph.num_nodes();
  std::vector<double> contrib(n, 0.0);
#pragma omp parallel for schedule(dynamic) if (kernels::mode() == kernels::Mode::Parallel)
  for (int v = 0; v < n; ++v) {
    std::vector<int> masked = exact_hop_set(graph, v, hops);
    if (masked.empty()) continue;  // identical forwards, zero contribution
    Matrix feats = graph.features();
    for (int u : masked) {
      double* r = feats.row(u);
      for (int j = 0; j < feats.cols; ++j) r[j] = 0.0;
    }
    ForwardResult part = gcn_forward(config, params, adj, feats);
    const double* a = full.logits.row(v);
    const double* b = part.logits.row(v);
    double d2 = 0.0;
    for (int j = 0; j < full.logits.cols; ++j) {
      const double d = a[j] - b[j];
      d2 += d * d;
    }
    contrib[v] = std::sqrt(d2);
  }
  double s = 0.0;
  for (int v = 0; v < n; ++v) s += contrib[v];
  if (mean_normalize) s /= static_cast<double>(n);
  return s;
}

double eval_metric(const EvalMetric& metric, const GcnConfig& config, const GcnParams& params,
                   const Graph& graph) {
  switch (metric.kind) {
    case MetricKind::ValidationLoss: return validation_loss(config, params, graph);
    case MetricKind::DirichletEnergy: return dirichlet_energy(config, params, graph);
    case MetricKind::OverSquashing:
      return oversquashing(config, params, graph, metric.resolved_hops(config), metric.mean_normalize);
  }
  throw Error(ErrorKind::Invalid, "unknown metric kind");
}

std::shared_ptr<DiffProgram> metric_program(const EvalMetric& metric, const GcnConfig& config,
                                            const Graph& graph,
                                            std::shared_ptr<const AdjacencyStructure> structure) {
  auto p = std::make_shared<DiffProgram>();
  GcnSlotIds slots = declare_gcn_inputs(*p, config, structure->num_entries());
  const int logits = build_gcn_forward(*p, config, structure, graph.features(), slots.adj, slots);

  switch (metric.kind) {
    case MetricKind::ValidationLoss: {
      if (graph.val_nodes().empty())
        throw Error(ErrorKind::Invalid, "validation loss requires a nonempty val mask");
      const int ls = p->log_softmax(logits);
      DiffProgram::NllSpec spec;
      spec.mask = graph.val_nodes();
      spec.labels = graph.labels();
      spec.reduction = DiffProgram::Reduction::Mean;
      p->set_output(p->masked_nll(ls, std::move(spec)));
      break;
    }
    case MetricKind::DirichletEnergy: {
      if (graph.num_edges() == 0)
        throw Error(ErrorKind::Invalid, "dirichlet energy requires at least one edge");
      // Materialized zero-weight entries participate so candidate gradients
      // exist; the normalization stays pinned to the real edge count.
      p->set_output(p->dirichlet(slots.adj, logits, structure,
                                 1.0 / static_cast<double>(graph.num_edges())));
      break;
    }
    case MetricKind::OverSquashing: {
      const int hops = metric.resolved_hops(config);
      std::vector<int> terms;
      for (int v = 0; v < graph.num_nodes(); ++v) {
        std::vector<int> masked = exact_hop_set(graph, v, hops);
        if (masked.empty()) continue;  // term is identically zero
        Matrix feats = graph.features();
        for (int u : masked) {
          double* r = feats.row(u);
          for (int j = 0; j < feats.cols; ++j) r[j] = 0.0;
        }
        const int part = build_gcn_forward(*p, config, structure, feats, slots.adj, slots);
        terms.push_back(p->row_diff_norm(logits, part, v));
      }
      int out;
      if (terms.empty()) {
        out = p->constant(Matrix::scalar(0.0));
        // keep the output connected to the inputs for uniform slot handling
        out = p->add(out, p->scale(p->squared_norm(logits), 0.0));
      } else {
        out = p->sum_scalars(terms);
      }
      if (metric.mean_normalize) out = p->scale(out, 1.0 / static_cast<double>(graph.num_nodes()));
      p->set_output(out);
      break;
    }
  }
  return p;
}

}  // namespace edgeinf
