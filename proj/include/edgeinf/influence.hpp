#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "edgeinf/gcn.hpp"
#include "edgeinf/graph.hpp"
#include "edgeinf/metrics.hpp"
#include "edgeinf/tape.hpp"

namespace edgeinf {

// Abstract symmetric linear operator on flat parameter vectors; the seam that
// lets tests inject dense/diagonal operators into the solver and the scale
// estimator.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual int dim() const = 0;
  // out = A·x. Implementations may use internal workspaces; one operator
  // instance must not be applied concurrently.
  virtual void apply(const std::vector<double>& x, std::vector<double>& out) = 0;
};

std::vector<double> ggn_vector_product(LinearOperator& op, const std::vector<double>& v);

// Damped generalized Gauss-Newton operator v ↦ (1/N)·Σ_train JᵥᵀHᵥJᵥ·v + λv
// realized as one forward-mode pass through the logits program, a per-node
// output-space Hessian application, and one reverse-mode pass.
class GgnOperator final : public LinearOperator {
 public:
  // Curvature of the mean training cross-entropy of a GCN at theta_s.
  GgnOperator(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
              double damping);
  // Generic form: explicit (row, Hessian) pairs over any logits program; the
  // Hessians must already carry the 1/N factor.
  GgnOperator(std::shared_ptr<const DiffProgram> logits_program, const GcnConfig& config,
              DiffProgram::Bindings bindings, std::vector<std::pair<int, Matrix>> row_hessians,
              double damping);

  int dim() const override { return dim_; }
  void apply(const std::vector<double>& x, std::vector<double>& out) override;
  double damping() const { return damping_; }

 private:
  GcnConfig config_;
  std::shared_ptr<const DiffProgram> program_;
  std::unique_ptr<DiffProgram::Session> session_;
  std::vector<std::pair<int, Matrix>> row_hessians_;
  double damping_;
  int dim_;
  Matrix cot_;
};

// Damped exact Hessian of a scalar program (forward-over-reverse products);
// backs the prior graph influence function baseline.
class HessianOperator final : public LinearOperator {
 public:
  HessianOperator(std::shared_ptr<const DiffProgram> scalar_program, const GcnConfig& config,
                  DiffProgram::Bindings bindings, double damping);

  int dim() const override { return dim_; }
  void apply(const std::vector<double>& x, std::vector<double>& out) override;

 private:
  GcnConfig config_;
  std::shared_ptr<const DiffProgram> program_;
  std::unique_ptr<DiffProgram::Session> session_;
  double damping_;
  int dim_;
};

struct LissaConfig {
  double damping = 0.01;
  std::optional<double> scale;  // empty = estimate from power iteration
  int max_iters = 10000;
  double tolerance = 1e-8;  // on the relative update norm
  int power_iters = 100;
  uint64_t power_seed = 20240501;

  void validate() const;
};

struct LissaResult {
  std::vector<double> x;
  int iterations = 0;
  bool converged = false;
  double rel_update = 0.0;
  double rel_residual = 0.0;  // ‖A·x − v‖/‖v‖, one extra operator application
  double scale = 0.0;
};

// Power iteration from a seeded random vector; returns 1.1× the final
// Rayleigh quotient as a safe upper bound for the Neumann rescaling.
double estimate_scale(LinearOperator& op, int iters, uint64_t seed);

// Neumann-series solve of A·x = v via r ← v + (I − A/s)·r, x = r/s. Stops on
// relative update ≤ tolerance or max_iters; throws on non-finite iterates.
LissaResult lissa_solve(LinearOperator& op, const std::vector<double>& v, const LissaConfig& config);

struct InfluenceBreakdown {
  CandidateEdit edit;
  EvalMetric metric;
  double param_shift = 0.0;
  double msg_prop = 0.0;
  double total = 0.0;  // always param_shift + msg_prop, same floating addition
};

enum class CandidateKinds { Delete, Insert, Both };
CandidateKinds parse_candidate_kinds(const std::string& s);

// Uniform sample without replacement of valid edits: existing edges for
// Delete, absent non-self-loop pairs for Insert, k of each for Both. Returns
// everything when fewer than k exist. Deterministic under seed.
std::vector<CandidateEdit> sample_candidates(const Graph& g, int k, CandidateKinds kinds,
                                             uint64_t seed);

// Batch influence estimation for a fixed (theta_s, graph, candidate set).
// One inverse-curvature solve per metric is shared by every edit; one metric
// backward pass provides the adjacency gradient for every candidate entry.
class InfluenceEngine {
 public:
  InfluenceEngine(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                  const std::vector<CandidateEdit>& candidates, const LissaConfig& lissa);

  // Σ_train (∇_θ ce(h_v at base graph) − ∇_θ ce(h_v at edited graph)), flat.
  std::vector<double> grad_difference(const CandidateEdit& edit) const;

  double message_propagation_term(const EvalMetric& metric, const CandidateEdit& edit);
  InfluenceBreakdown influence(const EvalMetric& metric, const CandidateEdit& edit);
  double gif_influence(const EvalMetric& metric, const CandidateEdit& edit);

  std::vector<InfluenceBreakdown> score_all(const EvalMetric& metric,
                                            const std::vector<CandidateEdit>& edits);
  std::vector<double> gif_score_all(const EvalMetric& metric,
                                    const std::vector<CandidateEdit>& edits);

  double metric_base_value(const EvalMetric& metric);
  const LissaResult& ours_solve_info(const EvalMetric& metric);
  const LissaResult& gif_solve_info(const EvalMetric& metric);
  const std::vector<double>& metric_gradient(const EvalMetric& metric);

  int num_train() const { return static_cast<int>(graph_.train_nodes().size()); }
  const LissaConfig& lissa_config() const { return lissa_; }

 private:
  struct MetricContext {
    EvalMetric metric;
    double base_value = 0.0;
    std::vector<double> grad_theta;
    std::vector<double> adj_grad;  // per augmented-structure entry
    LissaResult ours;
    bool has_gif = false;
    LissaResult gif;
  };

  MetricContext& context(const EvalMetric& metric);
  void ensure_gif(MetricContext& ctx);
  std::vector<std::vector<double>> grad_differences(const std::vector<CandidateEdit>& edits) const;
  double breakdown_param_shift(const std::vector<double>& w, const std::vector<double>& gdiff) const;
  double signed_entry_grad(const MetricContext& ctx, const CandidateEdit& edit) const;

  GcnConfig config_;
  GcnParams theta_s_;
  Graph graph_;
  LissaConfig lissa_;
  WeightedAdjacency aug_;  // graph edges + materialized insert candidates
  std::shared_ptr<const DiffProgram> train_sum_prog_;
  DiffProgram::Bindings base_bindings_;
  std::vector<double> g0_;  // summed training-loss gradient at the base graph
  std::unique_ptr<GgnOperator> ggn_;
  std::unique_ptr<HessianOperator> hessian_;
  std::map<std::string, MetricContext> contexts_;
};

// Single-edit forms of the batch operations above.
std::vector<double> grad_difference(const GcnConfig& config, const GcnParams& theta_s,
                                    const Graph& graph, const CandidateEdit& edit);
double message_propagation_term(const GcnConfig& config, const GcnParams& theta_s,
                                const Graph& graph, const EvalMetric& metric,
                                const CandidateEdit& edit);
InfluenceBreakdown influence(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                             const EvalMetric& metric, const CandidateEdit& edit,
                             const std::vector<double>& w);
double gif_influence(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                     const EvalMetric& metric, const CandidateEdit& edit, const LissaConfig& lissa);

int param_dim(const GcnConfig& config);

}  // namespace edgeinf
