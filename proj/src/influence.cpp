#include "edgeinf/influence.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "edgeinf/error.hpp"
#include "edgeinf/log.hpp"
#include "edgeinf/rng.hpp"

namespace edgeinf {

int param_dim(const GcnConfig& config) {
  config.validate();
  int n = 0;
  for (int l = 0; l < config.layers; ++l)
    n += config.layer_in(l) * config.layer_out(l) + config.layer_out(l);
  return n;
}

std::vector<double> ggn_vector_product(LinearOperator& op, const std::vector<double>& v) {
  if (static_cast<int>(v.size()) != op.dim())
    throw Error(ErrorKind::Invalid, "operator/vector dimension mismatch");
  std::vector<double> out(v.size());
  op.apply(v, out);
  return out;
}

// ------------------------------ GgnOperator ---------------------------------

GgnOperator::GgnOperator(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                         double damping)
    : config_(config), damping_(damping), dim_(param_dim(config)) {
  if (damping <= 0.0) throw Error(ErrorKind::Invalid, "ggn damping must be positive");
  if (graph.train_nodes().empty()) throw Error(ErrorKind::Invalid, "ggn requires a nonempty train mask");
  WeightedAdjacency adj = graph_adjacency(graph);
  program_ = build_logits_program(config, adj.structure, graph.features());
  DiffProgram::Bindings bind = adjacency_binding(adj);
  bind_params(bind, config, theta_s);
  session_ = std::make_unique<DiffProgram::Session>(program_, std::move(bind));

  const Matrix& logits = session_->output_value();
  const double inv_n = 1.0 / static_cast<double>(graph.train_nodes().size());
  for (int v : graph.train_nodes()) {
    std::vector<double> row(logits.row(v), logits.row(v) + logits.cols);
    Matrix h = output_loss_hessian(row, graph.labels()[v]);
    scale_inplace(h, inv_n);
    row_hessians_.push_back({v, std::move(h)});
  }
  cot_.ensure_shape(logits.rows, logits.cols);
}

GgnOperator::GgnOperator(std::shared_ptr<const DiffProgram> logits_program, const GcnConfig& config,
                         DiffProgram::Bindings bindings,
                         std::vector<std::pair<int, Matrix>> row_hessians, double damping)
    : config_(config),
      program_(std::move(logits_program)),
      row_hessians_(std::move(row_hessians)),
      damping_(damping),
      dim_(param_dim(config)) {
  if (damping <= 0.0) throw Error(ErrorKind::Invalid, "ggn damping must be positive");
  session_ = std::make_unique<DiffProgram::Session>(program_, std::move(bindings));
  const Matrix& out = session_->output_value();
  cot_.ensure_shape(out.rows, out.cols);
}

void GgnOperator::apply(const std::vector<double>& x, std::vector<double>& out) {
  if (static_cast<int>(x.size()) != dim_) throw Error(ErrorKind::Invalid, "ggn vector layout mismatch");
  Matrix tangent = session_->tangent(param_tangents(config_, x));
  cot_.set_zero();
  for (const auto& [row, h] : row_hessians_) {
    const double* t = tangent.row(row);
    double* c = cot_.row(row);
    for (int i = 0; i < h.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < h.cols; ++j) s += h(i, j) * t[j];
      c[i] = s;
    }
  }
  out = flatten_slot_grads(config_, session_->backward(cot_));
  axpy(damping_, x, out);
}

// ----------------------------- HessianOperator ------------------------------

HessianOperator::HessianOperator(std::shared_ptr<const DiffProgram> scalar_program,
                                 const GcnConfig& config, DiffProgram::Bindings bindings,
                                 double damping)
    : config_(config), program_(std::move(scalar_program)), damping_(damping),
      dim_(param_dim(config)) {
  if (damping <= 0.0) throw Error(ErrorKind::Invalid, "hessian damping must be positive");
  session_ = std::make_unique<DiffProgram::Session>(program_, std::move(bindings));
}

void HessianOperator::apply(const std::vector<double>& x, std::vector<double>& out) {
  if (static_cast<int>(x.size()) != dim_)
    throw Error(ErrorKind::Invalid, "hessian vector layout mismatch");
  out = flatten_slot_grads(config_, session_->hvp(param_tangents(config_, x)));
  axpy(damping_, x, out);
}

// ------------------------------- solver -------------------------------------

void LissaConfig::validate() const {
  if (damping <= 0.0) throw Error(ErrorKind::Invalid, "lissa damping must be positive");
  if (max_iters < 1) throw Error(ErrorKind::Invalid, "lissa max_iters must be >= 1");
  if (scale && *scale <= 0.0) throw Error(ErrorKind::Invalid, "lissa scale must be positive");
}

double estimate_scale(LinearOperator& op, int iters, uint64_t seed) {
  if (iters < 1) throw Error(ErrorKind::Invalid, "scale estimation needs at least one iteration");
  Rng rng(seed);
  std::vector<double> x(op.dim()), y(op.dim());
  for (double& v : x) v = rng.normal();
  double nx = norm2(x);
  for (double& v : x) v /= nx;

  double rayleigh = 0.0;
  for (int k = 0; k < iters; ++k) {
    op.apply(x, y);
    rayleigh = dot(x, y);
    const double ny = norm2(y);
    if (ny <= 1e-300) break;  // (numerically) zero operator
    for (size_t i = 0; i < x.size(); ++i) x[i] = y[i] / ny;
  }
  return 1.1 * std::max(rayleigh, 1e-300);
}

LissaResult lissa_solve(LinearOperator& op, const std::vector<double>& v,
                        const LissaConfig& config) {
  config.validate();
  if (static_cast<int>(v.size()) != op.dim())
    throw Error(ErrorKind::Invalid, "lissa right-hand side dimension mismatch");

  LissaResult res;
  res.scale = config.scale ? *config.scale
                           : estimate_scale(op, config.power_iters, config.power_seed);
  const double vnorm = norm2(v);
  if (vnorm == 0.0) {
    res.x.assign(v.size(), 0.0);
    res.converged = true;
    return res;
  }

  const double inv_s = 1.0 / res.scale;
  std::vector<double> r = v, g(v.size()), r_next(v.size());
  for (int k = 0; k < config.max_iters; ++k) {
    op.apply(r, g);
    double delta2 = 0.0;
    for (size_t i = 0; i < r.size(); ++i) {
      r_next[i] = v[i] + r[i] - inv_s * g[i];
      const double d = r_next[i] - r[i];
      delta2 += d * d;
    }
    const double rnorm = norm2(r);
    std::swap(r, r_next);
    res.iterations = k + 1;
    if (!all_finite(r))
      throw Error(ErrorKind::Numeric,
                  "lissa iterate became non-finite (bad scale or indefinite operator)");
    res.rel_update = std::sqrt(delta2) / std::max(rnorm, 1e-300);
    if (res.rel_update <= config.tolerance) {
      res.converged = true;
      break;
    }
  }

  res.x.resize(v.size());
  for (size_t i = 0; i < v.size(); ++i) res.x[i] = inv_s * r[i];

  op.apply(res.x, g);
  double resid2 = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    const double d = g[i] - v[i];
    resid2 += d * d;
  }
  res.rel_residual = std::sqrt(resid2) / vnorm;
  return res;
}

// ----------------------------- candidates -----------------------------------

CandidateKinds parse_candidate_kinds(const std::string& s) {
  if (s == "delete") return CandidateKinds::Delete;
  if (s == "insert") return CandidateKinds::Insert;
  if (s == "both") return CandidateKinds::Both;
  throw Error(ErrorKind::Invalid, "unknown candidate kinds: " + s + " (expected delete|insert|both)");
}

namespace {

std::vector<CandidateEdit> sample_pool(std::vector<std::pair<int, int>> pool, int k, EditKind kind,
                                       Rng& rng) {
  rng.shuffle(pool);
  const int take = std::min<int>(k, static_cast<int>(pool.size()));
  std::vector<CandidateEdit> out;
  out.reserve(take);
  for (int i = 0; i < take; ++i) out.push_back(CandidateEdit(pool[i].first, pool[i].second, kind));
  return out;
}

}  // namespace

std::vector<CandidateEdit> sample_candidates(const Graph& g, int k, CandidateKinds kinds,
                                             uint64_t seed) {
  if (k < 1) throw Error(ErrorKind::Invalid, "candidate sample size must be >= 1");
  Rng rng(seed);
  std::vector<CandidateEdit> out;
  if (kinds == CandidateKinds::Delete || kinds == CandidateKinds::Both) {
    auto deletes = sample_pool(g.edges(), k, EditKind::Delete, rng);
    out.insert(out.end(), deletes.begin(), deletes.end());
  }
  if (kinds == CandidateKinds::Insert || kinds == CandidateKinds::Both) {
    std::vector<std::pair<int, int>> absent;
    for (int u = 0; u < g.num_nodes(); ++u)
      for (int v = u + 1; v < g.num_nodes(); ++v)
        if (!g.has_edge(u, v)) absent.push_back({u, v});
    auto inserts = sample_pool(std::move(absent), k, EditKind::Insert, rng);
    out.insert(out.end(), inserts.begin(), inserts.end());
  }
  return out;
}

// ------------------------------ engine --------------------------------------

namespace {

std::string metric_key(const EvalMetric& m, const GcnConfig& config) {
  std::string key = m.name();
  if (m.kind == MetricKind::OverSquashing) {
    key += "/" + std::to_string(m.resolved_hops(config));
    if (m.mean_normalize) key += "/mean";
  }
  return key;
}

}  // namespace

InfluenceEngine::InfluenceEngine(const GcnConfig& config, const GcnParams& theta_s,
                                 const Graph& graph, const std::vector<CandidateEdit>& candidates,
                                 const LissaConfig& lissa)
    : config_(config), theta_s_(theta_s), graph_(graph), lissa_(lissa) {
  lissa_.validate();
  if (graph_.train_nodes().empty())
    throw Error(ErrorKind::Invalid, "influence estimation requires a nonempty train mask");

  std::vector<std::pair<int, int>> extra;
  for (const auto& e : candidates) {
    validate_edit(graph_, e);
    if (e.kind == EditKind::Insert) extra.push_back({e.u, e.v});
  }
  aug_ = augmented_adjacency(graph_, extra);

  train_sum_prog_ = build_masked_ce_program(config_, aug_.structure, graph_.features(),
                                            graph_.labels(), graph_.train_nodes(),
                                            DiffProgram::Reduction::Sum);
  base_bindings_ = adjacency_binding(aug_);
  bind_params(base_bindings_, config_, theta_s_);

  DiffProgram::Session session(train_sum_prog_, base_bindings_);
  g0_ = flatten_slot_grads(config_, session.backward(Matrix::scalar(1.0)));

  ggn_ = std::make_unique<GgnOperator>(config_, theta_s_, graph_, lissa_.damping);
}

InfluenceEngine::MetricContext& InfluenceEngine::context(const EvalMetric& metric) {
  const std::string key = metric_key(metric, config_);
  auto it = contexts_.find(key);
  if (it != contexts_.end()) return it->second;

  MetricContext ctx;
  ctx.metric = metric;
  auto prog = metric_program(metric, config_, graph_, aug_.structure);
  DiffProgram::Session session(prog, base_bindings_);
  ctx.base_value = session.output_value().as_scalar();
  auto grads = session.backward(Matrix::scalar(1.0));
  ctx.grad_theta = flatten_slot_grads(config_, grads);
  ctx.adj_grad = grads.at("adj").data;
  log::info("metric %s: base value %.6g, solving inverse curvature", key.c_str(), ctx.base_value);
  ctx.ours = lissa_solve(*ggn_, ctx.grad_theta, lissa_);
  log::info("metric %s: lissa iters=%d converged=%d residual=%.3g", key.c_str(),
            ctx.ours.iterations, ctx.ours.converged ? 1 : 0, ctx.ours.rel_residual);
  return contexts_.emplace(key, std::move(ctx)).first->second;
}

void InfluenceEngine::ensure_gif(MetricContext& ctx) {
  if (ctx.has_gif) return;
  if (!hessian_) {
    WeightedAdjacency adj = graph_adjacency(graph_);
    auto prog = build_masked_ce_program(config_, adj.structure, graph_.features(), graph_.labels(),
                                        graph_.train_nodes(), DiffProgram::Reduction::Mean);
    DiffProgram::Bindings bind = adjacency_binding(adj);
    bind_params(bind, config_, theta_s_);
    hessian_ = std::make_unique<HessianOperator>(prog, config_, std::move(bind), lissa_.damping);
  }
  ctx.gif = lissa_solve(*hessian_, ctx.grad_theta, lissa_);
  log::info("gif solve for %s: iters=%d converged=%d residual=%.3g", ctx.metric.name().c_str(),
            ctx.gif.iterations, ctx.gif.converged ? 1 : 0, ctx.gif.rel_residual);
  ctx.has_gif = true;
}

std::vector<double> InfluenceEngine::grad_difference(const CandidateEdit& edit) const {
  validate_edit(graph_, edit);
  const int e = aug_.structure->entry_index(edit.u, edit.v);
  if (e < 0) throw Error(ErrorKind::Invalid, "candidate entry not materialized");

  DiffProgram::Bindings bind = base_bindings_;
  // Edited graph at full edit weight: delete -> 0, insert -> 1.
  bind.at("adj").data[e] = edit.kind == EditKind::Delete ? 0.0 : 1.0;
  DiffProgram::Session session(train_sum_prog_, std::move(bind));
  std::vector<double> g_edit = flatten_slot_grads(config_, session.backward(Matrix::scalar(1.0)));
  std::vector<double> out(g0_.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = g0_[i] - g_edit[i];
  return out;
}

std::vector<std::vector<double>> InfluenceEngine::grad_differences(
    const std::vector<CandidateEdit>& edits) const {
  std::vector<std::vector<double>> out(edits.size());
  const int n = static_cast<int>(edits.size());
#pragma omp parallel for schedule(dynamic) if (kernels::mode() == kernels::Mode::Parallel)
  for (int i = 0; i < n; ++i) out[i] = grad_difference(edits[i]);
  return out;
}

double InfluenceEngine::breakdown_param_shift(const std::vector<double>& w,
                                              const std::vector<double>& gdiff) const {
  return dot(w, gdiff) / static_cast<double>(graph_.train_nodes().size());
}

double InfluenceEngine::signed_entry_grad(const MetricContext& ctx,
                                          const CandidateEdit& edit) const {
  const int e = aug_.structure->entry_index(edit.u, edit.v);
  if (e < 0) throw Error(ErrorKind::Invalid, "candidate entry not materialized");
  const double indicator = graph_.has_edge(edit.u, edit.v) ? 1.0 : 0.0;
  return -(2.0 * indicator - 1.0) * ctx.adj_grad[e];
}

double InfluenceEngine::message_propagation_term(const EvalMetric& metric,
                                                 const CandidateEdit& edit) {
  validate_edit(graph_, edit);
  return signed_entry_grad(context(metric), edit);
}

InfluenceBreakdown InfluenceEngine::influence(const EvalMetric& metric, const CandidateEdit& edit) {
  MetricContext& ctx = context(metric);
  InfluenceBreakdown b;
  b.edit = edit;
  b.metric = metric;
  b.param_shift = breakdown_param_shift(ctx.ours.x, grad_difference(edit));
  b.msg_prop = signed_entry_grad(ctx, edit);
  b.total = b.param_shift + b.msg_prop;
  return b;
}

double InfluenceEngine::gif_influence(const EvalMetric& metric, const CandidateEdit& edit) {
  MetricContext& ctx = context(metric);
  ensure_gif(ctx);
  return breakdown_param_shift(ctx.gif.x, grad_difference(edit));
}

std::vector<InfluenceBreakdown> InfluenceEngine::score_all(const EvalMetric& metric,
                                                           const std::vector<CandidateEdit>& edits) {
  MetricContext& ctx = context(metric);
  auto gdiffs = grad_differences(edits);
  std::vector<InfluenceBreakdown> out(edits.size());
  for (size_t i = 0; i < edits.size(); ++i) {
    InfluenceBreakdown b;
    b.edit = edits[i];
    b.metric = metric;
    b.param_shift = breakdown_param_shift(ctx.ours.x, gdiffs[i]);
    b.msg_prop = signed_entry_grad(ctx, edits[i]);
    b.total = b.param_shift + b.msg_prop;
    out[i] = b;
  }
  return out;
}

std::vector<double> InfluenceEngine::gif_score_all(const EvalMetric& metric,
                                                   const std::vector<CandidateEdit>& edits) {
  MetricContext& ctx = context(metric);
  ensure_gif(ctx);
  auto gdiffs = grad_differences(edits);
  std::vector<double> out(edits.size());
  for (size_t i = 0; i < edits.size(); ++i) out[i] = breakdown_param_shift(ctx.gif.x, gdiffs[i]);
  return out;
}

double InfluenceEngine::metric_base_value(const EvalMetric& metric) { return context(metric).base_value; }

const LissaResult& InfluenceEngine::ours_solve_info(const EvalMetric& metric) {
  return context(metric).ours;
}

const LissaResult& InfluenceEngine::gif_solve_info(const EvalMetric& metric) {
  MetricContext& ctx = context(metric);
  ensure_gif(ctx);
  return ctx.gif;
}

const std::vector<double>& InfluenceEngine::metric_gradient(const EvalMetric& metric) {
  return context(metric).grad_theta;
}

// --------------------------- single-edit forms ------------------------------

std::vector<double> grad_difference(const GcnConfig& config, const GcnParams& theta_s,
                                    const Graph& graph, const CandidateEdit& edit) {
  InfluenceEngine engine(config, theta_s, graph, {edit}, LissaConfig{});
  return engine.grad_difference(edit);
}

double message_propagation_term(const GcnConfig& config, const GcnParams& theta_s,
                                const Graph& graph, const EvalMetric& metric,
                                const CandidateEdit& edit) {
  InfluenceEngine engine(config, theta_s, graph, {edit}, LissaConfig{});
  return engine.message_propagation_term(metric, edit);
}

InfluenceBreakdown influence(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                             const EvalMetric& metric, const CandidateEdit& edit,
                             const std::vector<double>& w) {
  if (static_cast<int>(w.size()) != param_dim(config))
    throw Error(ErrorKind::Invalid, "influence: solve vector layout mismatch");
  InfluenceBreakdown b;
  b.edit = edit;
  b.metric = metric;
  const double n = static_cast<double>(graph.train_nodes().size());
  b.param_shift = dot(w, grad_difference(config, theta_s, graph, edit)) / n;
  b.msg_prop = message_propagation_term(config, theta_s, graph, metric, edit);
  b.total = b.param_shift + b.msg_prop;
  return b;
}

double gif_influence(const GcnConfig& config, const GcnParams& theta_s, const Graph& graph,
                     const EvalMetric& metric, const CandidateEdit& edit,
                     const LissaConfig& lissa) {
  InfluenceEngine engine(config, theta_s, graph, {edit}, lissa);
  return engine.gif_influence(metric, edit);
}

}  // namespace edgeinf
