#include "edgeinf/trainer.hpp"

#include <cmath>

#include "edgeinf/error.hpp"
#include "edgeinf/log.hpp"

namespace edgeinf {

void TrainConfig::validate() const {
  if (lr < 0.0) throw Error(ErrorKind::Invalid, "learning rate must be non-negative");
  if (epochs < 0) throw Error(ErrorKind::Invalid, "epoch count must be non-negative");
  if (weight_decay < 0.0) throw Error(ErrorKind::Invalid, "weight decay must be non-negative");
}

void PbrfConfig::validate() const {
  if (damping <= 0.0) throw Error(ErrorKind::Invalid, "pbrf damping must be positive");
  if (steps < 1) throw Error(ErrorKind::Invalid, "pbrf steps must be >= 1");
  if (lr <= 0.0) throw Error(ErrorKind::Invalid, "pbrf learning rate must be positive");
}

namespace {

TrainResult descend(const Graph& graph, const GcnConfig& model_config, GcnParams params,
                    const TrainConfig& config) {
  config.validate();
  if (graph.train_nodes().empty()) throw Error(ErrorKind::Invalid, "training requires a nonempty train mask");

  WeightedAdjacency adj = graph_adjacency(graph);
  auto train_prog = build_masked_ce_program(model_config, adj.structure, graph.features(),
                                            graph.labels(), graph.train_nodes(),
                                            DiffProgram::Reduction::Mean);
  auto logits_prog = build_logits_program(model_config, adj.structure, graph.features());

  DiffProgram::Bindings bind = adjacency_binding(adj);
  bind_params(bind, model_config, params);
  DiffProgram::Session session(train_prog, bind);
  DiffProgram::Session logits_session(logits_prog, bind);

  TrainResult result;
  std::vector<double> flat = params.flatten();
  const bool has_val = !graph.val_nodes().empty();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = session.output_value().as_scalar();
    if (!std::isfinite(loss))
      throw Error(ErrorKind::Numeric,
                  "training diverged: non-finite loss at epoch " + std::to_string(epoch));
    std::vector<double> grad = flatten_slot_grads(model_config, session.backward(Matrix::scalar(1.0)));
    // L2 weight decay enters the gradient directly.
    if (config.weight_decay != 0.0) axpy(config.weight_decay, flat, grad);
    for (size_t i = 0; i < flat.size(); ++i) flat[i] -= config.lr * grad[i];

    params = GcnParams::unflatten(model_config, flat);
    bind_params(bind, model_config, params);
    session.rebind(bind);

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss;
    if (has_val) {
      logits_session.rebind(bind);
      const Matrix& logits = logits_session.output_value();
      Matrix ls;
      kernels::log_softmax(logits, ls);
      double vl = 0.0;
      for (int v : graph.val_nodes()) vl -= ls(v, graph.labels()[v]);
      st.val_loss = vl / static_cast<double>(graph.val_nodes().size());
      st.val_acc = accuracy(logits, graph.labels(), graph.val_nodes());
    }
    result.history.push_back(st);
  }

  result.params = std::move(params);
  result.meta.epochs = config.epochs;
  result.meta.lr = config.lr;
  result.meta.weight_decay = config.weight_decay;
  result.meta.seed = config.seed;
  const double final_loss = session.output_value().as_scalar();
  result.meta.final_train_loss = final_loss;
  logits_session.rebind(bind);
  result.meta.final_train_acc =
      accuracy(logits_session.output_value(), graph.labels(), graph.train_nodes());
  if (has_val) {
    result.meta.final_val_loss = result.history.empty() ? 0.0 : result.history.back().val_loss;
    result.meta.final_val_acc = accuracy(logits_session.output_value(), graph.labels(), graph.val_nodes());
  }
  return result;
}

}  // namespace

TrainResult train(const Graph& graph, const GcnConfig& model_config, const TrainConfig& config) {
  GcnConfig mc = model_config;
  mc.in_dim = graph.feature_dim();
  mc.classes = graph.num_classes();
  return descend(graph, mc, init_params(mc), config);
}

TrainResult retrain_plain(const Graph& edited_graph, const GcnConfig& model_config,
                          const GcnParams& init, const TrainConfig& config) {
  GcnConfig mc = model_config;
  mc.in_dim = edited_graph.feature_dim();
  mc.classes = edited_graph.num_classes();
  return descend(edited_graph, mc, init, config);
}

PbrfResult pbrf_finetune(const Graph& graph, const GcnConfig& model_config, const GcnParams& theta_s,
                         const CandidateEdit& edit, const PbrfConfig& config) {
  config.validate();
  validate_edit(graph, edit);
  if (graph.train_nodes().empty())
    throw Error(ErrorKind::Invalid, "pbrf fine-tuning requires a nonempty train mask");

  const auto& train_nodes = graph.train_nodes();
  const double inv_n = 1.0 / static_cast<double>(train_nodes.size());

  WeightedAdjacency adj_orig = graph_adjacency(graph);
  WeightedAdjacency adj_edit = reweighted_adjacency(graph, edit, config.eps);

  // Reference logits, log-softmax gradient rows and the Bregman constant at θ_s.
  ForwardResult ref = gcn_forward(model_config, theta_s, adj_orig, graph.features());
  Matrix ls_ref, p_ref;
  kernels::log_softmax(ref.logits, ls_ref);
  kernels::softmax_from_log(ls_ref, p_ref);
  // Bregman constant: the program computes (1/N)·Σ(ce(h) − gᵀh); adding
  // (1/N)·Σ(−ce(h_s) + gᵀh_s) yields the divergence itself.
  Matrix g_ref(ref.logits.rows, ref.logits.cols);
  double const_term = 0.0;
  for (int v : train_nodes) {
    const int y = graph.labels()[v];
    double* gr = g_ref.row(v);
    const double* pr = p_ref.row(v);
    const double* hr = ref.logits.row(v);
    double inner = 0.0;
    for (int j = 0; j < g_ref.cols; ++j) {
      gr[j] = pr[j] - (j == y ? 1.0 : 0.0);
      inner += gr[j] * hr[j];
    }
    const_term += ls_ref(v, y) + inner;  // −ce(h_s) + g_refᵀh_s
  }
  const_term *= inv_n;

  // Program: Bregman term on the original graph plus ε·(Σce_orig − Σce_edit).
  auto prog = std::make_shared<DiffProgram>();
  GcnSlotIds slots = declare_gcn_inputs(*prog, model_config, adj_orig.structure->num_entries());
  const int adj_edit_slot =
      declare_adjacency_input(*prog, adj_edit.structure->num_entries(), "adj_edit");

  const int logits_orig =
      build_gcn_forward(*prog, model_config, adj_orig.structure, graph.features(), slots.adj, slots);
  DiffProgram::NllSpec spec;
  spec.mask = train_nodes;
  spec.labels = graph.labels();
  spec.reduction = DiffProgram::Reduction::Sum;
  const int bregman = prog->bregman_ce(logits_orig, g_ref, spec, inv_n);

  int objective = bregman;
  if (config.eps != 0.0) {
    const int logits_edit = build_gcn_forward(*prog, model_config, adj_edit.structure,
                                              graph.features(), adj_edit_slot, slots);
    const int ls_orig = prog->log_softmax(logits_orig);
    const int ls_edit = prog->log_softmax(logits_edit);
    const int ce_orig = prog->masked_nll(ls_orig, spec);
    const int ce_edit = prog->masked_nll(ls_edit, spec);
    const int diff = prog->sub(ce_orig, ce_edit);
    objective = prog->add(bregman, prog->scale(diff, config.eps));
  }
  prog->set_output(objective);

  DiffProgram::Bindings bind = adjacency_binding(adj_orig);
  bind["adj_edit"] = Matrix(adj_edit.structure->num_entries(), 1, adj_edit.weights);
  bind_params(bind, model_config, theta_s);
  DiffProgram::Session session(prog, bind);

  const std::vector<double> flat_s = theta_s.flatten();
  std::vector<double> flat = flat_s;

  PbrfResult result;
  auto objective_value = [&](const std::vector<double>& theta) {
    double prox = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
      const double d = theta[i] - flat_s[i];
      prox += d * d;
    }
    return session.output_value().as_scalar() + const_term + 0.5 * config.damping * prox;
  };

  result.objective_history.push_back(objective_value(flat));
  for (int step = 0; step < config.steps; ++step) {
    std::vector<double> grad = flatten_slot_grads(model_config, session.backward(Matrix::scalar(1.0)));
    for (size_t i = 0; i < flat.size(); ++i) grad[i] += config.damping * (flat[i] - flat_s[i]);
    const double gnorm = norm2(grad);
    if (!std::isfinite(gnorm)) throw Error(ErrorKind::Numeric, "pbrf fine-tuning produced a non-finite gradient");
    if (gnorm <= config.tolerance) {
      result.converged = true;
      break;
    }
    for (size_t i = 0; i < flat.size(); ++i) flat[i] -= config.lr * grad[i];
    GcnParams params = GcnParams::unflatten(model_config, flat);
    bind_params(bind, model_config, params);
    session.rebind(bind);
    ++result.steps_taken;
    const double obj = objective_value(flat);
    if (!std::isfinite(obj)) throw Error(ErrorKind::Numeric, "pbrf fine-tuning objective became non-finite");
    result.objective_history.push_back(obj);
  }

  result.params = GcnParams::unflatten(model_config, flat);
  return result;
}

}  // namespace edgeinf
