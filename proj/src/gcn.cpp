#include "edgeinf/gcn.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "edgeinf/error.hpp"
#include "edgeinf/rng.hpp"

namespace edgeinf {

using nlohmann::json;

void GcnConfig::validate() const {
  if (layers < 1) throw Error(ErrorKind::Invalid, "model needs at least one layer");
  if (in_dim < 1 || hidden < 1 || classes < 1)
    throw Error(ErrorKind::Invalid, "model dimensions must be positive");
}

int GcnParams::num_parameters() const {
  int n = 0;
  for (const auto& w : weights) n += w.rows * w.cols;
  for (const auto& b : biases) n += b.cols;
  return n;
}

std::vector<double> GcnParams::flatten() const {
  std::vector<double> flat;
  for (size_t l = 0; l < weights.size(); ++l) {
    flat.insert(flat.end(), weights[l].data.begin(), weights[l].data.end());
    flat.insert(flat.end(), biases[l].data.begin(), biases[l].data.end());
  }
  return flat;
}

GcnParams GcnParams::unflatten(const GcnConfig& config, const std::vector<double>& flat) {
  config.validate();
  GcnParams p;
  size_t pos = 0;
  for (int l = 0; l < config.layers; ++l) {
    Matrix w(config.layer_in(l), config.layer_out(l));
    Matrix b(1, config.layer_out(l));
    if (pos + w.size() + b.size() > flat.size())
      throw Error(ErrorKind::Invalid, "flat parameter vector too short");
    std::copy(flat.begin() + pos, flat.begin() + pos + w.size(), w.data.begin());
    pos += w.size();
    std::copy(flat.begin() + pos, flat.begin() + pos + b.size(), b.data.begin());
    pos += b.size();
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  if (pos != flat.size()) throw Error(ErrorKind::Invalid, "flat parameter vector too long");
  return p;
}

GcnParams init_params(const GcnConfig& config) {
  config.validate();
  Rng rng(config.seed);
  GcnParams p;
  for (int l = 0; l < config.layers; ++l) {
    const int fin = config.layer_in(l);
    const int fout = config.layer_out(l);
    const double bound = std::sqrt(6.0 / static_cast<double>(fin + fout));
    Matrix w(fin, fout);
    for (double& x : w.data) x = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Matrix(1, fout));
  }
  return p;
}

std::string weight_slot(int layer) { return "W" + std::to_string(layer); }
std::string bias_slot(int layer) { return "b" + std::to_string(layer); }

void bind_params(DiffProgram::Bindings& b, const GcnConfig& config, const GcnParams& params) {
  for (int l = 0; l < config.layers; ++l) {
    b[weight_slot(l)] = params.weights[l];
    b[bias_slot(l)] = params.biases[l];
  }
}

DiffProgram::Bindings param_bindings(const GcnConfig& config, const GcnParams& params) {
  DiffProgram::Bindings b;
  bind_params(b, config, params);
  return b;
}

DiffProgram::Bindings adjacency_binding(const WeightedAdjacency& adj) {
  DiffProgram::Bindings b;
  b["adj"] = Matrix(adj.structure->num_entries(), 1, adj.weights);
  return b;
}

DiffProgram::Bindings param_tangents(const GcnConfig& config, const std::vector<double>& flat) {
  GcnParams p = GcnParams::unflatten(config, flat);
  return param_bindings(config, p);
}

std::vector<double> flatten_slot_grads(const GcnConfig& config, const DiffProgram::SlotGrads& grads) {
  GcnParams p;
  for (int l = 0; l < config.layers; ++l) {
    p.weights.push_back(grads.at(weight_slot(l)));
    p.biases.push_back(grads.at(bias_slot(l)));
  }
  return p.flatten();
}

int declare_adjacency_input(DiffProgram& p, int num_entries, const std::string& adj_name) {
  return p.input(adj_name, num_entries, 1);
}

GcnSlotIds declare_gcn_inputs(DiffProgram& p, const GcnConfig& config, int num_entries,
                              const std::string& adj_name) {
  config.validate();
  GcnSlotIds s;
  s.adj = declare_adjacency_input(p, num_entries, adj_name);
  for (int l = 0; l < config.layers; ++l) {
    s.weights.push_back(p.input(weight_slot(l), config.layer_in(l), config.layer_out(l)));
    s.biases.push_back(p.input(bias_slot(l), 1, config.layer_out(l)));
  }
  return s;
}

int build_gcn_forward(DiffProgram& p, const GcnConfig& config,
                      std::shared_ptr<const AdjacencyStructure> structure, const Matrix& features,
                      int adj_node, const GcnSlotIds& slots) {
  config.validate();
  if (features.cols != config.in_dim)
    throw Error(ErrorKind::Invalid, "feature dimension does not match model input dimension");
  if (features.rows != structure->num_nodes)
    throw Error(ErrorKind::Invalid, "feature rows do not match adjacency dimension");

  const int deg = p.degrees(adj_node, structure);
  const int inv = p.inv_sqrt(deg);
  int h = p.constant(features);
  for (int l = 0; l < config.layers; ++l) {
    const int scaled = p.row_scale(inv, h);
    const int agg = p.spmm_sym(adj_node, scaled, structure);
    const int norm = p.row_scale(inv, agg);
    const int lin = p.matmul(norm, slots.weights[l]);
    const int biased = p.add_bias(lin, slots.biases[l]);
    h = (l == config.layers - 1) ? biased : p.relu(biased);
  }
  return h;
}

std::shared_ptr<DiffProgram> build_logits_program(const GcnConfig& config,
                                                  std::shared_ptr<const AdjacencyStructure> s,
                                                  const Matrix& features) {
  auto p = std::make_shared<DiffProgram>();
  GcnSlotIds slots = declare_gcn_inputs(*p, config, s->num_entries());
  const int logits = build_gcn_forward(*p, config, std::move(s), features, slots.adj, slots);
  p->set_output(logits);
  return p;
}

std::shared_ptr<DiffProgram> build_masked_ce_program(const GcnConfig& config,
                                                     std::shared_ptr<const AdjacencyStructure> s,
                                                     const Matrix& features,
                                                     const std::vector<int>& labels,
                                                     const std::vector<int>& mask,
                                                     DiffProgram::Reduction reduction) {
  auto p = std::make_shared<DiffProgram>();
  GcnSlotIds slots = declare_gcn_inputs(*p, config, s->num_entries());
  const int logits = build_gcn_forward(*p, config, s, features, slots.adj, slots);
  const int ls = p->log_softmax(logits);
  DiffProgram::NllSpec spec;
  spec.mask = mask;
  spec.labels = labels;
  spec.reduction = reduction;
  p->set_output(p->masked_nll(ls, std::move(spec)));
  return p;
}

ForwardResult gcn_forward(const GcnConfig& config, const GcnParams& params,
                          const WeightedAdjacency& adj, const Matrix& features) {
  config.validate();
  ForwardResult r;
  r.embeddings.push_back(features);

  const auto& s = *adj.structure;
  std::vector<double> inv(s.num_nodes);
  for (int i = 0; i < s.num_nodes; ++i) {
    double d = 1.0;
    for (auto [other, e] : s.neighbors[i]) d += adj.weights[e];
    inv[i] = 1.0 / std::sqrt(d);
  }

  Matrix h = features, scaled, agg, norm, lin;
  for (int l = 0; l < config.layers; ++l) {
    kernels::row_scale(inv, h, scaled);
    kernels::spmm_sym(s, adj.weights, scaled, agg);
    kernels::row_scale(inv, agg, norm);
    kernels::matmul(norm, params.weights[l], lin);
    Matrix out(lin.rows, lin.cols);
    const Matrix& b = params.biases[l];
    for (int i = 0; i < lin.rows; ++i) {
      const double* xr = lin.row(i);
      double* yr = out.row(i);
      for (int j = 0; j < lin.cols; ++j) yr[j] = xr[j] + b.data[j];
    }
    if (l != config.layers - 1) {
      Matrix act;
      kernels::relu(out, act);
      h = act;
    } else {
      h = out;
    }
    r.embeddings.push_back(h);
  }
  r.logits = h;
  return r;
}

LossGrad loss_and_grad(const GcnConfig& config, const GcnParams& params, const Graph& graph,
                       const std::vector<int>& mask) {
  if (mask.empty()) throw Error(ErrorKind::Invalid, "loss over an empty mask");
  WeightedAdjacency adj = graph_adjacency(graph);
  auto p = build_masked_ce_program(config, adj.structure, graph.features(), graph.labels(), mask,
                                   DiffProgram::Reduction::Mean);
  DiffProgram::Bindings b = param_bindings(config, params);
  b["adj"] = Matrix(adj.structure->num_entries(), 1, adj.weights);
  DiffProgram::Session session(*p, std::move(b));
  LossGrad out;
  out.loss = session.output_value().as_scalar();
  auto grads = session.backward(Matrix::scalar(1.0));
  out.grad = flatten_slot_grads(config, grads);
  return out;
}

Matrix output_loss_hessian(const std::vector<double>& logits, [[maybe_unused]] int label) {
  const int c = static_cast<int>(logits.size());
  double mx = logits[0];
  for (double x : logits)
    if (!std::isfinite(x)) throw Error(ErrorKind::Invalid, "logits must be finite");
  for (int j = 1; j < c; ++j) mx = std::max(mx, logits[j]);
  double z = 0.0;
  std::vector<double> p(c);
  for (int j = 0; j < c; ++j) {
    p[j] = std::exp(logits[j] - mx);
    z += p[j];
  }
  for (int j = 0; j < c; ++j) p[j] /= z;
  Matrix h(c, c);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) h(i, j) = (i == j ? p[i] : 0.0) - p[i] * p[j];
  return h;
}

double accuracy(const Matrix& logits, const std::vector<int>& labels, const std::vector<int>& mask) {
  if (mask.empty()) return 0.0;
  int correct = 0;
  for (int v : mask) {
    const double* r = logits.row(v);
    int arg = 0;
    for (int j = 1; j < logits.cols; ++j)
      if (r[j] > r[arg]) arg = j;
    if (arg == labels[v]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, "malformed checkpoint JSON in " + path + ": " + e.what());
  }
  try {
    Checkpoint ck;
    const auto& c = j.at("config");
    ck.config.layers = c.at("layers").get<int>();
    ck.config.in_dim = c.at("in_dim").get<int>();
    ck.config.hidden = c.at("hidden").get<int>();
    ck.config.classes = c.at("classes").get<int>();
    ck.config.seed = c.at("seed").get<uint64_t>();
    ck.params = GcnParams::unflatten(ck.config, j.at("params").get<std::vector<double>>());
    const auto& m = j.at("meta");
    ck.meta.epochs = m.at("epochs").get<int>();
    ck.meta.lr = m.at("lr").get<double>();
    ck.meta.weight_decay = m.at("weight_decay").get<double>();
    ck.meta.seed = m.at("seed").get<uint64_t>();
    ck.meta.final_train_loss = m.at("final_train_loss").get<double>();
    ck.meta.final_train_acc = m.at("final_train_acc").get<double>();
    ck.meta.final_val_loss = m.at("final_val_loss").get<double>();
    ck.meta.final_val_acc = m.at("final_val_acc").get<double>();
    return ck;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, "checkpoint schema violation in " + path + ": " + e.what());
  }
}

void Checkpoint::save(const std::string& path) const {
  json j;
  j["config"] = {{"layers", config.layers}, {"in_dim", config.in_dim},   {"hidden", config.hidden},
                 {"classes", config.classes}, {"seed", config.seed}};
  j["params"] = params.flatten();
  j["meta"] = {{"epochs", meta.epochs},
               {"lr", meta.lr},
               {"weight_decay", meta.weight_decay},
               {"seed", meta.seed},
               {"final_train_loss", meta.final_train_loss},
               {"final_train_acc", meta.final_train_acc},
               {"final_val_loss", meta.final_val_loss},
               {"final_val_acc", meta.final_val_acc}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace edgeinf
