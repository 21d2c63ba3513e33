#pragma once

#include <memory>
#include <string>
#include <vector>

#include "edgeinf/graph.hpp"
#include "edgeinf/matrix.hpp"
#include "edgeinf/tape.hpp"

namespace edgeinf {

struct GcnConfig {
  int layers = 4;
  int in_dim = 0;
  int hidden = 32;
  int classes = 0;
  uint64_t seed = 0;

  void validate() const;
  // Width of layer input ℓ (ℓ=0 is in_dim) and output ℓ.
  int layer_in(int l) const { return l == 0 ? in_dim : hidden; }
  int layer_out(int l) const { return l == layers - 1 ? classes : hidden; }
};

// Per-layer weights (in×out) and biases (1×out). flatten/unflatten round-trip
// exactly; the flat layout is layer-major, weights before bias.
struct GcnParams {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  int num_parameters() const;
  std::vector<double> flatten() const;
  static GcnParams unflatten(const GcnConfig& config, const std::vector<double>& flat);
};

// Glorot-uniform weights, zero biases; deterministic under config.seed.
GcnParams init_params(const GcnConfig& config);

// Slot naming shared by every program over this model: W0,b0,...; the
// adjacency entry vector binds to slot "adj" (num_entries × 1).
std::string weight_slot(int layer);
std::string bias_slot(int layer);
DiffProgram::Bindings param_bindings(const GcnConfig& config, const GcnParams& params);
void bind_params(DiffProgram::Bindings& b, const GcnConfig& config, const GcnParams& params);
DiffProgram::Bindings adjacency_binding(const WeightedAdjacency& adj);
// flat parameter vector -> per-slot tangent bindings
DiffProgram::Bindings param_tangents(const GcnConfig& config, const std::vector<double>& flat);
// per-slot gradients -> flat vector in layout order
std::vector<double> flatten_slot_grads(const GcnConfig& config, const DiffProgram::SlotGrads& grads);

struct ForwardResult {
  Matrix logits;
  std::vector<Matrix> embeddings;  // h^(0)=X, h^(1), ..., h^(L)=logits
};

// h^(l+1) = ReLU(Â·h^(l)·W_l + b_l), ReLU omitted on the last layer, with
// Â = D̃^{-1/2}(A_w + I)D̃^{-1/2} and D̃ from weighted degrees plus self-loop.
ForwardResult gcn_forward(const GcnConfig& config, const GcnParams& params,
                          const WeightedAdjacency& adj, const Matrix& features);

// Input-slot node ids for one GCN program. Parameters are shared across
// sub-forwards; each adjacency structure gets its own slot.
struct GcnSlotIds {
  int adj = -1;
  std::vector<int> weights, biases;
};

// Declares slot "adj_name" (num_entries × 1) plus the parameter slots W0,b0,…
GcnSlotIds declare_gcn_inputs(DiffProgram& p, const GcnConfig& config, int num_entries,
                              const std::string& adj_name = "adj");
int declare_adjacency_input(DiffProgram& p, int num_entries, const std::string& adj_name);

// Appends the normalization + L graph-convolution layers to `p`, reading the
// adjacency from `adj_node` and parameters from `slots`. `features` enters as
// a constant. Returns the logits node id.
int build_gcn_forward(DiffProgram& p, const GcnConfig& config,
                      std::shared_ptr<const AdjacencyStructure> structure, const Matrix& features,
                      int adj_node, const GcnSlotIds& slots);

// Program whose scalar output is the masked cross-entropy of the GCN logits.
std::shared_ptr<DiffProgram> build_masked_ce_program(const GcnConfig& config,
                                                     std::shared_ptr<const AdjacencyStructure> s,
                                                     const Matrix& features,
                                                     const std::vector<int>& labels,
                                                     const std::vector<int>& mask,
                                                     DiffProgram::Reduction reduction);

// Program whose output is the full logits matrix.
std::shared_ptr<DiffProgram> build_logits_program(const GcnConfig& config,
                                                  std::shared_ptr<const AdjacencyStructure> s,
                                                  const Matrix& features);

// Mean masked cross-entropy and its flat parameter gradient.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};
LossGrad loss_and_grad(const GcnConfig& config, const GcnParams& params, const Graph& graph,
                       const std::vector<int>& mask);

// Hessian of the cross-entropy loss with respect to one node's logits:
// diag(p) − p·pᵀ with p = softmax(logits). Symmetric PSD.
Matrix output_loss_hessian(const std::vector<double>& logits, int label);

double accuracy(const Matrix& logits, const std::vector<int>& labels, const std::vector<int>& mask);

// Model checkpoint: config + flattened parameters + training metadata.
struct TrainMeta {
  int epochs = 0;
  double lr = 0.0;
  double weight_decay = 0.0;
  uint64_t seed = 0;
  double final_train_loss = 0.0;
  double final_train_acc = 0.0;
  double final_val_loss = 0.0;
  double final_val_acc = 0.0;
};

struct Checkpoint {
  GcnConfig config;
  GcnParams params;
  TrainMeta meta;

  static Checkpoint load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace edgeinf
