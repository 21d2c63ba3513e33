#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "edgeinf/kernels.hpp"
#include "edgeinf/matrix.hpp"

namespace edgeinf {

// A recorded computation over a fixed operator family: dense matmul,
// sparse-weighted propagation, ReLU, row log-softmax, masked cross-entropy
// reductions, elementwise subtraction, squared norms, scalar sums and the
// degree-based symmetric normalization chain. Differentiable input slots are
// parameter blocks and adjacency entry vectors; constants are baked in.
//
// Every slot has reverse-mode (vjp) and forward-mode (jvp) rules, and the
// scalar programs additionally support exact Hessian-vector products
// (forward-over-reverse). All reductions run in a fixed order, so repeated
// evaluations at identical inputs are bitwise identical.
class DiffProgram {
 public:
  enum class Reduction { Mean, Sum };

  struct NllSpec {
    std::vector<int> mask;    // node rows included in the reduction
    std::vector<int> labels;  // per-node class (indexed by absolute row)
    Reduction reduction = Reduction::Mean;
  };

  // --- builder -------------------------------------------------------------

  int input(const std::string& name, int rows, int cols);
  int constant(Matrix m);
  int matmul(int a, int b);
  int add_bias(int x, int bias);  // bias is a 1×c node broadcast over rows
  int relu(int x);
  int sub(int a, int b);
  int add(int a, int b);
  int scale(int x, double c);
  int squared_norm(int x);  // Frobenius, -> 1×1
  int sum_scalars(const std::vector<int>& xs);
  // d_i = 1 + sum of weights of entries incident to node i
  int degrees(int adj, std::shared_ptr<const AdjacencyStructure> s);
  int inv_sqrt(int x);
  int row_scale(int s, int x);  // s is n×1
  int spmm_sym(int adj, int x, std::shared_ptr<const AdjacencyStructure> s);
  int log_softmax(int x);
  int masked_nll(int log_probs, NllSpec spec);
  // scale · Σ_{v∈mask} coeff_row(v)·x_row(v), coeff constant
  int masked_inner(int x, Matrix coeff, std::vector<int> mask, double scale);
  // coef · Σ_{v∈mask} [ −log_softmax(x)_{v,y_v} − ref_row(v)·x_row(v) ].
  // Its logits gradient is coef·(softmax(x) − onehot(y) − ref) computed
  // elementwise, so it vanishes exactly when ref was produced from the same
  // logits.
  int bregman_ce(int logits, Matrix ref, NllSpec spec, double coef);
  // ‖x_row(r) − y_row(r)‖₂ -> 1×1
  int row_diff_norm(int x, int y, int r);
  // norm · Σ_e a_e·‖h_row(u_e) − h_row(v_e)‖²
  int dirichlet(int adj, int h, std::shared_ptr<const AdjacencyStructure> s, double norm);

  void set_output(int node);
  int output() const { return output_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  std::pair<int, int> shape(int node) const;
  const std::vector<std::string>& slot_names() const { return slot_names_; }
  std::pair<int, int> slot_shape(const std::string& name) const;

  // --- execution -----------------------------------------------------------

  using Bindings = std::map<std::string, Matrix>;
  using SlotGrads = std::map<std::string, Matrix>;

  Matrix evaluate(const Bindings& inputs) const;
  SlotGrads vjp(const Bindings& inputs, const Matrix& cotangent) const;
  Matrix jvp(const Bindings& inputs, const Bindings& tangents) const;
  // Hessian-vector product of a scalar program along `tangents`.
  SlotGrads hvp(const Bindings& inputs, const Bindings& tangents) const;

  class Session;

 private:
  friend class Session;

  enum class Op : uint8_t {
    Input, Const, MatMul, AddBias, Relu, Sub, Add, Scale, SquaredNorm, SumScalars,
    Degrees, InvSqrt, RowScale, SpmmSym, LogSoftmax, MaskedNll, MaskedInner,
    BregmanCe, RowDiffNorm, Dirichlet,
  };

  struct Node {
    Op op;
    std::vector<int> in;
    int rows = 0, cols = 0;
    double c = 0.0;  // Scale factor / Dirichlet norm / BregmanCe coef
    int row = -1;    // RowDiffNorm row
    std::shared_ptr<const AdjacencyStructure> adj;
    std::shared_ptr<const NllSpec> nll;
    std::shared_ptr<const Matrix> cmat;  // Const payload / MaskedInner coeff / BregmanCe ref
    int slot = -1;
  };

  int push(Node n);
  int node_checked(int id) const;

  std::vector<Node> nodes_;
  std::vector<std::string> slot_names_;  // slot index -> name
  std::vector<int> slot_nodes_;          // slot index -> node id
  int output_ = -1;
};

// Reusable execution state bound to (program, inputs). The forward values are
// computed once and reused by repeated backward/tangent passes, which is what
// iterative solvers need. Not safe for concurrent use; create one session per
// thread.
class DiffProgram::Session {
 public:
  Session(std::shared_ptr<const DiffProgram> program, Bindings inputs);
  Session(const DiffProgram& program, Bindings inputs);  // non-owning

  void rebind(Bindings inputs);  // replaces inputs and reruns the forward pass

  const Matrix& value(int node) const { return val_[node]; }
  const Matrix& output_value() const { return val_[program_->output_]; }

  SlotGrads backward(const Matrix& cotangent);
  Matrix tangent(const Bindings& tangents);
  SlotGrads hvp(const Bindings& tangents);

  const DiffProgram& program() const { return *program_; }

 private:
  void init();
  void run_forward();
  void run_tangent_pass(const Bindings& tangents);
  void backward_node(int id, bool with_dual);
  SlotGrads collect(const std::vector<Matrix>& store) const;

  std::shared_ptr<const DiffProgram> owned_;
  const DiffProgram* program_ = nullptr;
  Bindings inputs_;
  std::vector<Matrix> val_, dot_, bar_, bar_dot_;
  std::vector<Matrix> scratch_;  // per-node scratch for softmax etc.
};

// Central-difference gradient of a scalar program for one slot; test oracle.
Matrix finite_difference_gradient(const DiffProgram& p, const DiffProgram::Bindings& inputs,
                                  const std::string& slot, double step);

}  // namespace edgeinf
