#include "edgeinf/tape.hpp"

#include <algorithm>
#include <cmath>

#include "edgeinf/error.hpp"

namespace edgeinf {

namespace {

// out_i += sum_j a(i,:)·b(i,:)
void rows_dot_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    const double* br = b.row(i);
    double s = 0.0;
    for (int j = 0; j < a.cols; ++j) s += ar[j] * br[j];
    out.data[i] += s;
  }
}

void add_scaled(Matrix& out, const Matrix& x, double c) {
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += c * x.data[i];
}

void col_sum_acc(const Matrix& x, Matrix& out) {
  for (int i = 0; i < x.rows; ++i) {
    const double* r = x.row(i);
    for (int j = 0; j < x.cols; ++j) out.data[j] += r[j];
  }
}

// out_row(u) += w·x_row(v) and out_row(v) += w·x_row(u)
void entry_outer_add(Matrix& out, const Matrix& x, int u, int v, double w) {
  double* ou = out.row(u);
  const double* xv = x.row(v);
  for (int j = 0; j < x.cols; ++j) ou[j] += w * xv[j];
  double* ov = out.row(v);
  const double* xu = x.row(u);
  for (int j = 0; j < x.cols; ++j) ov[j] += w * xu[j];
}

}  // namespace

// ----------------------------- builder --------------------------------------

int DiffProgram::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int DiffProgram::node_checked(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw Error(ErrorKind::Invalid, "program node id out of range");
  return id;
}

std::pair<int, int> DiffProgram::shape(int node) const {
  node_checked(node);
  return {nodes_[node].rows, nodes_[node].cols};
}

std::pair<int, int> DiffProgram::slot_shape(const std::string& name) const {
  for (size_t i = 0; i < slot_names_.size(); ++i)
    if (slot_names_[i] == name) {
      const Node& n = nodes_[slot_nodes_[i]];
      return {n.rows, n.cols};
    }
  throw Error(ErrorKind::Invalid, "unknown input slot: " + name);
}

int DiffProgram::input(const std::string& name, int rows, int cols) {
  for (const auto& s : slot_names_)
    if (s == name) throw Error(ErrorKind::Invalid, "duplicate input slot: " + name);
  Node n;
  n.op = Op::Input;
  n.rows = rows;
  n.cols = cols;
  n.slot = static_cast<int>(slot_names_.size());
  slot_names_.push_back(name);
  int id = push(std::move(n));
  slot_nodes_.push_back(id);
  return id;
}

int DiffProgram::constant(Matrix m) {
  Node n;
  n.op = Op::Const;
  n.rows = m.rows;
  n.cols = m.cols;
  n.cmat = std::make_shared<Matrix>(std::move(m));
  return push(std::move(n));
}

int DiffProgram::matmul(int a, int b) {
  node_checked(a);
  node_checked(b);
  if (nodes_[a].cols != nodes_[b].rows) throw Error(ErrorKind::Invalid, "matmul shape mismatch");
  Node n;
  n.op = Op::MatMul;
  n.in = {a, b};
  n.rows = nodes_[a].rows;
  n.cols = nodes_[b].cols;
  return push(std::move(n));
}

int DiffProgram::add_bias(int x, int bias) {
  node_checked(x);
  node_checked(bias);
  if (nodes_[bias].rows != 1 || nodes_[bias].cols != nodes_[x].cols)
    throw Error(ErrorKind::Invalid, "add_bias shape mismatch");
  Node n;
  n.op = Op::AddBias;
  n.in = {x, bias};
  n.rows = nodes_[x].rows;
  n.cols = nodes_[x].cols;
  return push(std::move(n));
}

int DiffProgram::relu(int x) {
  node_checked(x);
  Node n;
  n.op = Op::Relu;
  n.in = {x};
  n.rows = nodes_[x].rows;
  n.cols = nodes_[x].cols;
  return push(std::move(n));
}

int DiffProgram::sub(int a, int b) {
  node_checked(a);
  node_checked(b);
  if (nodes_[a].rows != nodes_[b].rows || nodes_[a].cols != nodes_[b].cols)
    throw Error(ErrorKind::Invalid, "sub shape mismatch");
  Node n;
  n.op = Op::Sub;
  n.in = {a, b};
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(std::move(n));
}

int DiffProgram::add(int a, int b) {
  node_checked(a);
  node_checked(b);
  if (nodes_[a].rows != nodes_[b].rows || nodes_[a].cols != nodes_[b].cols)
    throw Error(ErrorKind::Invalid, "add shape mismatch");
  Node n;
  n.op = Op::Add;
  n.in = {a, b};
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(std::move(n));
}

int DiffProgram::scale(int x, double c) {
  node_checked(x);
  Node n;
  n.op = Op::Scale;
  n.in = {x};
  n.c = c;
  n.rows = nodes_[x].rows;
  n.cols = nodes_[x].cols;
  return push(std::move(n));
}

int DiffProgram::squared_norm(int x) {
  node_checked(x);
  Node n;
  n.op = Op::SquaredNorm;
  n.in = {x};
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

int DiffProgram::sum_scalars(const std::vector<int>& xs) {
  Node n;
  n.op = Op::SumScalars;
  for (int x : xs) {
    node_checked(x);
    if (nodes_[x].rows != 1 || nodes_[x].cols != 1)
      throw Error(ErrorKind::Invalid, "sum_scalars inputs must be scalar");
  }
  n.in = xs;
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

int DiffProgram::degrees(int adj, std::shared_ptr<const AdjacencyStructure> s) {
  node_checked(adj);
  if (nodes_[adj].rows != s->num_entries() || nodes_[adj].cols != 1)
    throw Error(ErrorKind::Invalid, "degrees: adjacency slot shape mismatch");
  Node n;
  n.op = Op::Degrees;
  n.in = {adj};
  n.adj = std::move(s);
  n.rows = n.adj->num_nodes;
  n.cols = 1;
  return push(std::move(n));
}

int DiffProgram::inv_sqrt(int x) {
  node_checked(x);
  Node n;
  n.op = Op::InvSqrt;
  n.in = {x};
  n.rows = nodes_[x].rows;
  n.cols = nodes_[x].cols;
  return push(std::move(n));
}

int DiffProgram::row_scale(int s, int x) {
  node_checked(s);
  node_checked(x);
  if (nodes_[s].cols != 1 || nodes_[s].rows != nodes_[x].rows)
    throw Error(ErrorKind::Invalid, "row_scale shape mismatch");
  Node n;
  n.op = Op::RowScale;
  n.in = {s, x};
  n.rows = nodes_[x].rows;
  n.cols = nodes_[x].cols;
  return push(std::move(n));
}

int DiffProgram::spmm_sym(int adj, int x, std::shared_ptr<const AdjacencyStructure> s) {
  node_checked(adj);
  node_checked(x);
  if (nodes_[adj].rows != s->num_entries() || nodes_[adj].cols != 1)
    throw Error(ErrorKind::Invalid, "spmm_sym: adjacency slot shape mismatch");
  if (nodes_[x].rows != s->num_nodes) throw Error(ErrorKind::Invalid, "spmm_sym shape mismatch");
  Node n;
  n.op = Op::SpmmSym;
  n.in = {adj, x};
  n.adj = std::move(s);
  n.rows = nodes_[x].rows;
  n.cols = nodes_[x].cols;
  return push(std::move(n));
}

int DiffProgram::log_softmax(int x) {
  node_checked(x);
  Node n;
  n.op = Op::LogSoftmax;
  n.in = {x};
  n.rows = nodes_[x].rows;
  n.cols = nodes_[x].cols;
  return push(std::move(n));
}

int DiffProgram::masked_nll(int log_probs, NllSpec spec) {
  node_checked(log_probs);
  if (spec.mask.empty()) throw Error(ErrorKind::Invalid, "masked_nll: empty mask");
  for (int v : spec.mask) {
    if (v < 0 || v >= nodes_[log_probs].rows)
      throw Error(ErrorKind::Invalid, "masked_nll: mask row out of range");
    if (spec.labels[v] < 0 || spec.labels[v] >= nodes_[log_probs].cols)
      throw Error(ErrorKind::Invalid, "masked_nll: label out of range");
  }
  Node n;
  n.op = Op::MaskedNll;
  n.in = {log_probs};
  n.nll = std::make_shared<NllSpec>(std::move(spec));
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

int DiffProgram::masked_inner(int x, Matrix coeff, std::vector<int> mask, double scale) {
  node_checked(x);
  if (coeff.rows != nodes_[x].rows || coeff.cols != nodes_[x].cols)
    throw Error(ErrorKind::Invalid, "masked_inner coeff shape mismatch");
  Node n;
  n.op = Op::MaskedInner;
  n.in = {x};
  n.cmat = std::make_shared<Matrix>(std::move(coeff));
  auto spec = std::make_shared<NllSpec>();
  spec->mask = std::move(mask);
  n.nll = std::move(spec);
  n.c = scale;
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

int DiffProgram::bregman_ce(int logits, Matrix ref, NllSpec spec, double coef) {
  node_checked(logits);
  if (ref.rows != nodes_[logits].rows || ref.cols != nodes_[logits].cols)
    throw Error(ErrorKind::Invalid, "bregman_ce ref shape mismatch");
  Node n;
  n.op = Op::BregmanCe;
  n.in = {logits};
  n.cmat = std::make_shared<Matrix>(std::move(ref));
  n.nll = std::make_shared<NllSpec>(std::move(spec));
  n.c = coef;
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

int DiffProgram::row_diff_norm(int x, int y, int r) {
  node_checked(x);
  node_checked(y);
  if (nodes_[x].rows != nodes_[y].rows || nodes_[x].cols != nodes_[y].cols)
    throw Error(ErrorKind::Invalid, "row_diff_norm shape mismatch");
  if (r < 0 || r >= nodes_[x].rows) throw Error(ErrorKind::Invalid, "row_diff_norm row out of range");
  Node n;
  n.op = Op::RowDiffNorm;
  n.in = {x, y};
  n.row = r;
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

int DiffProgram::dirichlet(int adj, int h, std::shared_ptr<const AdjacencyStructure> s, double norm) {
  node_checked(adj);
  node_checked(h);
  if (nodes_[adj].rows != s->num_entries() || nodes_[adj].cols != 1)
    throw Error(ErrorKind::Invalid, "dirichlet: adjacency slot shape mismatch");
  if (nodes_[h].rows != s->num_nodes) throw Error(ErrorKind::Invalid, "dirichlet shape mismatch");
  Node n;
  n.op = Op::Dirichlet;
  n.in = {adj, h};
  n.adj = std::move(s);
  n.c = norm;
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

void DiffProgram::set_output(int node) { output_ = node_checked(node); }

// ----------------------------- session --------------------------------------

DiffProgram::Session::Session(std::shared_ptr<const DiffProgram> program, Bindings inputs)
    : owned_(std::move(program)), program_(owned_.get()), inputs_(std::move(inputs)) {
  init();
}

DiffProgram::Session::Session(const DiffProgram& program, Bindings inputs)
    : program_(&program), inputs_(std::move(inputs)) {
  init();
}

void DiffProgram::Session::init() {
  if (program_->output_ < 0) throw Error(ErrorKind::Invalid, "program has no output");
  const size_t n = program_->nodes_.size();
  val_.resize(n);
  scratch_.resize(n);
  run_forward();
}

void DiffProgram::Session::rebind(Bindings inputs) {
  inputs_ = std::move(inputs);
  run_forward();
}

void DiffProgram::Session::run_forward() {
  const auto& nodes = program_->nodes_;
  for (int id = 0; id < static_cast<int>(nodes.size()); ++id) {
    const Node& n = nodes[id];
    Matrix& out = val_[id];
    switch (n.op) {
      case Op::Input: {
        auto it = inputs_.find(program_->slot_names_[n.slot]);
        if (it == inputs_.end())
          throw Error(ErrorKind::Invalid, "unbound input slot: " + program_->slot_names_[n.slot]);
        if (it->second.rows != n.rows || it->second.cols != n.cols)
          throw Error(ErrorKind::Invalid, "input shape mismatch for slot: " + program_->slot_names_[n.slot]);
        out = it->second;
        break;
      }
      case Op::Const:
        out = *n.cmat;
        break;
      case Op::MatMul:
        kernels::matmul(val_[n.in[0]], val_[n.in[1]], out);
        break;
      case Op::AddBias: {
        const Matrix& x = val_[n.in[0]];
        const Matrix& b = val_[n.in[1]];
        out.ensure_shape(x.rows, x.cols);
        for (int i = 0; i < x.rows; ++i) {
          const double* xr = x.row(i);
          double* yr = out.row(i);
          for (int j = 0; j < x.cols; ++j) yr[j] = xr[j] + b.data[j];
        }
        break;
      }
      case Op::Relu:
        kernels::relu(val_[n.in[0]], out);
        break;
      case Op::Sub: {
        out = val_[n.in[0]];
        sub_inplace(out, val_[n.in[1]]);
        break;
      }
      case Op::Add: {
        out = val_[n.in[0]];
        add_inplace(out, val_[n.in[1]]);
        break;
      }
      case Op::Scale: {
        out = val_[n.in[0]];
        scale_inplace(out, n.c);
        break;
      }
      case Op::SquaredNorm: {
        const Matrix& x = val_[n.in[0]];
        double s = 0.0;
        for (double v : x.data) s += v * v;
        out.ensure_shape(1, 1);
        out.data[0] = s;
        break;
      }
      case Op::SumScalars: {
        double s = 0.0;
        for (int in : n.in) s += val_[in].data[0];
        out.ensure_shape(1, 1);
        out.data[0] = s;
        break;
      }
      case Op::Degrees: {
        const Matrix& a = val_[n.in[0]];
        out.ensure_shape(n.rows, 1);
        for (int i = 0; i < n.rows; ++i) {
          double d = 1.0;
          for (auto [other, e] : n.adj->neighbors[i]) d += a.data[e];
          out.data[i] = d;
        }
        break;
      }
      case Op::InvSqrt: {
        const Matrix& x = val_[n.in[0]];
        out.ensure_shape(x.rows, x.cols);
        for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = 1.0 / std::sqrt(x.data[i]);
        break;
      }
      case Op::RowScale:
        kernels::row_scale(val_[n.in[0]].data, val_[n.in[1]], out);
        break;
      case Op::SpmmSym:
        kernels::spmm_sym(*n.adj, val_[n.in[0]].data, val_[n.in[1]], out);
        break;
      case Op::LogSoftmax: {
        kernels::log_softmax(val_[n.in[0]], out);
        kernels::softmax_from_log(out, scratch_[id]);
        break;
      }
      case Op::MaskedNll: {
        const Matrix& lp = val_[n.in[0]];
        const auto& spec = *n.nll;
        double s = 0.0;
        for (int v : spec.mask) s -= lp(v, spec.labels[v]);
        if (spec.reduction == Reduction::Mean) s /= static_cast<double>(spec.mask.size());
        out.ensure_shape(1, 1);
        out.data[0] = s;
        break;
      }
      case Op::MaskedInner: {
        const Matrix& x = val_[n.in[0]];
        const Matrix& coeff = *n.cmat;
        double s = 0.0;
        for (int v : n.nll->mask) {
          const double* xr = x.row(v);
          const double* cr = coeff.row(v);
          for (int j = 0; j < x.cols; ++j) s += cr[j] * xr[j];
        }
        out.ensure_shape(1, 1);
        out.data[0] = n.c * s;
        break;
      }
      case Op::BregmanCe: {
        const Matrix& x = val_[n.in[0]];
        const Matrix& ref = *n.cmat;
        Matrix& p = scratch_[id];
        p.ensure_shape(x.rows, x.cols);
        p.set_zero();
        double s = 0.0;
        for (int v : n.nll->mask) {
          const double* xr = x.row(v);
          double mx = xr[0];
          for (int j = 1; j < x.cols; ++j) mx = std::max(mx, xr[j]);
          double z = 0.0;
          for (int j = 0; j < x.cols; ++j) z += std::exp(xr[j] - mx);
          const double lz = std::log(z) + mx;
          double* pr = p.row(v);
          for (int j = 0; j < x.cols; ++j) pr[j] = std::exp(xr[j] - lz);
          s -= xr[n.nll->labels[v]] - lz;
          const double* rr = ref.row(v);
          for (int j = 0; j < x.cols; ++j) s -= rr[j] * xr[j];
        }
        out.ensure_shape(1, 1);
        out.data[0] = n.c * s;
        break;
      }
      case Op::RowDiffNorm: {
        const Matrix& x = val_[n.in[0]];
        const Matrix& y = val_[n.in[1]];
        const double* xr = x.row(n.row);
        const double* yr = y.row(n.row);
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) {
          const double d = xr[j] - yr[j];
          s += d * d;
        }
        out.ensure_shape(1, 1);
        out.data[0] = std::sqrt(s);
        break;
      }
      case Op::Dirichlet: {
        const Matrix& a = val_[n.in[0]];
        const Matrix& h = val_[n.in[1]];
        double s = 0.0;
        for (int e = 0; e < n.adj->num_entries(); ++e) {
          auto [u, v] = n.adj->entries[e];
          const double* hu = h.row(u);
          const double* hv = h.row(v);
          double d2 = 0.0;
          for (int j = 0; j < h.cols; ++j) {
            const double d = hu[j] - hv[j];
            d2 += d * d;
          }
          s += a.data[e] * d2;
        }
        out.ensure_shape(1, 1);
        out.data[0] = n.c * s;
        break;
      }
    }
  }
}

void DiffProgram::Session::run_tangent_pass(const Bindings& tangents) {
  const auto& nodes = program_->nodes_;
  if (dot_.size() != nodes.size()) dot_.resize(nodes.size());
  for (int id = 0; id < static_cast<int>(nodes.size()); ++id) {
    const Node& n = nodes[id];
    Matrix& out = dot_[id];
    switch (n.op) {
      case Op::Input: {
        auto it = tangents.find(program_->slot_names_[n.slot]);
        if (it != tangents.end()) {
          if (it->second.rows != n.rows || it->second.cols != n.cols)
            throw Error(ErrorKind::Invalid,
                        "tangent shape mismatch for slot: " + program_->slot_names_[n.slot]);
          out = it->second;
        } else {
          out.ensure_shape(n.rows, n.cols);
          out.set_zero();
        }
        break;
      }
      case Op::Const:
        out.ensure_shape(n.rows, n.cols);
        out.set_zero();
        break;
      case Op::MatMul:
        kernels::matmul(dot_[n.in[0]], val_[n.in[1]], out);
        kernels::matmul(val_[n.in[0]], dot_[n.in[1]], out, /*accumulate=*/true);
        break;
      case Op::AddBias: {
        const Matrix& xd = dot_[n.in[0]];
        const Matrix& bd = dot_[n.in[1]];
        out.ensure_shape(xd.rows, xd.cols);
        for (int i = 0; i < xd.rows; ++i) {
          const double* xr = xd.row(i);
          double* yr = out.row(i);
          for (int j = 0; j < xd.cols; ++j) yr[j] = xr[j] + bd.data[j];
        }
        break;
      }
      case Op::Relu:
        out.ensure_shape(n.rows, n.cols);
        out.set_zero();
        kernels::relu_backward(val_[n.in[0]], dot_[n.in[0]], out);
        break;
      case Op::Sub:
        out = dot_[n.in[0]];
        sub_inplace(out, dot_[n.in[1]]);
        break;
      case Op::Add:
        out = dot_[n.in[0]];
        add_inplace(out, dot_[n.in[1]]);
        break;
      case Op::Scale:
        out = dot_[n.in[0]];
        scale_inplace(out, n.c);
        break;
      case Op::SquaredNorm: {
        const Matrix& x = val_[n.in[0]];
        const Matrix& xd = dot_[n.in[0]];
        double s = 0.0;
        for (size_t i = 0; i < x.data.size(); ++i) s += x.data[i] * xd.data[i];
        out.ensure_shape(1, 1);
        out.data[0] = 2.0 * s;
        break;
      }
      case Op::SumScalars: {
        double s = 0.0;
        for (int in : n.in) s += dot_[in].data[0];
        out.ensure_shape(1, 1);
        out.data[0] = s;
        break;
      }
      case Op::Degrees: {
        const Matrix& ad = dot_[n.in[0]];
        out.ensure_shape(n.rows, 1);
        for (int i = 0; i < n.rows; ++i) {
          double d = 0.0;
          for (auto [other, e] : n.adj->neighbors[i]) d += ad.data[e];
          out.data[i] = d;
        }
        break;
      }
      case Op::InvSqrt: {
        // ds = -1/2 · s³ · dd
        const Matrix& s = val_[id];
        const Matrix& dd = dot_[n.in[0]];
        out.ensure_shape(s.rows, s.cols);
        for (size_t i = 0; i < s.data.size(); ++i) {
          const double si = s.data[i];
          out.data[i] = -0.5 * si * si * si * dd.data[i];
        }
        break;
      }
      case Op::RowScale:
        kernels::row_scale(dot_[n.in[0]].data, val_[n.in[1]], out);
        kernels::row_scale(val_[n.in[0]].data, dot_[n.in[1]], out, /*accumulate=*/true);
        break;
      case Op::SpmmSym:
        kernels::spmm_sym(*n.adj, val_[n.in[0]].data, dot_[n.in[1]], out);
        {
          // add A(da)·x, without the identity term
          const Matrix& x = val_[n.in[1]];
          const Matrix& ad = dot_[n.in[0]];
          for (int e = 0; e < n.adj->num_entries(); ++e) {
            const double w = ad.data[e];
            if (w == 0.0) continue;
            auto [u, v] = n.adj->entries[e];
            entry_outer_add(out, x, u, v, w);
          }
        }
        break;
      case Op::LogSoftmax: {
        // d(ls) = dx − p·rowsum(p ⊙ dx) ... actually d lse = Σ p·dx
        const Matrix& xd = dot_[n.in[0]];
        const Matrix& p = scratch_[id];
        out.ensure_shape(n.rows, n.cols);
        for (int i = 0; i < n.rows; ++i) {
          const double* dr = xd.row(i);
          const double* pr = p.row(i);
          double m = 0.0;
          for (int j = 0; j < n.cols; ++j) m += pr[j] * dr[j];
          double* orow = out.row(i);
          for (int j = 0; j < n.cols; ++j) orow[j] = dr[j] - m;
        }
        break;
      }
      case Op::MaskedNll: {
        const Matrix& d = dot_[n.in[0]];
        const auto& spec = *n.nll;
        double s = 0.0;
        for (int v : spec.mask) s -= d(v, spec.labels[v]);
        if (spec.reduction == Reduction::Mean) s /= static_cast<double>(spec.mask.size());
        out.ensure_shape(1, 1);
        out.data[0] = s;
        break;
      }
      case Op::MaskedInner: {
        const Matrix& d = dot_[n.in[0]];
        const Matrix& coeff = *n.cmat;
        double s = 0.0;
        for (int v : n.nll->mask) {
          const double* dr = d.row(v);
          const double* cr = coeff.row(v);
          for (int j = 0; j < d.cols; ++j) s += cr[j] * dr[j];
        }
        out.ensure_shape(1, 1);
        out.data[0] = n.c * s;
        break;
      }
      case Op::BregmanCe: {
        const Matrix& xd = dot_[n.in[0]];
        const Matrix& ref = *n.cmat;
        const Matrix& p = scratch_[id];
        const auto& spec = *n.nll;
        double s = 0.0;
        for (int v : spec.mask) {
          const double* dr = xd.row(v);
          const double* pr = p.row(v);
          const double* rr = ref.row(v);
          const int y = spec.labels[v];
          for (int j = 0; j < xd.cols; ++j) {
            const double g = (pr[j] - (j == y ? 1.0 : 0.0)) - rr[j];
            s += g * dr[j];
          }
        }
        out.ensure_shape(1, 1);
        out.data[0] = n.c * s;
        break;
      }
      case Op::RowDiffNorm: {
        const Matrix& x = val_[n.in[0]];
        const Matrix& y = val_[n.in[1]];
        const Matrix& xd = dot_[n.in[0]];
        const Matrix& yd = dot_[n.in[1]];
        const double r = val_[id].data[0];
        double s = 0.0;
        if (r > 0.0) {
          const double* xr = x.row(n.row);
          const double* yr = y.row(n.row);
          const double* xdr = xd.row(n.row);
          const double* ydr = yd.row(n.row);
          for (int j = 0; j < x.cols; ++j) s += (xr[j] - yr[j]) * (xdr[j] - ydr[j]);
          s /= r;
        }
        out.ensure_shape(1, 1);
        out.data[0] = s;
        break;
      }
      case Op::Dirichlet: {
        const Matrix& a = val_[n.in[0]];
        const Matrix& h = val_[n.in[1]];
        const Matrix& ad = dot_[n.in[0]];
        const Matrix& hd = dot_[n.in[1]];
        double s = 0.0;
        for (int e = 0; e < n.adj->num_entries(); ++e) {
          auto [u, v] = n.adj->entries[e];
          const double* hu = h.row(u);
          const double* hv = h.row(v);
          const double* du = hd.row(u);
          const double* dv = hd.row(v);
          double d2 = 0.0, cross = 0.0;
          for (int j = 0; j < h.cols; ++j) {
            const double d = hu[j] - hv[j];
            d2 += d * d;
            cross += d * (du[j] - dv[j]);
          }
          s += ad.data[e] * d2 + a.data[e] * 2.0 * cross;
        }
        out.ensure_shape(1, 1);
        out.data[0] = n.c * s;
        break;
      }
    }
  }
}

void DiffProgram::Session::backward_node(int id, bool with_dual) {
  const Node& n = program_->nodes_[id];
  const Matrix& g = bar_[id];
  switch (n.op) {
    case Op::Input:
    case Op::Const:
      break;
    case Op::MatMul: {
      kernels::matmul_nt(g, val_[n.in[1]], bar_[n.in[0]], true);
      kernels::matmul_tn(val_[n.in[0]], g, bar_[n.in[1]], true);
      if (with_dual) {
        const Matrix& gd = bar_dot_[id];
        kernels::matmul_nt(gd, val_[n.in[1]], bar_dot_[n.in[0]], true);
        kernels::matmul_nt(g, dot_[n.in[1]], bar_dot_[n.in[0]], true);
        kernels::matmul_tn(dot_[n.in[0]], g, bar_dot_[n.in[1]], true);
        kernels::matmul_tn(val_[n.in[0]], gd, bar_dot_[n.in[1]], true);
      }
      break;
    }
    case Op::AddBias: {
      add_inplace(bar_[n.in[0]], g);
      col_sum_acc(g, bar_[n.in[1]]);
      if (with_dual) {
        add_inplace(bar_dot_[n.in[0]], bar_dot_[id]);
        col_sum_acc(bar_dot_[id], bar_dot_[n.in[1]]);
      }
      break;
    }
    case Op::Relu:
      kernels::relu_backward(val_[n.in[0]], g, bar_[n.in[0]]);
      if (with_dual) kernels::relu_backward(val_[n.in[0]], bar_dot_[id], bar_dot_[n.in[0]]);
      break;
    case Op::Sub:
      add_inplace(bar_[n.in[0]], g);
      add_scaled(bar_[n.in[1]], g, -1.0);
      if (with_dual) {
        add_inplace(bar_dot_[n.in[0]], bar_dot_[id]);
        add_scaled(bar_dot_[n.in[1]], bar_dot_[id], -1.0);
      }
      break;
    case Op::Add:
      add_inplace(bar_[n.in[0]], g);
      add_inplace(bar_[n.in[1]], g);
      if (with_dual) {
        add_inplace(bar_dot_[n.in[0]], bar_dot_[id]);
        add_inplace(bar_dot_[n.in[1]], bar_dot_[id]);
      }
      break;
    case Op::Scale:
      add_scaled(bar_[n.in[0]], g, n.c);
      if (with_dual) add_scaled(bar_dot_[n.in[0]], bar_dot_[id], n.c);
      break;
    case Op::SquaredNorm: {
      add_scaled(bar_[n.in[0]], val_[n.in[0]], 2.0 * g.data[0]);
      if (with_dual) {
        add_scaled(bar_dot_[n.in[0]], val_[n.in[0]], 2.0 * bar_dot_[id].data[0]);
        add_scaled(bar_dot_[n.in[0]], dot_[n.in[0]], 2.0 * g.data[0]);
      }
      break;
    }
    case Op::SumScalars:
      for (int in : n.in) {
        bar_[in].data[0] += g.data[0];
        if (with_dual) bar_dot_[in].data[0] += bar_dot_[id].data[0];
      }
      break;
    case Op::Degrees: {
      Matrix& ab = bar_[n.in[0]];
      for (int e = 0; e < n.adj->num_entries(); ++e) {
        auto [u, v] = n.adj->entries[e];
        ab.data[e] += g.data[u] + g.data[v];
      }
      if (with_dual) {
        const Matrix& gd = bar_dot_[id];
        Matrix& abd = bar_dot_[n.in[0]];
        for (int e = 0; e < n.adj->num_entries(); ++e) {
          auto [u, v] = n.adj->entries[e];
          abd.data[e] += gd.data[u] + gd.data[v];
        }
      }
      break;
    }
    case Op::InvSqrt: {
      const Matrix& s = val_[id];
      Matrix& db = bar_[n.in[0]];
      for (size_t i = 0; i < s.data.size(); ++i) {
        const double si = s.data[i];
        db.data[i] += -0.5 * si * si * si * g.data[i];
      }
      if (with_dual) {
        const Matrix& gd = bar_dot_[id];
        const Matrix& sd = dot_[id];
        Matrix& dbd = bar_dot_[n.in[0]];
        for (size_t i = 0; i < s.data.size(); ++i) {
          const double si = s.data[i];
          const double s3 = si * si * si;
          dbd.data[i] += -1.5 * si * si * sd.data[i] * g.data[i] - 0.5 * s3 * gd.data[i];
        }
      }
      break;
    }
    case Op::RowScale: {
      kernels::row_scale(val_[n.in[0]].data, g, bar_[n.in[1]], true);
      rows_dot_acc(g, val_[n.in[1]], bar_[n.in[0]]);
      if (with_dual) {
        const Matrix& gd = bar_dot_[id];
        kernels::row_scale(dot_[n.in[0]].data, g, bar_dot_[n.in[1]], true);
        kernels::row_scale(val_[n.in[0]].data, gd, bar_dot_[n.in[1]], true);
        rows_dot_acc(gd, val_[n.in[1]], bar_dot_[n.in[0]]);
        rows_dot_acc(g, dot_[n.in[1]], bar_dot_[n.in[0]]);
      }
      break;
    }
    case Op::SpmmSym: {
      kernels::spmm_sym(*n.adj, val_[n.in[0]].data, g, bar_[n.in[1]], true);
      kernels::spmm_sym_weight_grad(*n.adj, g, val_[n.in[1]], bar_[n.in[0]].data);
      if (with_dual) {
        const Matrix& gd = bar_dot_[id];
        kernels::spmm_sym(*n.adj, val_[n.in[0]].data, gd, bar_dot_[n.in[1]], true);
        const Matrix& ad = dot_[n.in[0]];
        for (int e = 0; e < n.adj->num_entries(); ++e) {
          const double w = ad.data[e];
          if (w == 0.0) continue;
          auto [u, v] = n.adj->entries[e];
          entry_outer_add(bar_dot_[n.in[1]], g, u, v, w);
        }
        kernels::spmm_sym_weight_grad(*n.adj, gd, val_[n.in[1]], bar_dot_[n.in[0]].data);
        kernels::spmm_sym_weight_grad(*n.adj, g, dot_[n.in[1]], bar_dot_[n.in[0]].data);
      }
      break;
    }
    case Op::LogSoftmax: {
      const Matrix& p = scratch_[id];
      Matrix& xb = bar_[n.in[0]];
      for (int i = 0; i < n.rows; ++i) {
        const double* gr = g.row(i);
        const double* pr = p.row(i);
        double rs = 0.0;
        for (int j = 0; j < n.cols; ++j) rs += gr[j];
        double* xr = xb.row(i);
        for (int j = 0; j < n.cols; ++j) xr[j] += gr[j] - pr[j] * rs;
      }
      if (with_dual) {
        const Matrix& gd = bar_dot_[id];
        const Matrix& lsd = dot_[id];  // d(log p); so dp = p ⊙ d(log p)
        Matrix& xbd = bar_dot_[n.in[0]];
        for (int i = 0; i < n.rows; ++i) {
          const double* gr = g.row(i);
          const double* gdr = gd.row(i);
          const double* pr = p.row(i);
          const double* lr = lsd.row(i);
          double rs = 0.0, rsd = 0.0;
          for (int j = 0; j < n.cols; ++j) {
            rs += gr[j];
            rsd += gdr[j];
          }
          double* xr = xbd.row(i);
          for (int j = 0; j < n.cols; ++j) {
            const double pd = pr[j] * lr[j];
            xr[j] += gdr[j] - pd * rs - pr[j] * rsd;
          }
        }
      }
      break;
    }
    case Op::MaskedNll: {
      const auto& spec = *n.nll;
      const double c =
          spec.reduction == Reduction::Mean ? 1.0 / static_cast<double>(spec.mask.size()) : 1.0;
      Matrix& xb = bar_[n.in[0]];
      for (int v : spec.mask) xb(v, spec.labels[v]) -= c * g.data[0];
      if (with_dual) {
        Matrix& xbd = bar_dot_[n.in[0]];
        for (int v : spec.mask) xbd(v, spec.labels[v]) -= c * bar_dot_[id].data[0];
      }
      break;
    }
    case Op::MaskedInner: {
      const Matrix& coeff = *n.cmat;
      Matrix& xb = bar_[n.in[0]];
      const double c = n.c * g.data[0];
      for (int v : n.nll->mask) {
        double* xr = xb.row(v);
        const double* cr = coeff.row(v);
        for (int j = 0; j < xb.cols; ++j) xr[j] += c * cr[j];
      }
      if (with_dual) {
        Matrix& xbd = bar_dot_[n.in[0]];
        const double cd = n.c * bar_dot_[id].data[0];
        for (int v : n.nll->mask) {
          double* xr = xbd.row(v);
          const double* cr = coeff.row(v);
          for (int j = 0; j < xbd.cols; ++j) xr[j] += cd * cr[j];
        }
      }
      break;
    }
    case Op::BregmanCe: {
      const Matrix& p = scratch_[id];
      const Matrix& ref = *n.cmat;
      const auto& spec = *n.nll;
      Matrix& xb = bar_[n.in[0]];
      const double cg = n.c * g.data[0];
      for (int v : spec.mask) {
        const double* pr = p.row(v);
        const double* rr = ref.row(v);
        double* xr = xb.row(v);
        const int y = spec.labels[v];
        for (int j = 0; j < xb.cols; ++j) {
          const double gval = (pr[j] - (j == y ? 1.0 : 0.0)) - rr[j];
          xr[j] += cg * gval;
        }
      }
      if (with_dual) {
        const Matrix& xd = dot_[n.in[0]];
        const double cgd = n.c * bar_dot_[id].data[0];
        Matrix& xbd = bar_dot_[n.in[0]];
        for (int v : spec.mask) {
          const double* pr = p.row(v);
          const double* rr = ref.row(v);
          const double* dr = xd.row(v);
          double* xr = xbd.row(v);
          const int y = spec.labels[v];
          double m = 0.0;
          for (int j = 0; j < xbd.cols; ++j) m += pr[j] * dr[j];
          for (int j = 0; j < xbd.cols; ++j) {
            const double gval = (pr[j] - (j == y ? 1.0 : 0.0)) - rr[j];
            const double pd = pr[j] * (dr[j] - m);
            xr[j] += cgd * gval + cg * pd;
          }
        }
      }
      break;
    }
    case Op::RowDiffNorm: {
      const double r = val_[id].data[0];
      if (r > 0.0) {
        const Matrix& x = val_[n.in[0]];
        const Matrix& y = val_[n.in[1]];
        const double* xr = x.row(n.row);
        const double* yr = y.row(n.row);
        double* xb = bar_[n.in[0]].row(n.row);
        double* yb = bar_[n.in[1]].row(n.row);
        const double c = g.data[0] / r;
        for (int j = 0; j < x.cols; ++j) {
          const double z = xr[j] - yr[j];
          xb[j] += c * z;
          yb[j] -= c * z;
        }
        if (with_dual) {
          const double gd = bar_dot_[id].data[0];
          const double rd = dot_[id].data[0];
          const double* xdr = dot_[n.in[0]].row(n.row);
          const double* ydr = dot_[n.in[1]].row(n.row);
          double* xbd = bar_dot_[n.in[0]].row(n.row);
          double* ybd = bar_dot_[n.in[1]].row(n.row);
          for (int j = 0; j < x.cols; ++j) {
            const double z = xr[j] - yr[j];
            const double zd = xdr[j] - ydr[j];
            const double t = gd * z / r + g.data[0] * (zd / r - z * rd / (r * r));
            xbd[j] += t;
            ybd[j] -= t;
          }
        }
      }
      break;
    }
    case Op::Dirichlet: {
      const Matrix& a = val_[n.in[0]];
      const Matrix& h = val_[n.in[1]];
      Matrix& ab = bar_[n.in[0]];
      Matrix& hb = bar_[n.in[1]];
      const double cg = n.c * g.data[0];
      for (int e = 0; e < n.adj->num_entries(); ++e) {
        auto [u, v] = n.adj->entries[e];
        const double* hu = h.row(u);
        const double* hv = h.row(v);
        double* bu = hb.row(u);
        double* bv = hb.row(v);
        double d2 = 0.0;
        const double w = 2.0 * cg * a.data[e];
        for (int j = 0; j < h.cols; ++j) {
          const double d = hu[j] - hv[j];
          d2 += d * d;
          bu[j] += w * d;
          bv[j] -= w * d;
        }
        ab.data[e] += cg * d2;
      }
      if (with_dual) {
        const Matrix& ad = dot_[n.in[0]];
        const Matrix& hd = dot_[n.in[1]];
        const double cgd = n.c * bar_dot_[id].data[0];
        Matrix& abd = bar_dot_[n.in[0]];
        Matrix& hbd = bar_dot_[n.in[1]];
        for (int e = 0; e < n.adj->num_entries(); ++e) {
          auto [u, v] = n.adj->entries[e];
          const double* hu = h.row(u);
          const double* hv = h.row(v);
          const double* du = hd.row(u);
          const double* dv = hd.row(v);
          double* bu = hbd.row(u);
          double* bv = hbd.row(v);
          double d2 = 0.0, cross = 0.0;
          for (int j = 0; j < h.cols; ++j) {
            const double d = hu[j] - hv[j];
            const double dd = du[j] - dv[j];
            d2 += d * d;
            cross += d * dd;
            const double t = 2.0 * (cgd * a.data[e] * d + cg * ad.data[e] * d + cg * a.data[e] * dd);
            bu[j] += t;
            bv[j] -= t;
          }
          abd.data[e] += cgd * d2 + cg * 2.0 * cross;
        }
      }
      break;
    }
  }
}

DiffProgram::SlotGrads DiffProgram::Session::collect(const std::vector<Matrix>& store) const {
  SlotGrads out;
  for (size_t i = 0; i < program_->slot_names_.size(); ++i)
    out[program_->slot_names_[i]] = store[program_->slot_nodes_[i]];
  return out;
}

DiffProgram::SlotGrads DiffProgram::Session::backward(const Matrix& cotangent) {
  const auto& nodes = program_->nodes_;
  if (bar_.size() != nodes.size()) bar_.resize(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    bar_[i].ensure_shape(nodes[i].rows, nodes[i].cols);
    bar_[i].set_zero();
  }
  const Node& out = nodes[program_->output_];
  if (cotangent.rows != out.rows || cotangent.cols != out.cols)
    throw Error(ErrorKind::Invalid, "cotangent shape mismatch");
  bar_[program_->output_] = cotangent;
  for (int id = static_cast<int>(nodes.size()) - 1; id >= 0; --id) backward_node(id, false);
  return collect(bar_);
}

Matrix DiffProgram::Session::tangent(const Bindings& tangents) {
  run_tangent_pass(tangents);
  return dot_[program_->output_];
}

DiffProgram::SlotGrads DiffProgram::Session::hvp(const Bindings& tangents) {
  const auto& nodes = program_->nodes_;
  const Node& out = nodes[program_->output_];
  if (out.rows != 1 || out.cols != 1)
    throw Error(ErrorKind::Invalid, "hvp requires a scalar-output program");
  run_tangent_pass(tangents);
  if (bar_.size() != nodes.size()) bar_.resize(nodes.size());
  if (bar_dot_.size() != nodes.size()) bar_dot_.resize(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    bar_[i].ensure_shape(nodes[i].rows, nodes[i].cols);
    bar_[i].set_zero();
    bar_dot_[i].ensure_shape(nodes[i].rows, nodes[i].cols);
    bar_dot_[i].set_zero();
  }
  bar_[program_->output_].data[0] = 1.0;
  for (int id = static_cast<int>(nodes.size()) - 1; id >= 0; --id) backward_node(id, true);
  return collect(bar_dot_);
}

// ----------------------------- free functions --------------------------------

Matrix DiffProgram::evaluate(const Bindings& inputs) const {
  Session s(*this, inputs);
  return s.output_value();
}

DiffProgram::SlotGrads DiffProgram::vjp(const Bindings& inputs, const Matrix& cotangent) const {
  Session s(*this, inputs);
  return s.backward(cotangent);
}

Matrix DiffProgram::jvp(const Bindings& inputs, const Bindings& tangents) const {
  Session s(*this, inputs);
  return s.tangent(tangents);
}

DiffProgram::SlotGrads DiffProgram::hvp(const Bindings& inputs, const Bindings& tangents) const {
  Session s(*this, inputs);
  return s.hvp(tangents);
}

Matrix finite_difference_gradient(const DiffProgram& p, const DiffProgram::Bindings& inputs,
                                  const std::string& slot, double step) {
  if (step <= 0.0) throw Error(ErrorKind::Invalid, "finite difference step must be positive");
  auto [orows, ocols] = p.shape(p.output());
  if (orows != 1 || ocols != 1)
    throw Error(ErrorKind::Invalid, "finite differences require a scalar-output program");
  auto it = inputs.find(slot);
  if (it == inputs.end()) throw Error(ErrorKind::Invalid, "finite differences: unbound slot " + slot);

  DiffProgram::Bindings work = inputs;
  Matrix& x = work[slot];
  Matrix grad(x.rows, x.cols);
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double save = x.data[i];
    x.data[i] = save + step;
    const double fp = p.evaluate(work).as_scalar();
    x.data[i] = save - step;
    const double fm = p.evaluate(work).as_scalar();
    x.data[i] = save;
    grad.data[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace edgeinf
