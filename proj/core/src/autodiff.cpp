#include "gano/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gano/errors.hpp"
#include "gano/kernels.hpp"

namespace gano::ad {

namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

[[noreturn]] void shape_error(std::string_view prim, const Shape& a, const Shape& b) {
  throw ValidationError(std::string(prim) + ": shape mismatch " + a.str() + " vs " + b.str());
}

Tape& tape_of(Var a, std::string_view prim) {
  if (a.tape == nullptr) throw ValidationError(std::string(prim) + ": operand is not on a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b, std::string_view prim) {
  Tape& t = tape_of(a, prim);
  if (b.tape != a.tape) throw ValidationError(std::string(prim) + ": operands on different tapes");
  return t;
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  const double* in = x.data();
  double* o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = f(in[i]);
  return out;
}

Tensor col_sums_of(const Tensor& g) {
  Tensor out(1, g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) out[j] += g(i, j);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Tensor

std::string Shape::str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : shape_{rows, cols}, values_(std::move(values)) {
  if (values_.size() != rows * cols)
    throw ValidationError("Tensor: " + std::to_string(values_.size()) +
                          " values do not fill shape " + shape_.str());
}

Tensor Tensor::row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(1, n, std::move(v));
}

double Tensor::item() const {
  if (size() != 1) throw ValidationError("Tensor::item on shape " + shape_.str());
  return values_[0];
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------- Var / Gradients

const Tensor& Var::value() const { return tape->value(*this); }
const Shape& Var::shape() const { return tape->value(*this).shape(); }

Tensor Gradients::wrt(Var v) const {
  if (v.tape != tape_) throw ValidationError("Gradients::wrt: variable from a different tape");
  const Tensor& g = grads_.at(v.id);
  if (g.empty()) return Tensor(tape_->value(v).shape());
  return g;
}

bool Gradients::reached(Var v) const { return v.tape == tape_ && !grads_.at(v.id).empty(); }

// ---------------------------------------------------------------- Tape

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kAddRow: return "add_row";
    case Op::kMulRow: return "mul_row";
    case Op::kMulCol: return "mul_col";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kTranspose: return "transpose";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSilu: return "silu";
    case Op::kRelu: return "relu";
    case Op::kAbs: return "abs";
    case Op::kSquare: return "square";
    case Op::kReciprocal: return "reciprocal";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kColSums: return "col_sums";
    case Op::kRowSums: return "row_sums";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScatterRows: return "scatter_rows";
    case Op::kL2Norm: return "l2_norm";
    case Op::kLayerNorm: return "layer_norm_rows";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kBroadcastRows: return "broadcast_rows";
  }
  return "unknown";
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{Op::kLeaf, true, kNone, kNone, 0.0, 0, std::move(value), {}, {}});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{Op::kConstant, false, kNone, kNone, 0.0, 0, std::move(value), {}, {}});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id].value;
}

Op Tape::op(Var v) const {
  check_owned(v, "op");
  return nodes_[v.id].op;
}

void Tape::check_owned(Var v, std::string_view prim) const {
  if (v.tape != this || v.id >= nodes_.size())
    throw ValidationError(std::string(prim) + ": variable does not belong to this tape");
}

Var Tape::record(Op op, Var a, Var b, Tensor value, double scalar, Tensor saved) {
  const std::uint32_t ia = a.valid() ? a.id : kNone;
  const std::uint32_t ib = b.valid() ? b.id : kNone;
  const bool rg = (ia != kNone && nodes_[ia].requires_grad) || (ib != kNone && nodes_[ib].requires_grad);
  nodes_.push_back(Node{op, rg, ia, ib, scalar, 0, std::move(value), std::move(saved), {}});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record_indexed(Op op, Var a, Tensor value, std::vector<std::size_t> index,
                         std::size_t aux) {
  const bool rg = nodes_[a.id].requires_grad;
  nodes_.push_back(Node{op, rg, a.id, kNone, 0.0, aux, std::move(value), {}, std::move(index)});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(std::vector<Tensor>& grads, std::uint32_t id, const Tensor& g) const {
  if (id == kNone || !nodes_[id].requires_grad) return;
  Tensor& dst = grads[id];
  if (dst.empty()) {
    dst = g;
    return;
  }
  double* d = dst.data();
  const double* s = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

Gradients Tape::backward(Var output) const {
  check_owned(output, "backward");
  const Shape& s = nodes_[output.id].value.shape();
  if (s.rows != 1 || s.cols != 1)
    throw ValidationError("backward: output must be a 1x1 scalar, got " + s.str());
  std::vector<Tensor> grads(nodes_.size());
  if (nodes_[output.id].requires_grad) grads[output.id] = Tensor::scalar(1.0);
  for (std::size_t k = output.id + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    if (grads[k].empty() || !n.requires_grad) continue;
    backprop_node(n, grads[k], grads);
  }
  return Gradients(this, std::move(grads));
}

void Tape::backprop_node(const Node& n, const Tensor& g, std::vector<Tensor>& grads) const {
  auto needs = [&](std::uint32_t id) { return id != kNone && nodes_[id].requires_grad; };
  const Tensor* av = n.a != kNone ? &nodes_[n.a].value : nullptr;
  const Tensor* bv = n.b != kNone ? &nodes_[n.b].value : nullptr;
  const std::size_t sz = g.size();

  switch (n.op) {
    case Op::kLeaf:
    case Op::kConstant:
      return;
    case Op::kMatMul: {
      const std::size_t m = av->rows(), k = av->cols(), c = bv->cols();
      if (needs(n.a)) {
        Tensor bt(c, k);
        kernels::transpose(bv->data(), bt.data(), k, c);
        Tensor da(m, k);
        kernels::matmul(g.data(), bt.data(), da.data(), m, c, k);
        accumulate(grads, n.a, da);
      }
      if (needs(n.b)) {
        Tensor db(k, c);
        kernels::matmul_tn_acc(av->data(), g.data(), db.data(), m, k, c);
        accumulate(grads, n.b, db);
      }
      return;
    }
    case Op::kAdd:
      accumulate(grads, n.a, g);
      accumulate(grads, n.b, g);
      return;
    case Op::kSub:
      accumulate(grads, n.a, g);
      if (needs(n.b)) accumulate(grads, n.b, map(g, [](double x) { return -x; }));
      return;
    case Op::kMul: {
      if (needs(n.a)) {
        Tensor d(g.shape());
        for (std::size_t i = 0; i < sz; ++i) d[i] = g[i] * (*bv)[i];
        accumulate(grads, n.a, d);
      }
      if (needs(n.b)) {
        Tensor d(g.shape());
        for (std::size_t i = 0; i < sz; ++i) d[i] = g[i] * (*av)[i];
        accumulate(grads, n.b, d);
      }
      return;
    }
    case Op::kAddRow:
      accumulate(grads, n.a, g);
      if (needs(n.b)) accumulate(grads, n.b, col_sums_of(g));
      return;
    case Op::kMulRow: {
      const std::size_t rows = g.rows(), cols = g.cols();
      if (needs(n.a)) {
        Tensor d(g.shape());
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) d(i, j) = g(i, j) * (*bv)[j];
        accumulate(grads, n.a, d);
      }
      if (needs(n.b)) {
        Tensor d(1, cols);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) d[j] += g(i, j) * (*av)(i, j);
        accumulate(grads, n.b, d);
      }
      return;
    }
    case Op::kMulCol: {
      const std::size_t rows = g.rows(), cols = g.cols();
      if (needs(n.a)) {
        Tensor d(g.shape());
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) d(i, j) = g(i, j) * (*bv)[i];
        accumulate(grads, n.a, d);
      }
      if (needs(n.b)) {
        Tensor d(rows, 1);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) d[i] += g(i, j) * (*av)(i, j);
        accumulate(grads, n.b, d);
      }
      return;
    }
    case Op::kBroadcastRows:
      accumulate(grads, n.a, col_sums_of(g));
      return;
    case Op::kScale: {
      const double s = n.scalar;
      accumulate(grads, n.a, map(g, [s](double x) { return s * x; }));
      return;
    }
    case Op::kAddScalar:
      accumulate(grads, n.a, g);
      return;
    case Op::kTranspose: {
      Tensor d(g.cols(), g.rows());
      kernels::transpose(g.data(), d.data(), g.rows(), g.cols());
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kSoftmaxRows: {
      const Tensor& y = n.value;
      Tensor d(g.shape());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) = y(i, j) * (g(i, j) - s);
      }
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kSigmoid: {
      Tensor d(g.shape());
      for (std::size_t i = 0; i < sz; ++i) {
        const double y = n.value[i];
        d[i] = g[i] * y * (1.0 - y);
      }
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kSilu: {
      Tensor d(g.shape());
      for (std::size_t i = 0; i < sz; ++i) {
        const double x = (*av)[i];
        const double s = kernels::sigmoid(x);
        d[i] = g[i] * s * (1.0 + x * (1.0 - s));
      }
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kRelu: {
      Tensor d(g.shape());
      for (std::size_t i = 0; i < sz; ++i) d[i] = (*av)[i] > 0.0 ? g[i] : 0.0;
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kAbs: {
      Tensor d(g.shape());
      for (std::size_t i = 0; i < sz; ++i) {
        const double x = (*av)[i];
        d[i] = x > 0.0 ? g[i] : (x < 0.0 ? -g[i] : 0.0);
      }
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kSquare: {
      Tensor d(g.shape());
      for (std::size_t i = 0; i < sz; ++i) d[i] = 2.0 * (*av)[i] * g[i];
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kReciprocal: {
      Tensor d(g.shape());
      for (std::size_t i = 0; i < sz; ++i) d[i] = -g[i] * n.value[i] * n.value[i];
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kSum:
      accumulate(grads, n.a, Tensor(av->shape(), g[0]));
      return;
    case Op::kMean:
      accumulate(grads, n.a, Tensor(av->shape(), g[0] / static_cast<double>(av->size())));
      return;
    case Op::kColSums: {
      Tensor d(av->shape());
      for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) = g[j];
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kRowSums: {
      Tensor d(av->shape());
      for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) = g[i];
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kGatherRows: {
      Tensor d(av->shape());
      const std::size_t cols = d.cols();
      for (std::size_t r = 0; r < n.index.size(); ++r)
        for (std::size_t j = 0; j < cols; ++j) d(n.index[r], j) += g(r, j);
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kScatterRows: {
      Tensor d(av->shape());
      const std::size_t cols = d.cols();
      for (std::size_t r = 0; r < n.index.size(); ++r)
        for (std::size_t j = 0; j < cols; ++j) d(r, j) = g(n.index[r], j);
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kL2Norm: {
      const double nrm = n.value[0];
      Tensor d(av->shape());
      if (nrm > 0.0)
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[0] * (*av)[i] / nrm;
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kLayerNorm: {
      const Tensor& y = n.value;
      const std::size_t rows = g.rows(), cols = g.cols();
      Tensor d(g.shape());
      for (std::size_t i = 0; i < rows; ++i) {
        double mg = 0.0, mgy = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          mg += g(i, j);
          mgy += g(i, j) * y(i, j);
        }
        mg /= static_cast<double>(cols);
        mgy /= static_cast<double>(cols);
        const double inv = n.saved[i];
        for (std::size_t j = 0; j < cols; ++j) d(i, j) = inv * (g(i, j) - mg - y(i, j) * mgy);
      }
      accumulate(grads, n.a, d);
      return;
    }
    case Op::kConcatCols: {
      const std::size_t ca = av->cols(), cb = bv->cols(), rows = g.rows();
      if (needs(n.a)) {
        Tensor d(rows, ca);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < ca; ++j) d(i, j) = g(i, j);
        accumulate(grads, n.a, d);
      }
      if (needs(n.b)) {
        Tensor d(rows, cb);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cb; ++j) d(i, j) = g(i, ca + j);
        accumulate(grads, n.b, d);
      }
      return;
    }
    case Op::kSliceCols: {
      Tensor d(av->shape());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) d(i, n.aux + j) = g(i, j);
      accumulate(grads, n.a, d);
      return;
    }
  }
}

// ---------------------------------------------------------------- primitives

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b, "add");
  const Tensor &x = a.value(), &y = b.value();
  if (x.shape() != y.shape()) shape_error("add", x.shape(), y.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return t.record(Op::kAdd, a, b, std::move(out));
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b, "sub");
  const Tensor &x = a.value(), &y = b.value();
  if (x.shape() != y.shape()) shape_error("sub", x.shape(), y.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return t.record(Op::kSub, a, b, std::move(out));
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b, "mul");
  const Tensor &x = a.value(), &y = b.value();
  if (x.shape() != y.shape()) shape_error("mul", x.shape(), y.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return t.record(Op::kMul, a, b, std::move(out));
}

Var add_row(Var a, Var r) {
  Tape& t = tape_of(a, r, "add_row");
  const Tensor &x = a.value(), &y = r.value();
  if (y.rows() != 1 || y.cols() != x.cols()) shape_error("add_row", x.shape(), y.shape());
  Tensor out(x.shape());
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = x(i, j) + y[j];
  return t.record(Op::kAddRow, a, r, std::move(out));
}

Var mul_row(Var a, Var r) {
  Tape& t = tape_of(a, r, "mul_row");
  const Tensor &x = a.value(), &y = r.value();
  if (y.rows() != 1 || y.cols() != x.cols()) shape_error("mul_row", x.shape(), y.shape());
  Tensor out(x.shape());
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = x(i, j) * y[j];
  return t.record(Op::kMulRow, a, r, std::move(out));
}

Var mul_col(Var a, Var c) {
  Tape& t = tape_of(a, c, "mul_col");
  const Tensor &x = a.value(), &y = c.value();
  if (y.cols() != 1 || y.rows() != x.rows()) shape_error("mul_col", x.shape(), y.shape());
  Tensor out(x.shape());
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = x(i, j) * y[i];
  return t.record(Op::kMulCol, a, c, std::move(out));
}

Var broadcast_rows(Var r, std::size_t m) {
  Tape& t = tape_of(r, "broadcast_rows");
  const Tensor& y = r.value();
  if (y.rows() != 1) shape_error("broadcast_rows", y.shape(), Shape{1, y.cols()});
  Tensor out(m, y.cols());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) out(i, j) = y[j];
  return t.record(Op::kBroadcastRows, r, Var{}, std::move(out));
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a, "scale");
  return t.record(Op::kScale, a, Var{}, map(a.value(), [s](double x) { return s * x; }), s);
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a, "add_scalar");
  return t.record(Op::kAddScalar, a, Var{}, map(a.value(), [s](double x) { return x + s; }), s);
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b, "matmul");
  const Tensor &x = a.value(), &y = b.value();
  if (x.cols() != y.rows()) shape_error("matmul", x.shape(), y.shape());
  Tensor out(x.rows(), y.cols());
  kernels::matmul(x.data(), y.data(), out.data(), x.rows(), x.cols(), y.cols());
  return t.record(Op::kMatMul, a, b, std::move(out));
}

Var transpose(Var a) {
  Tape& t = tape_of(a, "transpose");
  const Tensor& x = a.value();
  Tensor out(x.cols(), x.rows());
  kernels::transpose(x.data(), out.data(), x.rows(), x.cols());
  return t.record(Op::kTranspose, a, Var{}, std::move(out));
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a, "softmax_rows");
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      out(i, j) = std::exp(x(i, j) - mx);
      s += out(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= s;
  }
  return t.record(Op::kSoftmaxRows, a, Var{}, std::move(out));
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a, "sigmoid");
  return t.record(Op::kSigmoid, a, Var{}, map(a.value(), kernels::sigmoid));
}

Var silu(Var a) {
  Tape& t = tape_of(a, "silu");
  return t.record(Op::kSilu, a, Var{}, map(a.value(), kernels::silu));
}

Var relu(Var a) {
  Tape& t = tape_of(a, "relu");
  return t.record(Op::kRelu, a, Var{}, map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }));
}

Var abs(Var a) {
  Tape& t = tape_of(a, "abs");
  return t.record(Op::kAbs, a, Var{}, map(a.value(), [](double x) { return std::fabs(x); }));
}

Var square(Var a) {
  Tape& t = tape_of(a, "square");
  return t.record(Op::kSquare, a, Var{}, map(a.value(), [](double x) { return x * x; }));
}

Var reciprocal(Var a) {
  Tape& t = tape_of(a, "reciprocal");
  return t.record(Op::kReciprocal, a, Var{}, map(a.value(), [](double x) { return 1.0 / x; }));
}

Var layer_norm_rows(Var a, double eps) {
  Tape& t = tape_of(a, "layer_norm_rows");
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(x.shape());
  Tensor inv(rows, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += x(i, j);
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv[i] = is;
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = (x(i, j) - mu) * is;
  }
  return t.record(Op::kLayerNorm, a, Var{}, std::move(out), eps, std::move(inv));
}

Var sum(Var a) {
  Tape& t = tape_of(a, "sum");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Op::kSum, a, Var{}, Tensor::scalar(s));
}

Var mean(Var a) {
  Tape& t = tape_of(a, "mean");
  const Tensor& x = a.value();
  if (x.empty()) throw ValidationError("mean: empty tensor " + x.shape().str());
  double s = 0.0;
  for (double v : x.values()) s += v;
  return t.record(Op::kMean, a, Var{}, Tensor::scalar(s / static_cast<double>(x.size())));
}

Var col_sums(Var a) {
  Tape& t = tape_of(a, "col_sums");
  return t.record(Op::kColSums, a, Var{}, col_sums_of(a.value()));
}

Var row_sums(Var a) {
  Tape& t = tape_of(a, "row_sums");
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[i] += x(i, j);
  return t.record(Op::kRowSums, a, Var{}, std::move(out));
}

Var l2_norm(Var a) {
  Tape& t = tape_of(a, "l2_norm");
  return t.record(Op::kL2Norm, a, Var{}, Tensor::scalar(norm2(a.value().span())));
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
  Tape& t = tape_of(a, "gather_rows");
  const Tensor& x = a.value();
  Tensor out(index.size(), x.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= x.rows())
      throw ValidationError("gather_rows: index " + std::to_string(index[r]) +
                            " out of range for " + x.shape().str());
    for (std::size_t j = 0; j < x.cols(); ++j) out(r, j) = x(index[r], j);
  }
  return t.record_indexed(Op::kGatherRows, a, std::move(out), std::move(index), 0);
}

Var scatter_rows(Var a, std::vector<std::size_t> index, std::size_t rows) {
  Tape& t = tape_of(a, "scatter_rows");
  const Tensor& x = a.value();
  if (index.size() != x.rows()) shape_error("scatter_rows", x.shape(), Shape{index.size(), x.cols()});
  Tensor out(rows, x.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows)
      throw ValidationError("scatter_rows: index " + std::to_string(index[r]) + " >= " +
                            std::to_string(rows));
    for (std::size_t j = 0; j < x.cols(); ++j) out(index[r], j) += x(r, j);
  }
  return t.record_indexed(Op::kScatterRows, a, std::move(out), std::move(index), rows);
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b, "concat_cols");
  const Tensor &x = a.value(), &y = b.value();
  if (x.rows() != y.rows()) shape_error("concat_cols", x.shape(), y.shape());
  Tensor out(x.rows(), x.cols() + y.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) out(i, x.cols() + j) = y(i, j);
  }
  return t.record(Op::kConcatCols, a, b, std::move(out));
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = tape_of(a, "slice_cols");
  const Tensor& x = a.value();
  if (start + count > x.cols()) shape_error("slice_cols", x.shape(), Shape{x.rows(), start + count});
  Tensor out(x.rows(), count);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, start + j);
  return t.record_indexed(Op::kSliceCols, a, std::move(out), {}, start);
}

}  // namespace gano::ad
