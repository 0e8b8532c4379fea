#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records primitives in execution order; Var is a handle to one
// recorded node. Tapes are rebuilt for every forward pass and are not
// thread-safe; independent tapes may be used from different threads.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string_view>
#include <vector>

#include "gano/tensor.hpp"

namespace gano::ad {

class Tape;

enum class Op : std::uint8_t {
  kLeaf,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kAddRow,
  kMulRow,
  kMulCol,
  kScale,
  kAddScalar,
  kTranspose,
  kSoftmaxRows,
  kSigmoid,
  kSilu,
  kRelu,
  kAbs,
  kSquare,
  kReciprocal,
  kSum,
  kMean,
  kColSums,
  kRowSums,
  kGatherRows,
  kScatterRows,
  kL2Norm,
  kLayerNorm,
  kConcatCols,
  kSliceCols,
  kBroadcastRows,
};

std::string_view op_name(Op op);

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const;
  bool valid() const { return tape != nullptr; }
};

/// Gradients of a scalar output with respect to every node of a tape.
class Gradients {
 public:
  Gradients() = default;
  Gradients(const Tape* tape, std::vector<Tensor> grads) : tape_(tape), grads_(std::move(grads)) {}

  /// Gradient w.r.t. v; an all-zero tensor when v does not influence the output.
  Tensor wrt(Var v) const;
  /// True when the output depends on v through recorded primitives.
  bool reached(Var v) const;

 private:
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Non-differentiable input; gradients never propagate into it.
  Var constant(Tensor value);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Var v) const;
  Op op(Var v) const;

  /// Reverse pass from a 1 x 1 output. Leaves not reachable get zero.
  Gradients backward(Var output) const;

  // Primitive recording; prefer the free functions below.
  Var record(Op op, Var a, Var b, Tensor value, double scalar = 0.0, Tensor saved = {});
  Var record_indexed(Op op, Var a, Tensor value, std::vector<std::size_t> index,
                     std::size_t aux);

 private:
  struct Node {
    Op op;
    bool requires_grad;
    std::uint32_t a;
    std::uint32_t b;
    double scalar;
    std::size_t aux;
    Tensor value;
    Tensor saved;  // op-specific cache (e.g. normalized activations)
    std::vector<std::size_t> index;
  };

  void check_owned(Var v, std::string_view prim) const;
  void accumulate(std::vector<Tensor>& grads, std::uint32_t id, const Tensor& g) const;
  void backprop_node(const Node& n, const Tensor& g, std::vector<Tensor>& grads) const;

  std::deque<Node> nodes_;  // stable addresses: value() references survive recording
};

// Elementwise / broadcasting arithmetic.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a[m x n] + r[1 x n] broadcast over rows.
Var add_row(Var a, Var r);
/// a[m x n] * r[1 x n] broadcast over rows.
Var mul_row(Var a, Var r);
/// a[m x n] * c[m x 1] broadcast over columns.
Var mul_col(Var a, Var c);
/// r[1 x n] repeated m times.
Var broadcast_rows(Var r, std::size_t m);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

Var matmul(Var a, Var b);
Var transpose(Var a);

// Nonlinearities.
Var softmax_rows(Var a);
Var sigmoid(Var a);
Var silu(Var a);
Var relu(Var a);
Var abs(Var a);
Var square(Var a);
Var reciprocal(Var a);
/// Row-wise (x - mean) / sqrt(var + eps), no affine part.
Var layer_norm_rows(Var a, double eps = 1e-5);

// Reductions.
Var sum(Var a);
Var mean(Var a);
/// 1 x n column sums.
Var col_sums(Var a);
/// m x 1 row sums.
Var row_sums(Var a);
/// Frobenius norm, 1 x 1.
Var l2_norm(Var a);

// Indexing.
Var gather_rows(Var a, std::vector<std::size_t> index);
/// out[rows x n], out[index[r]] += a[r].
Var scatter_rows(Var a, std::vector<std::size_t> index, std::size_t rows);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t start, std::size_t count);

}  // namespace gano::ad
