#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gano/autodiff.hpp"
#include "gano/rng.hpp"
#include "test_util.hpp"

namespace gano::test {

using ad::Tape;
using ad::Tensor;
using ad::Var;

struct OpCase {
  std::string name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  bool away_from_zero = false;
  std::function<Var(Tape&, const std::vector<Var>&)> fn;
};

// Weighted sum of the primitive's output so every output entry is probed.
inline double weighted_loss(const OpCase& c, const std::vector<Tensor>& inputs, const Tensor& w) {
  Tape tape;
  std::vector<Var> vs;
  for (const auto& t : inputs) vs.push_back(tape.constant(t));
  return ad::sum(ad::mul(c.fn(tape, vs), tape.constant(w))).value().item();
}

inline double check_case(const OpCase& c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> inputs;
  for (auto [r, k] : c.shapes)
    inputs.push_back(c.away_from_zero ? random_away_from_zero(rng, r, k) : random_tensor(rng, r, k));

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const Var out = c.fn(tape, leaves);
  const Tensor w = random_tensor(rng, out.shape().rows, out.shape().cols);
  const auto grads = tape.backward(ad::sum(ad::mul(out, tape.constant(w))));
  std::vector<double> analytic;
  for (const Var& l : leaves) {
    const Tensor g = grads.wrt(l);
    analytic.insert(analytic.end(), g.values().begin(), g.values().end());
  }

  std::vector<double> flat;
  for (const auto& t : inputs) flat.insert(flat.end(), t.values().begin(), t.values().end());
  const auto fd = fd_gradient(
      [&](const std::vector<double>& x) {
        std::vector<Tensor> in = inputs;
        std::size_t o = 0;
        for (auto& t : in)
          for (auto& v : t.values()) v = x[o++];
        return weighted_loss(c, in, w);
      },
      flat);
  return rel_error(analytic, fd);
}

inline std::vector<OpCase> primitive_cases() {
  using V = const std::vector<Var>&;
  return {
      {"matmul", {{3, 4}, {4, 2}}, false, [](Tape&, V v) { return ad::matmul(v[0], v[1]); }},
      {"add", {{3, 2}, {3, 2}}, false, [](Tape&, V v) { return ad::add(v[0], v[1]); }},
      {"sub", {{3, 2}, {3, 2}}, false, [](Tape&, V v) { return ad::sub(v[0], v[1]); }},
      {"mul", {{3, 2}, {3, 2}}, false, [](Tape&, V v) { return ad::mul(v[0], v[1]); }},
      {"add_row", {{4, 3}, {1, 3}}, false, [](Tape&, V v) { return ad::add_row(v[0], v[1]); }},
      {"mul_row", {{4, 3}, {1, 3}}, false, [](Tape&, V v) { return ad::mul_row(v[0], v[1]); }},
      {"mul_col", {{4, 3}, {4, 1}}, false, [](Tape&, V v) { return ad::mul_col(v[0], v[1]); }},
      {"broadcast_rows", {{1, 3}}, false, [](Tape&, V v) { return ad::broadcast_rows(v[0], 5); }},
      {"scale", {{2, 3}}, false, [](Tape&, V v) { return ad::scale(v[0], -1.7); }},
      {"add_scalar", {{2, 3}}, false, [](Tape&, V v) { return ad::add_scalar(v[0], 0.3); }},
      {"transpose", {{2, 3}}, false, [](Tape&, V v) { return ad::transpose(v[0]); }},
      {"softmax_rows", {{3, 5}}, false, [](Tape&, V v) { return ad::softmax_rows(v[0]); }},
      {"sigmoid", {{3, 3}}, false, [](Tape&, V v) { return ad::sigmoid(v[0]); }},
      {"silu", {{3, 3}}, false, [](Tape&, V v) { return ad::silu(v[0]); }},
      {"relu", {{3, 3}}, true, [](Tape&, V v) { return ad::relu(v[0]); }},
      {"abs", {{3, 3}}, true, [](Tape&, V v) { return ad::abs(v[0]); }},
      {"square", {{3, 3}}, false, [](Tape&, V v) { return ad::square(v[0]); }},
      {"reciprocal", {{3, 3}}, true, [](Tape&, V v) { return ad::reciprocal(v[0]); }},
      {"sum", {{3, 4}}, false, [](Tape&, V v) { return ad::sum(v[0]); }},
      {"mean", {{3, 4}}, false, [](Tape&, V v) { return ad::mean(v[0]); }},
      {"col_sums", {{3, 4}}, false, [](Tape&, V v) { return ad::col_sums(v[0]); }},
      {"row_sums", {{3, 4}}, false, [](Tape&, V v) { return ad::row_sums(v[0]); }},
      {"l2_norm", {{3, 4}}, false, [](Tape&, V v) { return ad::l2_norm(v[0]); }},
      {"layer_norm_rows", {{3, 6}}, false, [](Tape&, V v) { return ad::layer_norm_rows(v[0]); }},
      {"gather_rows", {{3, 2}}, false, [](Tape&, V v) { return ad::gather_rows(v[0], {2, 0, 2, 1}); }},
      {"scatter_rows", {{3, 2}}, false, [](Tape&, V v) { return ad::scatter_rows(v[0], {1, 0, 1}, 4); }},
      {"concat_cols", {{3, 2}, {3, 4}}, false, [](Tape&, V v) { return ad::concat_cols(v[0], v[1]); }},
      {"slice_cols", {{3, 6}}, false, [](Tape&, V v) { return ad::slice_cols(v[0], 1, 3); }},
  };
}

}  // namespace gano::test
