#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gano/adam.hpp"
#include "gano/autodiff.hpp"

namespace gano {

/// Ordered, named list of trainable tensors. Order is the checkpoint order.
class ParamSet {
 public:
  std::size_t add(std::string name, ad::Tensor value);

  std::size_t size() const { return tensors_.size(); }
  /// Total scalar count.
  std::size_t count() const;
  const std::string& name(std::size_t i) const { return names_[i]; }
  ad::Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const ad::Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t index_of(const std::string& name) const;

  /// Records every tensor on the tape, as leaves or as constants.
  std::vector<ad::Var> bind(ad::Tape& tape, bool trainable) const;

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor> tensors_;
};

/// One AdamState per tensor of a ParamSet.
class AdamGroup {
 public:
  AdamGroup() = default;
  AdamGroup(const ParamSet& params, AdamConfig cfg);

  void set_lr(double lr);
  /// Applies one update from gradients of the vars returned by params.bind.
  void step(ParamSet& params, const ad::Gradients& grads, const std::vector<ad::Var>& vars);

  std::size_t steps() const { return states_.empty() ? 0 : states_.front().step; }

 private:
  std::vector<AdamState> states_;
};

/// Cosine decay from lr to lr * floor over total steps.
double cosine_lr(double lr, std::size_t step, std::size_t total, double floor = 0.0);

}  // namespace gano
