#include "gano/params.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gano/errors.hpp"

namespace gano {

std::size_t ParamSet::add(std::string name, ad::Tensor value) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end())
    throw ValidationError("ParamSet: duplicate parameter name " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
  return tensors_.size() - 1;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ValidationError("ParamSet: no parameter named " + name);
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<ad::Var> ParamSet::bind(ad::Tape& tape, bool trainable) const {
  std::vector<ad::Var> vars;
  vars.reserve(tensors_.size());
  for (const auto& t : tensors_) vars.push_back(trainable ? tape.leaf(t) : tape.constant(t));
  return vars;
}

AdamGroup::AdamGroup(const ParamSet& params, AdamConfig cfg) {
  states_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) states_.emplace_back(params[i].size(), cfg);
}

void AdamGroup::set_lr(double lr) {
  for (auto& s : states_) s.cfg.lr = lr;
}

void AdamGroup::step(ParamSet& params, const ad::Gradients& grads,
                     const std::vector<ad::Var>& vars) {
  if (vars.size() != params.size() || states_.size() != params.size())
    throw ValidationError("AdamGroup::step: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ad::Tensor g = grads.wrt(vars[i]);
    adam_step(states_[i], params[i].span(), g.span());
  }
}

double cosine_lr(double lr, std::size_t step, std::size_t total, double floor) {
  if (total == 0) return lr;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return lr * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

}  // namespace gano
