#include "gano/adam.hpp"

#include <cmath>
#include <string>

#include "gano/errors.hpp"

namespace gano {

void adam_step(AdamState& state, std::span<double> param, std::span<const double> grad) {
  if (param.size() != grad.size() || state.m.size() != param.size() ||
      state.v.size() != param.size())
    throw ValidationError("adam_step: size mismatch (param " + std::to_string(param.size()) +
                          ", grad " + std::to_string(grad.size()) + ", state " +
                          std::to_string(state.m.size()) + ")");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw NumericalError("adam_step: non-finite gradient at index " + std::to_string(i));

  const AdamConfig& c = state.cfg;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mh = state.m[i] / bc1;
    const double vh = state.v[i] / bc2;
    param[i] -= c.lr * mh / (std::sqrt(vh) + c.eps);
  }
}

}  // namespace gano
