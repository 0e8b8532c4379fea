#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gano {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for one parameter array.
struct AdamState {
  AdamState() = default;
  AdamState(std::size_t n, AdamConfig config) : cfg(config), m(n, 0.0), v(n, 0.0) {}

  AdamConfig cfg;
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// Bias-corrected Adam update applied to param in place.
/// Throws ValidationError on size mismatch and NumericalError naming the
/// first non-finite gradient entry; param and state are untouched then.
void adam_step(AdamState& state, std::span<double> param, std::span<const double> grad);

}  // namespace gano
