#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gano {

/// Derives an independent seed for a named sub-stream of a root seed, so that
/// e.g. "dataset/shape-12" is unaffected by how many draws other stages made.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, std::string_view name) : engine_(derive_seed(root, name)) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return normal_(engine_) * stddev + mean;
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  bool coin() { return uniform() < 0.5; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace gano
