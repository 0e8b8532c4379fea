#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "gano/geometry.hpp"

namespace gano::helm {

using cplx = std::complex<double>;

struct ScatterConfig {
  std::size_t n = 64;
  double kappa = 7.0;
  double q_tilde = 1.0;
  std::vector<double> angles;

  /// Throws ValidationError unless n >= 32, kappa > 0, q_tilde > -1.
  void validate() const;
};

/// count angles 2 pi j / count.
std::vector<double> equispaced_angles(std::size_t count);

/// q_tilde at cell centers inside the shape, 0 elsewhere, on [-1, 1]^2.
geo::GridField rasterize_q(const geo::FourierShape& shape, std::size_t n, double q_tilde);

struct ComplexField {
  geo::GridField re;
  geo::GridField im;

  cplx at(std::size_t i, std::size_t j) const { return {re.at(i, j), im.at(i, j)}; }
  cplx interpolate(geo::Vec2 p) const { return {re.interpolate(p), im.interpolate(p)}; }
};

/// Incident plane wave exp(i kappa x . d), d = (cos angle, sin angle).
cplx incident(geo::Vec2 x, double kappa, double angle);

/// Cell-centered finite-difference Helmholtz operator for the scattered
/// field on [-1, 1]^2, factorized once; each incidence angle is one solve.
///
/// Interior cells: (psi_E + psi_W + psi_N + psi_S - 4 psi) / h^2
///                 + kappa^2 (1 + q) psi = -kappa^2 q psi_inc.
/// Outer-ring cells: (psi_b - psi_in) / h - i kappa psi_b = 0 with psi_in
/// the inward neighbour; corner rows average the two axis conditions.
class HelmholtzSolver {
 public:
  /// Throws NumericalError when the factorization fails.
  HelmholtzSolver(const geo::GridField& q, double kappa);
  ~HelmholtzSolver();
  HelmholtzSolver(HelmholtzSolver&&) noexcept;
  HelmholtzSolver& operator=(HelmholtzSolver&&) noexcept;

  std::size_t n() const { return n_; }
  std::vector<cplx> rhs(double angle) const;
  std::vector<cplx> solve_rhs(const std::vector<cplx>& b) const;
  /// ||A psi - b|| / ||b||, 0 when b = 0.
  double residual(const std::vector<cplx>& psi, const std::vector<cplx>& b) const;
  /// Throws NumericalError when the relative residual exceeds 1e-10.
  ComplexField solve(double angle, double* residual_out = nullptr) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t n_ = 0;
  double kappa_ = 0.0;
  geo::GridField q_;
};

inline constexpr double kMaxResidual = 1e-10;

ComplexField solve_forward(const geo::GridField& q, double kappa, double angle,
                           double* residual_out = nullptr);

struct SensorArray {
  double radius = 0.5;
  std::vector<geo::Vec2> positions;

  /// count positions at uniformly random angles on the circle.
  static SensorArray random(std::size_t count, double radius, std::uint64_t seed);
};

/// Bilinear samples of psi at the sensor positions.
std::vector<cplx> observe(const ComplexField& psi, const SensorArray& sensors);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle split 8:1:1; val and test get floor(n / 10) each.
Split split_indices(std::size_t n, std::uint64_t seed);

struct DatasetConfig {
  std::size_t n_shapes = 200;
  std::size_t n_angles = 4;
  ScatterConfig scatter;
  geo::Range r0{0.15, 0.35};
  geo::Range amp{0.0, 0.01};
  std::size_t sensor_count = 100;
  double sensor_radius = 0.5;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct ShapeSample {
  std::size_t index = 0;
  geo::FourierShape shape;
  geo::GridField q;
  std::vector<ComplexField> fields;             // one per angle
  std::vector<std::vector<cplx>> observations;  // one per angle
  double max_residual = 0.0;
};

struct Dataset {
  DatasetConfig cfg;
  std::vector<double> angles;
  SensorArray sensors;
  std::vector<ShapeSample> shapes;
  Split split;
};

/// Deterministic given cfg.seed regardless of cfg.jobs.
Dataset gen_dataset(const DatasetConfig& cfg);

/// One directory per shape: shape.csv, q.csv, field_<j>.bin (little-endian
/// n, angle, then n*n real and n*n imaginary parts), observations.csv.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace gano::helm
