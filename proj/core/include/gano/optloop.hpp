#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gano/autodiff.hpp"
#include "gano/forces.hpp"
#include "gano/geometry.hpp"
#include "gano/stablesdf.hpp"
#include "gano/surrogate.hpp"

namespace gano::opt {

/// Protected points; reference holds one target SDF value per point or is
/// empty (targets 0).
struct ConstraintSet {
  std::vector<geo::Vec2> points;
  std::vector<double> reference;
};

struct OptRunConfig {
  std::size_t steps = 50;            // T
  std::size_t reproject_iters = 5;   // K
  double eps_proj = 1e-8;
  double lr = 5e-3;
  double lambda_reg = forces::kDefaultLambdaReg;
  double lambda_cd = forces::kDefaultLambdaCd;
  double cd_max = forces::kDefaultCdMax;
  bool squared_hinge = true;
  double rank_tol = 1e-10;
  std::size_t samples = 256;         // N surface samples
  std::size_t contour_grid = 128;    // marching-squares resolution
  bool record_geometry = true;       // contour Hausdorff per step
  bool project_update = true;        // also project the Adam step itself
  // optimize_shape halves a step whose reprojected samples stay farther than
  // surface_tol from the zero set, at most max_backtracks times.
  double surface_tol = 1e-6;
  std::size_t max_backtracks = 8;    // 0 disables the guard
  std::uint64_t seed = 0;
};

/// Row m is grad_z s(x_m, z); M x d (0 x d when there are no points).
ad::Tensor constraint_jacobian(const sdf::SdfDecoder& decoder, const ConstraintSet& constraints,
                               std::span<const double> z);

/// I - V_r V_r^T over right singular vectors with sigma > rank_tol * sigma_max;
/// d x d with d = G.cols().
ad::Tensor nullspace_projector(const ad::Tensor& g, double rank_tol = 1e-10);

std::vector<double> project_gradient(const ad::Tensor& projector, std::span<const double> g);

struct ReprojectResult {
  std::vector<geo::Vec2> points;
  /// residuals[k][i] = s(x_i^k, z) - d_ref_i for iterates k = 0..K.
  std::vector<std::vector<double>> residuals;
  /// Points that produced a non-finite step; left at their last finite position.
  std::vector<bool> flagged;
};

struct SdfValue {
  double s = 0.0;
  geo::Vec2 grad_x;
};
/// Values and spatial gradients of a signed distance field at a batch of points.
using SdfField = std::function<std::vector<SdfValue>(std::span<const geo::Vec2>)>;

/// K damped Gauss-Newton steps x <- x - (s - d_ref) grad_x s / (|grad_x s|^2 + eps)
/// toward the level set s = d_ref (0 when d_ref is empty). Runs on its own
/// tapes and records nothing on any caller tape.
ReprojectResult reproject_points(const sdf::SdfDecoder& decoder, std::span<const geo::Vec2> points,
                                 std::span<const double> z, std::size_t iterations, double eps,
                                 std::span<const double> d_ref = {});
/// Same iteration on an arbitrary field.
ReprojectResult reproject_points(const SdfField& field, std::span<const geo::Vec2> points, std::size_t iterations,
                                 double eps, std::span<const double> d_ref = {});

/// min |grad_x s| and max |grad_z s| over the given points.
struct SurfaceConstants {
  double m_hat = 0.0;
  double lz_hat = 0.0;
};
SurfaceConstants measure_constants(const sdf::SdfDecoder& decoder, std::span<const geo::Vec2> points,
                                   std::span<const double> z);

/// Marching-squares contour of z resampled to n arc-length points and
/// reprojected onto the zero set.
std::vector<geo::Vec2> surface_samples(const sdf::SdfDecoder& decoder, std::span<const double> z, std::size_t n,
                                       std::size_t grid, std::size_t iterations, double eps);

struct RunStep {
  std::size_t step = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double constraint_residual = 0.0;  // |G g_safe|
  double max_abs_sdf = 0.0;          // after reprojection
  double hausdorff = 0.0;            // contour drift over the step
  double dz_norm = 0.0;
  double m_hat = 0.0;
  double lz_hat = 0.0;
  double extra1 = 0.0;               // loop-specific (C_L, sensor mismatch)
  double extra2 = 0.0;               // loop-specific (C_D)
  std::size_t backtracks = 0;        // step halvings by the surface guard
};

struct RunRecord {
  std::string kind;
  std::vector<RunStep> steps;
  double best_objective = 0.0;
  std::size_t best_step = 0;
  std::vector<std::pair<std::string, double>> summary;

  /// One row per step.
  void write_csv(const std::filesystem::path& path) const;
  /// Final metrics, summary values, and the config echo (JSON text).
  void write_json(const std::filesystem::path& path, const std::string& config_json = "{}",
                  std::uint64_t seed = 0) const;
};

// ---------------------------------------------------------------- inversion

using cplx = std::complex<double>;

/// One query set per incidence angle; the last observations[a].size() rows
/// of queries[a] are the sensors.
struct InversionProblem {
  std::vector<ad::Tensor> queries;
  std::vector<std::vector<cplx>> observations;
};

/// Mean squared complex mismatch over all angles and sensors.
ad::Var sensor_mismatch(const surrogate::FieldModel& model, ad::Tape& tape, const InversionProblem& problem,
                        ad::Var z);

struct InversionResult {
  std::vector<double> z_best;
  std::vector<double> z_init;
  double initial_mismatch = 0.0;
  double best_mismatch = 0.0;
  RunRecord record;
};

/// Adam on mean squared sensor mismatch + lambda_reg |z - z_init|^2; returns
/// the best-objective iterate. Throws NumericalError naming the step on a
/// non-finite objective. The decoder is only used for geometry logging.
InversionResult invert_shape(const surrogate::FieldModel& model, const sdf::SdfDecoder& decoder,
                             const InversionProblem& problem, std::span<const double> z_init,
                             const OptRunConfig& cfg);

// ---------------------------------------------------------------- field-objective loop

/// Builds model queries from the N x 2 surface samples and scores the
/// predicted fields.
struct FieldObjective {
  std::function<ad::Var(ad::Tape&, ad::Var samples)> queries;
  std::function<ad::Var(ad::Tape&, ad::Var fields, ad::Var z, ad::Var samples)> objective;
};

struct ShapeRunResult {
  std::vector<double> z_best;
  std::vector<double> z_final;
  std::vector<geo::Vec2> points;
  RunRecord record;
};

/// Predict, score, project the latent gradient onto the constraint null space
/// (when constraints are given), Adam step, reproject the samples. A step
/// after which the samples cannot be reprojected onto the zero set is halved
/// (see OptRunConfig::max_backtracks), keeping |dz| inside the regime where
/// the surface persists.
ShapeRunResult optimize_shape(const surrogate::FieldModel& model, const sdf::SdfDecoder& decoder,
                              const FieldObjective& objective, std::span<const double> z0,
                              const ConstraintSet* constraints, const OptRunConfig& cfg);

// ---------------------------------------------------------------- control-volume loop

struct AirfoilRunResult {
  std::vector<double> z_best;
  std::vector<geo::Vec2> points;
  double cl_best = 0.0;
  double cd_best = 0.0;
  RunRecord record;
};

/// The model maps (x, y) queries to gauge (u, v, p). Queries are the fixed
/// control-volume boundary followed by the moving surface samples; samples
/// are reprojected to their initial SDF offsets after every step.
AirfoilRunResult optimize_airfoil_style(const surrogate::FieldModel& model, const sdf::SdfDecoder& decoder,
                                        const forces::CvSpec& cv, std::span<const double> z0,
                                        const OptRunConfig& cfg);

// ---------------------------------------------------------------- checks

/// Scalar objective of the latent and the N x 2 sample positions.
using SampleObjective = std::function<ad::Var(ad::Tape&, ad::Var z, ad::Var samples)>;

struct GradMismatch {
  std::vector<double> detached;
  std::vector<double> full_fd;
  double mismatch = 0.0;   // |full_fd - detached|
  double bound = 0.0;      // sqrt(N) (lz_hat / m_hat) |grad_X J|
  double m_hat = 0.0;
  double lz_hat = 0.0;
  double grad_x_norm = 0.0;
};

/// Detached latent gradient against central differences of z -> J(z, X(z))
/// with X(z) re-projected from samples for every probe.
GradMismatch check_grad_mismatch(const sdf::SdfDecoder& decoder, const SampleObjective& objective,
                                 std::span<const double> z, std::span<const geo::Vec2> samples,
                                 std::size_t iterations, double eps, double fd_step = 1e-5);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct DriftScaling {
  std::vector<double> step_sizes;
  std::vector<double> drifts;  // max_m |s(x_m, z - eta P g) - s(x_m, z)|
  double slope = 0.0;
};

/// Constraint drift of projected steps of decreasing size.
DriftScaling constraint_drift_scaling(const sdf::SdfDecoder& decoder, const ConstraintSet& constraints,
                                      std::span<const double> z, std::span<const double> direction,
                                      std::span<const double> step_sizes, double rank_tol = 1e-10);

struct ContractionStats {
  double slope = 0.0;          // log|s_{k+1}| against log|s_k| for |s_k| < threshold
  std::size_t pairs = 0;
  double success_rate = 0.0;   // share of points with |s| < tol after K steps
};

/// Contraction of Gauss-Newton residuals over the first fit_steps
/// iterations. Pairs whose next residual is below floor are excluded.
ContractionStats contraction_stats(const ReprojectResult& result, double tol, double threshold = 0.01,
                                   std::size_t fit_steps = 3, double floor = 1e-12);

}  // namespace gano::opt
