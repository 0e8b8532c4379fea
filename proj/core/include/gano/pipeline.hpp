#pragma once

// Glue shared by the command-line tool and the acceptance suite: turning
// datasets into surrogate samples and inversion problems, test-time latent
// fits, and the synthetic-flow training data.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gano/autodiff.hpp"
#include "gano/forces.hpp"
#include "gano/geometry.hpp"
#include "gano/helmholtz.hpp"
#include "gano/optloop.hpp"
#include "gano/stablesdf.hpp"
#include "gano/surrogate.hpp"
#include "gano/synthetic_flow.hpp"

namespace gano::pipeline {

// ---------------------------------------------------------------- Helmholtz

/// Rows [x, y, cos(angle), sin(angle)].
ad::Tensor helm_queries(std::span<const geo::Vec2> points, double angle);

/// count distinct ascending indices below cells.
std::vector<std::size_t> grid_subset(std::size_t cells, std::size_t count, std::uint64_t seed);

/// Queries are the given grid cells followed by the sensors; targets are
/// the scattered field (re, im) at those points.
surrogate::SurrogateSample helm_sample(const helm::Dataset& data, std::size_t shape, std::size_t angle,
                                       std::span<const std::size_t> cells, std::span<const double> z);

/// One query set per angle laid out as in helm_sample, with the shape's
/// sensor observations as targets.
opt::InversionProblem inversion_problem(const helm::Dataset& data, std::size_t shape,
                                        std::span<const std::size_t> cells);

/// Sample generator for train_surrogate: every (shape, angle) pair with a
/// fresh grid subset per epoch. latents[i] belongs to shapes[i]; data must
/// outlive the generator.
surrogate::EpochSamples helm_epoch_samples(const helm::Dataset& data, std::vector<std::size_t> shapes,
                                           std::vector<std::vector<double>> latents, std::size_t grid_queries,
                                           std::uint64_t seed);

// ---------------------------------------------------------------- geometry

std::vector<geo::FourierShape> shapes_of(const helm::Dataset& data, std::span<const std::size_t> indices);

/// n arc-length points on the exact boundary.
std::vector<geo::Vec2> boundary_points(const geo::FourierShape& shape, std::size_t n);

/// n arc-length points on the longest decoded contour; empty when the
/// decoder has no zero level set on the grid.
std::vector<geo::Vec2> decoded_points(const sdf::SdfDecoder& decoder, std::span<const double> z, std::size_t grid,
                                      std::size_t n);

struct LatentFitConfig {
  std::size_t samples = 1024;
  std::size_t steps = 300;
  double lr = 1e-2;
  double lambda = 1e-4;
  std::uint64_t seed = 0;
};

/// Test-time latent of a shape unseen in training; sample stream
/// "fit/shape-<index>".
std::vector<double> fit_shape_latent(const sdf::SdfDecoder& decoder, const geo::FourierShape& shape,
                                     std::size_t index, const LatentFitConfig& cfg);

/// Point-set metrics of the decoded contour against the exact boundary,
/// both resampled to n points.
geo::PointMetrics reconstruction_metrics(const sdf::SdfDecoder& decoder, std::span<const double> z,
                                         const geo::FourierShape& shape, std::size_t grid, double tau,
                                         std::size_t n = 512);

// ---------------------------------------------------------------- flow harness

/// Multiplies the output columns of a model by fixed factors.
class ChannelScale : public surrogate::FieldModel {
 public:
  ChannelScale(const surrogate::FieldModel& inner, std::vector<double> scale);
  std::size_t in_dim() const override { return inner_.in_dim(); }
  std::size_t out_dim() const override { return inner_.out_dim(); }
  std::size_t latent_dim() const override { return inner_.latent_dim(); }
  ad::Var forward(ad::Tape& tape, ad::Var queries, ad::Var z) const override;

 private:
  const surrogate::FieldModel& inner_;
  std::vector<double> scale_;
};

/// (U, U, q_inf): maps normalized (u/U, v/U, p/q_inf) to physical values.
std::vector<double> flow_scale(const flow::FlowParams& params);

/// Queries are the CV boundary followed by surface points of the exact
/// shape; targets are normalized harness fields.
surrogate::SurrogateSample flow_sample(const geo::FourierShape& shape, std::span<const double> z,
                                       const forces::CvSpec& cv, const flow::FlowParams& params,
                                       std::size_t surface_points, std::uint64_t seed);

surrogate::EpochSamples flow_epoch_samples(std::vector<geo::FourierShape> shapes,
                                           std::vector<std::vector<double>> latents, forces::CvSpec cv,
                                           flow::FlowParams params, std::size_t surface_points, std::uint64_t seed);

}  // namespace gano::pipeline
