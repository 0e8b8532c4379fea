#include "gano/pipeline.hpp"

#include <algorithm>
#include <numbers>
#include <numeric>
#include <string>

#include "gano/errors.hpp"
#include "gano/rng.hpp"

namespace gano::pipeline {

using ad::Tensor;

// ---------------------------------------------------------------- Helmholtz

Tensor helm_queries(std::span<const geo::Vec2> points, double angle) {
  Tensor q(points.size(), 4);
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < points.size(); ++i) {
    q(i, 0) = points[i].x;
    q(i, 1) = points[i].y;
    q(i, 2) = c;
    q(i, 3) = s;
  }
  return q;
}

std::vector<std::size_t> grid_subset(std::size_t cells, std::size_t count, std::uint64_t seed) {
  if (count > cells) throw ValidationError("grid_subset: " + std::to_string(count) + " queries exceed " +
                                           std::to_string(cells) + " grid cells");
  std::vector<std::size_t> all(cells);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first count entries are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.index(cells - i)]);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

namespace {

void check_shape_angle(const helm::Dataset& data, std::size_t shape, std::size_t angle) {
  if (shape >= data.shapes.size()) throw ValidationError("shape index " + std::to_string(shape) + " out of range");
  if (angle >= data.angles.size()) throw ValidationError("angle index " + std::to_string(angle) + " out of range");
}

std::vector<geo::Vec2> query_points(const helm::ShapeSample& s, const helm::SensorArray& sensors,
                                    std::span<const std::size_t> cells) {
  const geo::GridField& g = s.fields.front().re;
  std::vector<geo::Vec2> pts;
  pts.reserve(cells.size() + sensors.positions.size());
  for (std::size_t c : cells) {
    if (c >= g.values.size()) throw ValidationError("grid cell " + std::to_string(c) + " out of range");
    pts.push_back(g.point(c % g.nx, c / g.nx));
  }
  pts.insert(pts.end(), sensors.positions.begin(), sensors.positions.end());
  return pts;
}

}  // namespace

surrogate::SurrogateSample helm_sample(const helm::Dataset& data, std::size_t shape, std::size_t angle,
                                       std::span<const std::size_t> cells, std::span<const double> z) {
  check_shape_angle(data, shape, angle);
  const helm::ShapeSample& s = data.shapes[shape];
  const helm::ComplexField& f = s.fields[angle];
  surrogate::SurrogateSample out;
  out.queries = helm_queries(query_points(s, data.sensors, cells), data.angles[angle]);
  out.z.assign(z.begin(), z.end());
  out.target = Tensor(out.queries.rows(), 2);
  std::size_t r = 0;
  for (std::size_t c : cells) {
    out.target(r, 0) = f.re.values[c];
    out.target(r, 1) = f.im.values[c];
    ++r;
  }
  for (const helm::cplx& o : s.observations[angle]) {
    out.target(r, 0) = o.real();
    out.target(r, 1) = o.imag();
    ++r;
  }
  return out;
}

opt::InversionProblem inversion_problem(const helm::Dataset& data, std::size_t shape,
                                        std::span<const std::size_t> cells) {
  check_shape_angle(data, shape, 0);
  const helm::ShapeSample& s = data.shapes[shape];
  const auto pts = query_points(s, data.sensors, cells);
  opt::InversionProblem p;
  for (std::size_t a = 0; a < data.angles.size(); ++a) {
    p.queries.push_back(helm_queries(pts, data.angles[a]));
    p.observations.push_back(s.observations[a]);
  }
  return p;
}

surrogate::EpochSamples helm_epoch_samples(const helm::Dataset& data, std::vector<std::size_t> shapes,
                                           std::vector<std::vector<double>> latents, std::size_t grid_queries,
                                           std::uint64_t seed) {
  if (shapes.size() != latents.size()) throw ValidationError("helm_epoch_samples: one latent per shape required");
  if (data.shapes.empty()) throw ValidationError("helm_epoch_samples: empty dataset");
  const std::size_t cells = data.cfg.scatter.n * data.cfg.scatter.n;
  return [&data, shapes = std::move(shapes), latents = std::move(latents), grid_queries, seed,
          cells](std::size_t epoch) {
    std::vector<surrogate::SurrogateSample> out;
    out.reserve(shapes.size() * data.angles.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      for (std::size_t a = 0; a < data.angles.size(); ++a) {
        const auto sub = grid_subset(cells, grid_queries,
                                     derive_seed(seed, "surrogate/queries/epoch-" + std::to_string(epoch) +
                                                           "/shape-" + std::to_string(shapes[i]) + "/angle-" +
                                                           std::to_string(a)));
        out.push_back(helm_sample(data, shapes[i], a, sub, latents[i]));
      }
    }
    return out;
  };
}

// ---------------------------------------------------------------- geometry

std::vector<geo::FourierShape> shapes_of(const helm::Dataset& data, std::span<const std::size_t> indices) {
  std::vector<geo::FourierShape> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= data.shapes.size()) throw ValidationError("shape index " + std::to_string(i) + " out of range");
    out.push_back(data.shapes[i].shape);
  }
  return out;
}

std::vector<geo::Vec2> boundary_points(const geo::FourierShape& shape, std::size_t n) {
  return geo::resample_arclength(geo::discretize(shape), n).points;
}

std::vector<geo::Vec2> decoded_points(const sdf::SdfDecoder& decoder, std::span<const double> z, std::size_t grid,
                                      std::size_t n) {
  const auto contours = sdf::decode_contours(decoder, z, grid);
  if (contours.empty()) return {};
  return geo::resample_arclength(geo::longest(contours), n).points;
}

std::vector<double> fit_shape_latent(const sdf::SdfDecoder& decoder, const geo::FourierShape& shape,
                                     std::size_t index, const LatentFitConfig& cfg) {
  const auto pairs =
      sdf::sample_training_pairs(shape, cfg.samples, derive_seed(cfg.seed, "fit/shape-" + std::to_string(index)));
  return sdf::fit_latent(decoder, pairs, cfg.steps, cfg.lr, cfg.lambda);
}

geo::PointMetrics reconstruction_metrics(const sdf::SdfDecoder& decoder, std::span<const double> z,
                                         const geo::FourierShape& shape, std::size_t grid, double tau,
                                         std::size_t n) {
  const auto pred = decoded_points(decoder, z, grid, n);
  if (pred.empty()) return {};  // nothing decoded: F1 0
  return geo::metrics(pred, boundary_points(shape, n), tau);
}

// ---------------------------------------------------------------- flow harness

ChannelScale::ChannelScale(const surrogate::FieldModel& inner, std::vector<double> scale)
    : inner_(inner), scale_(std::move(scale)) {
  if (scale_.size() != inner_.out_dim())
    throw ValidationError("ChannelScale: " + std::to_string(scale_.size()) + " factors for " +
                          std::to_string(inner_.out_dim()) + " outputs");
}

ad::Var ChannelScale::forward(ad::Tape& tape, ad::Var queries, ad::Var z) const {
  return ad::mul_row(inner_.forward(tape, queries, z), tape.constant(Tensor::row(scale_)));
}

std::vector<double> flow_scale(const flow::FlowParams& params) {
  return {params.u_inf, params.u_inf, 0.5 * params.rho * params.u_inf * params.u_inf};
}

surrogate::SurrogateSample flow_sample(const geo::FourierShape& shape, std::span<const double> z,
                                       const forces::CvSpec& cv, const flow::FlowParams& params,
                                       std::size_t surface_points, std::uint64_t seed) {
  const flow::FlowModel model = flow::describe(shape, params);
  std::vector<geo::Vec2> pts = cv.all_points();
  Rng rng(seed);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi / static_cast<double>(std::max<std::size_t>(1, surface_points)));
  for (std::size_t k = 0; k < surface_points; ++k)
    pts.push_back(shape.boundary_point(phase + 2.0 * std::numbers::pi * static_cast<double>(k) /
                                                   static_cast<double>(surface_points)));
  const std::vector<double> scale = flow_scale(params);
  surrogate::SurrogateSample out;
  out.queries = Tensor(pts.size(), 2);
  out.target = Tensor(pts.size(), 3);
  out.z.assign(z.begin(), z.end());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.queries(i, 0) = pts[i].x;
    out.queries(i, 1) = pts[i].y;
    const forces::FlowSample f = flow::evaluate(model, pts[i]);
    out.target(i, 0) = f.u / scale[0];
    out.target(i, 1) = f.v / scale[1];
    out.target(i, 2) = f.p / scale[2];
  }
  return out;
}

surrogate::EpochSamples flow_epoch_samples(std::vector<geo::FourierShape> shapes,
                                           std::vector<std::vector<double>> latents, forces::CvSpec cv,
                                           flow::FlowParams params, std::size_t surface_points, std::uint64_t seed) {
  if (shapes.size() != latents.size()) throw ValidationError("flow_epoch_samples: one latent per shape required");
  return [shapes = std::move(shapes), latents = std::move(latents), cv, params, surface_points,
          seed](std::size_t epoch) {
    std::vector<surrogate::SurrogateSample> out;
    out.reserve(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i)
      out.push_back(flow_sample(shapes[i], latents[i], cv, params, surface_points,
                                derive_seed(seed, "flow/epoch-" + std::to_string(epoch) + "/shape-" +
                                                      std::to_string(i))));
    return out;
  };
}

}  // namespace gano::pipeline
