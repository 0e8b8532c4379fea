#include "gano/optloop.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <string>

#include "json.hpp"

#include "gano/adam.hpp"
#include "gano/errors.hpp"

namespace gano::opt {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor points_tensor(std::span<const geo::Vec2> xs) {
  Tensor t(xs.size(), 2);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    t(i, 0) = xs[i].x;
    t(i, 1) = xs[i].y;
  }
  return t;
}

Tensor latent_row(std::span<const double> z) { return Tensor::row(std::vector<double>(z.begin(), z.end())); }

void check_latent(const char* where, std::size_t got, std::size_t want) {
  if (got != want)
    throw ValidationError(std::string(where) + ": latent has " + std::to_string(got) + " entries, expected " +
                          std::to_string(want));
}

void check_finite(const char* where, double value, std::size_t step) {
  if (!std::isfinite(value))
    throw NumericalError(std::string(where) + ": non-finite objective at step " + std::to_string(step));
}

std::vector<double> diff(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

/// lambda |z - z_ref|^2 as a recorded 1 x 1.
Var latent_penalty(Tape& tape, Var z, std::span<const double> z_ref, double lambda) {
  const Var ref = tape.constant(latent_row(z_ref));
  return ad::scale(ad::sum(ad::square(ad::sub(z, ref))), lambda);
}

class ContourTracker {
 public:
  ContourTracker(const sdf::SdfDecoder& decoder, const OptRunConfig& cfg, std::span<const double> z)
      : decoder_(decoder), grid_(cfg.contour_grid), enabled_(cfg.record_geometry) {
    if (enabled_) prev_ = sdf::decode_contours(decoder_, z, grid_);
  }

  /// Hausdorff distance between the previous contour and the contour of z.
  double advance(std::span<const double> z) {
    if (!enabled_) return 0.0;
    auto next = sdf::decode_contours(decoder_, z, grid_);
    double h = std::numeric_limits<double>::infinity();
    if (!prev_.empty() && !next.empty()) h = geo::hausdorff(prev_, next);
    prev_ = std::move(next);
    return h;
  }

 private:
  const sdf::SdfDecoder& decoder_;
  std::size_t grid_;
  bool enabled_;
  std::vector<geo::Polyline> prev_;
};

}  // namespace

// ---------------------------------------------------------------- constraints

Tensor constraint_jacobian(const sdf::SdfDecoder& decoder, const ConstraintSet& constraints,
                           std::span<const double> z) {
  const std::size_t d = decoder.latent_dim();
  check_latent("constraint_jacobian", z.size(), d);
  if (!constraints.reference.empty() && constraints.reference.size() != constraints.points.size())
    throw ValidationError("constraint_jacobian: reference size does not match point count");
  Tensor g(constraints.points.size(), d);
  const auto rows = decoder.eval_with_grad(constraints.points, z);
  for (std::size_t m = 0; m < rows.size(); ++m)
    std::copy(rows[m].grad_z.begin(), rows[m].grad_z.end(), g.row_span(m).begin());
  return g;
}

Tensor nullspace_projector(const Tensor& g, double rank_tol) {
  if (rank_tol < 0.0) throw ValidationError("nullspace_projector: rank_tol must be >= 0");
  const std::size_t d = g.cols();
  if (d == 0) throw ValidationError("nullspace_projector: Jacobian has no columns");
  Tensor p(d, d);
  for (std::size_t i = 0; i < d; ++i) p(i, i) = 1.0;
  if (g.rows() == 0) return p;

  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gm(
      g.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(d));
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(gm, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!std::isfinite(sv(0))) throw NumericalError("nullspace_projector: non-finite singular value");
  if (sv(0) == 0.0) return p;
  const double cutoff = rank_tol * sv(0);
  const Eigen::MatrixXd& v = svd.matrixV();
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) <= cutoff) break;  // singular values are sorted descending
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        p(i, j) -= v(static_cast<Eigen::Index>(i), k) * v(static_cast<Eigen::Index>(j), k);
  }
  return p;
}

std::vector<double> project_gradient(const Tensor& projector, std::span<const double> g) {
  if (projector.rows() != projector.cols() || projector.cols() != g.size())
    throw ValidationError("project_gradient: projector " + projector.shape().str() + " does not match gradient of " +
                          std::to_string(g.size()));
  std::vector<double> out(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = ad::dot(projector.row_span(i), g);
  return out;
}

// ---------------------------------------------------------------- reprojection

ReprojectResult reproject_points(const sdf::SdfDecoder& decoder, std::span<const geo::Vec2> points,
                                 std::span<const double> z, std::size_t iterations, double eps,
                                 std::span<const double> d_ref) {
  check_latent("reproject_points", z.size(), decoder.latent_dim());
  const std::vector<double> zc(z.begin(), z.end());
  const SdfField field = [&decoder, &zc](std::span<const geo::Vec2> xs) {
    std::vector<SdfValue> out;
    out.reserve(xs.size());
    for (const auto& g : decoder.eval_with_grad(xs, zc)) out.push_back({g.s, g.grad_x});
    return out;
  };
  return reproject_points(field, points, iterations, eps, d_ref);
}

ReprojectResult reproject_points(const SdfField& field, std::span<const geo::Vec2> points, std::size_t iterations,
                                 double eps, std::span<const double> d_ref) {
  if (!(eps >= 0.0)) throw ValidationError("reproject_points: eps must be >= 0");
  if (!d_ref.empty() && d_ref.size() != points.size())
    throw ValidationError("reproject_points: d_ref size does not match point count");
  const std::size_t n = points.size();
  ReprojectResult out;
  out.points.assign(points.begin(), points.end());
  out.flagged.assign(n, false);
  auto ref = [&](std::size_t i) { return d_ref.empty() ? 0.0 : d_ref[i]; };

  for (std::size_t k = 0; k <= iterations; ++k) {
    const auto pg = field(out.points);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = pg[i].s - ref(i);
    if (k < iterations) {
      for (std::size_t i = 0; i < n; ++i) {
        if (out.flagged[i]) continue;
        const double denom = pg[i].grad_x.norm2() + eps;
        const geo::Vec2 next = out.points[i] - pg[i].grad_x * (r[i] / denom);
        if (std::isfinite(next.x) && std::isfinite(next.y)) {
          out.points[i] = next;
        } else {
          out.flagged[i] = true;
        }
      }
    }
    out.residuals.push_back(std::move(r));
  }
  return out;
}

SurfaceConstants measure_constants(const sdf::SdfDecoder& decoder, std::span<const geo::Vec2> points,
                                   std::span<const double> z) {
  if (points.empty()) throw ValidationError("measure_constants: no points");
  SurfaceConstants c;
  c.m_hat = std::numeric_limits<double>::infinity();
  for (const auto& g : decoder.eval_with_grad(points, z)) {
    c.m_hat = std::min(c.m_hat, g.grad_x.norm());
    c.lz_hat = std::max(c.lz_hat, ad::norm2(g.grad_z));
  }
  return c;
}

std::vector<geo::Vec2> surface_samples(const sdf::SdfDecoder& decoder, std::span<const double> z, std::size_t n,
                                       std::size_t grid, std::size_t iterations, double eps) {
  if (n == 0) throw ValidationError("surface_samples: n must be >= 1");
  const auto contours = sdf::decode_contours(decoder, z, grid);
  if (contours.empty()) throw NumericalError("surface_samples: decoder has no zero level set in the domain");
  const geo::Polyline line = geo::resample_arclength(geo::longest(contours), n);
  return reproject_points(decoder, line.points, z, iterations, eps).points;
}

// ---------------------------------------------------------------- run record

void RunRecord::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << std::setprecision(17);
  f << "step,objective,grad_norm,constraint_residual,max_abs_sdf,hausdorff,dz_norm,m_hat,lz_hat,extra1,extra2,"
       "backtracks\n";
  for (const auto& s : steps)
    f << s.step << ',' << s.objective << ',' << s.grad_norm << ',' << s.constraint_residual << ','
      << s.max_abs_sdf << ',' << s.hausdorff << ',' << s.dz_norm << ',' << s.m_hat << ',' << s.lz_hat << ','
      << s.extra1 << ',' << s.extra2 << ',' << s.backtracks << '\n';
}

void RunRecord::write_json(const std::filesystem::path& path, const std::string& config_json,
                           std::uint64_t seed) const {
  nlohmann::json j;
  j["kind"] = kind;
  j["seed"] = seed;
  j["steps"] = steps.size();
  j["best_objective"] = best_objective;
  j["best_step"] = best_step;
  if (!steps.empty()) {
    const RunStep& s = steps.back();
    j["final"] = {{"objective", s.objective},     {"grad_norm", s.grad_norm},
                  {"constraint_residual", s.constraint_residual},
                  {"max_abs_sdf", s.max_abs_sdf}, {"hausdorff", s.hausdorff},
                  {"dz_norm", s.dz_norm},         {"m_hat", s.m_hat},
                  {"lz_hat", s.lz_hat},           {"extra1", s.extra1},
                  {"extra2", s.extra2},           {"backtracks", s.backtracks}};
  }
  nlohmann::json summ = nlohmann::json::object();
  for (const auto& [k, v] : summary) summ[k] = v;
  j["summary"] = summ;
  j["config"] = nlohmann::json::parse(config_json.empty() ? "{}" : config_json);
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- inversion

Var sensor_mismatch(const surrogate::FieldModel& model, Tape& tape, const InversionProblem& problem, Var z) {
  if (problem.queries.size() != problem.observations.size() || problem.queries.empty())
    throw ValidationError("sensor_mismatch: need one query set per observation set");
  if (model.out_dim() != 2) throw ValidationError("sensor_mismatch: model must predict (re, im)");
  Var total;
  std::size_t count = 0;
  for (std::size_t a = 0; a < problem.queries.size(); ++a) {
    const Tensor& q = problem.queries[a];
    const auto& obs = problem.observations[a];
    if (obs.empty() || obs.size() > q.rows() || q.cols() != model.in_dim())
      throw ValidationError("sensor_mismatch: query set " + std::to_string(a) + " " + q.shape().str() +
                            " does not fit " + std::to_string(obs.size()) + " sensors");
    const Var f = model.forward(tape, tape.constant(q), z);
    std::vector<std::size_t> rows(obs.size());
    std::iota(rows.begin(), rows.end(), q.rows() - obs.size());
    Tensor target(obs.size(), 2);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      target(i, 0) = obs[i].real();
      target(i, 1) = obs[i].imag();
    }
    const Var e = ad::sum(ad::square(ad::sub(ad::gather_rows(f, std::move(rows)), tape.constant(target))));
    total = total.valid() ? ad::add(total, e) : e;
    count += obs.size();
  }
  return ad::scale(total, 1.0 / static_cast<double>(count));
}

InversionResult invert_shape(const surrogate::FieldModel& model, const sdf::SdfDecoder& decoder,
                             const InversionProblem& problem, std::span<const double> z_init,
                             const OptRunConfig& cfg) {
  const std::size_t d = model.latent_dim();
  check_latent("invert_shape", z_init.size(), d);
  check_latent("invert_shape", decoder.latent_dim(), d);
  if (cfg.steps == 0) throw ValidationError("invert_shape: steps must be >= 1");

  InversionResult out;
  out.z_init.assign(z_init.begin(), z_init.end());
  out.record.kind = "invert";
  std::vector<double> z = out.z_init;
  AdamState adam(d, AdamConfig{.lr = cfg.lr});
  ContourTracker contours(decoder, cfg, z);
  double best = std::numeric_limits<double>::infinity();

  auto evaluate = [&](std::size_t step, std::vector<double>* grad) {
    Tape tape;
    const Var zv = tape.leaf(latent_row(z));
    const Var mis = sensor_mismatch(model, tape, problem, zv);
    const Var j = ad::add(mis, latent_penalty(tape, zv, z_init, cfg.lambda_reg));
    check_finite("invert_shape", j.value().item(), step);
    if (j.value().item() < best) {
      best = j.value().item();
      out.z_best = z;
      out.best_mismatch = mis.value().item();
      out.record.best_step = step;
    }
    if (grad) *grad = tape.backward(j).wrt(zv).values();
    return std::pair{j.value().item(), mis.value().item()};
  };

  std::vector<double> g;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const auto [j, mis] = evaluate(t, &g);
    if (t == 0) out.initial_mismatch = mis;
    const std::vector<double> before = z;
    adam_step(adam, z, g);
    RunStep s;
    s.step = t;
    s.objective = j;
    s.grad_norm = ad::norm2(g);
    s.dz_norm = ad::norm2(diff(z, before));
    s.hausdorff = contours.advance(z);
    s.extra1 = mis;
    out.record.steps.push_back(s);
  }
  evaluate(cfg.steps, nullptr);
  out.record.best_objective = best;
  out.record.summary = {{"initial_mismatch", out.initial_mismatch}, {"best_mismatch", out.best_mismatch}};
  return out;
}

// ---------------------------------------------------------------- field-objective loop

ShapeRunResult optimize_shape(const surrogate::FieldModel& model, const sdf::SdfDecoder& decoder,
                              const FieldObjective& objective, std::span<const double> z0,
                              const ConstraintSet* constraints, const OptRunConfig& cfg) {
  const std::size_t d = decoder.latent_dim();
  check_latent("optimize_shape", z0.size(), d);
  check_latent("optimize_shape", model.latent_dim(), d);
  if (!objective.queries || !objective.objective)
    throw ValidationError("optimize_shape: objective callbacks must be set");
  const bool constrained = constraints != nullptr && !constraints->points.empty();

  ShapeRunResult out;
  out.record.kind = "optimize";
  std::vector<double> z(z0.begin(), z0.end());
  std::vector<geo::Vec2> xs =
      surface_samples(decoder, z, cfg.samples, cfg.contour_grid, cfg.reproject_iters, cfg.eps_proj);
  AdamState adam(d, AdamConfig{.lr = cfg.lr});
  ContourTracker contours(decoder, cfg, z);
  double best = std::numeric_limits<double>::infinity();

  auto evaluate = [&](std::size_t step, std::vector<double>* grad) {
    Tape tape;
    const Var zv = tape.leaf(latent_row(z));
    const Var xv = tape.constant(points_tensor(xs));
    const Var fields = model.forward(tape, objective.queries(tape, xv), zv);
    const Var j = objective.objective(tape, fields, zv, xv);
    const double value = j.value().item();
    check_finite("optimize_shape", value, step);
    if (value < best) {
      best = value;
      out.z_best = z;
      out.record.best_step = step;
    }
    if (grad) *grad = tape.backward(j).wrt(zv).values();
    return value;
  };

  std::vector<double> g;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    RunStep s;
    s.step = t;
    s.objective = evaluate(t, &g);
    s.grad_norm = ad::norm2(g);

    std::vector<double> g_safe = g;
    Tensor p;
    if (constrained) {
      const Tensor gm = constraint_jacobian(decoder, *constraints, z);
      p = nullspace_projector(gm, cfg.rank_tol);
      g_safe = project_gradient(p, g);
      std::vector<double> r(gm.rows());
      for (std::size_t m = 0; m < gm.rows(); ++m) r[m] = ad::dot(gm.row_span(m), g_safe);
      s.constraint_residual = ad::norm2(r);
    }
    std::vector<double> z_next = z;
    adam_step(adam, z_next, g_safe);
    std::vector<double> dz = diff(z_next, z);
    if (constrained && cfg.project_update) dz = project_gradient(p, dz);

    ReprojectResult rp;
    for (;;) {
      for (std::size_t i = 0; i < d; ++i) z_next[i] = z[i] + dz[i];
      rp = reproject_points(decoder, xs, z_next, cfg.reproject_iters, cfg.eps_proj);
      s.max_abs_sdf = 0.0;
      for (double r : rp.residuals.back()) s.max_abs_sdf = std::max(s.max_abs_sdf, std::fabs(r));
      const bool lost = !(s.max_abs_sdf <= cfg.surface_tol) ||
                        std::find(rp.flagged.begin(), rp.flagged.end(), true) != rp.flagged.end();
      if (!lost || s.backtracks == cfg.max_backtracks) break;
      for (double& v : dz) v *= 0.5;
      ++s.backtracks;
    }
    s.dz_norm = ad::norm2(dz);
    z = std::move(z_next);
    xs = rp.points;
    const SurfaceConstants c = measure_constants(decoder, xs, z);
    s.m_hat = c.m_hat;
    s.lz_hat = c.lz_hat;
    s.hausdorff = contours.advance(z);
    out.record.steps.push_back(s);
  }
  evaluate(cfg.steps, nullptr);
  out.record.best_objective = best;
  out.z_final = z;
  out.points = xs;
  return out;
}

// ---------------------------------------------------------------- control-volume loop

AirfoilRunResult optimize_airfoil_style(const surrogate::FieldModel& model, const sdf::SdfDecoder& decoder,
                                        const forces::CvSpec& cv, std::span<const double> z0,
                                        const OptRunConfig& cfg) {
  cv.validate();
  const std::size_t d = decoder.latent_dim();
  check_latent("optimize_airfoil_style", z0.size(), d);
  check_latent("optimize_airfoil_style", model.latent_dim(), d);
  if (model.in_dim() != 2 || model.out_dim() != 3)
    throw ValidationError("optimize_airfoil_style: model must map (x, y) to (u, v, p)");

  AirfoilRunResult out;
  out.record.kind = "optimize-cv";
  std::vector<double> z(z0.begin(), z0.end());
  std::vector<geo::Vec2> xs =
      surface_samples(decoder, z, cfg.samples, cfg.contour_grid, cfg.reproject_iters, cfg.eps_proj);
  const std::vector<double> d_ref = decoder.eval(xs, z);
  const std::vector<geo::Vec2> cv_points = cv.all_points();
  const std::size_t n = cv.samples_per_side;
  AdamState adam(d, AdamConfig{.lr = cfg.lr});
  ContourTracker contours(decoder, cfg, z);
  double best = std::numeric_limits<double>::infinity();

  auto side = [n](Var f, std::size_t k) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), k * n);
    return ad::gather_rows(f, std::move(rows));
  };

  struct Eval {
    double j, cl, cd;
  };
  auto evaluate = [&](std::size_t step, std::vector<double>* grad) {
    Tape tape;
    const Var zv = tape.leaf(latent_row(z));
    std::vector<geo::Vec2> q = cv_points;
    q.insert(q.end(), xs.begin(), xs.end());
    const Var f = model.forward(tape, tape.constant(points_tensor(q)), zv);
    const Var force = forces::cv_forces(side(f, 0), side(f, 1), side(f, 2), side(f, 3), cv.dx(), cv.dy(), cv.rho);
    const Var coeffs = forces::aero_coeffs(force, cv.alpha(), cv.q_inf, cv.chord);
    const Var j = ad::add(forces::aero_objective(coeffs, cfg.cd_max, cfg.lambda_cd, cfg.squared_hinge),
                          latent_penalty(tape, zv, z0, cfg.lambda_reg));
    const Eval e{j.value().item(), coeffs.value()[0], coeffs.value()[1]};
    check_finite("optimize_airfoil_style", e.j, step);
    if (e.j < best) {
      best = e.j;
      out.z_best = z;
      out.cl_best = e.cl;
      out.cd_best = e.cd;
      out.record.best_step = step;
    }
    if (grad) *grad = tape.backward(j).wrt(zv).values();
    return e;
  };

  std::vector<double> g;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const Eval e = evaluate(t, &g);
    RunStep s;
    s.step = t;
    s.objective = e.j;
    s.extra1 = e.cl;
    s.extra2 = e.cd;
    s.grad_norm = ad::norm2(g);
    const std::vector<double> before = z;
    adam_step(adam, z, g);
    s.dz_norm = ad::norm2(diff(z, before));

    const ReprojectResult rp = reproject_points(decoder, xs, z, cfg.reproject_iters, cfg.eps_proj, d_ref);
    xs = rp.points;
    for (double r : rp.residuals.back()) s.max_abs_sdf = std::max(s.max_abs_sdf, std::fabs(r));
    const SurfaceConstants c = measure_constants(decoder, xs, z);
    s.m_hat = c.m_hat;
    s.lz_hat = c.lz_hat;
    s.hausdorff = contours.advance(z);
    out.record.steps.push_back(s);
  }
  evaluate(cfg.steps, nullptr);
  out.record.best_objective = best;
  out.record.summary = {{"cl_best", out.cl_best}, {"cd_best", out.cd_best}};
  out.points = xs;
  return out;
}

// ---------------------------------------------------------------- checks

GradMismatch check_grad_mismatch(const sdf::SdfDecoder& decoder, const SampleObjective& objective,
                                 std::span<const double> z, std::span<const geo::Vec2> samples,
                                 std::size_t iterations, double eps, double fd_step) {
  const std::size_t d = decoder.latent_dim();
  check_latent("check_grad_mismatch", z.size(), d);
  if (samples.empty()) throw ValidationError("check_grad_mismatch: no samples");
  if (!(fd_step > 0.0)) throw ValidationError("check_grad_mismatch: fd_step must be > 0");

  GradMismatch out;
  const Tensor x0 = points_tensor(samples);
  {
    Tape tape;
    const Var zv = tape.leaf(latent_row(z));
    const Var j = objective(tape, zv, tape.constant(x0));
    out.detached = tape.backward(j).wrt(zv).values();
  }
  {
    Tape tape;
    const Var xv = tape.leaf(x0);
    const Var j = objective(tape, tape.constant(latent_row(z)), xv);
    out.grad_x_norm = ad::norm2(tape.backward(j).wrt(xv).values());
  }
  auto value_at = [&](const std::vector<double>& zp) {
    const auto xp = reproject_points(decoder, samples, zp, iterations, eps).points;
    Tape tape;
    return objective(tape, tape.constant(latent_row(zp)), tape.constant(points_tensor(xp))).value().item();
  };
  out.full_fd.resize(d);
  std::vector<double> zp(z.begin(), z.end());
  for (std::size_t k = 0; k < d; ++k) {
    zp[k] = z[k] + fd_step;
    const double jp = value_at(zp);
    zp[k] = z[k] - fd_step;
    const double jm = value_at(zp);
    zp[k] = z[k];
    out.full_fd[k] = (jp - jm) / (2.0 * fd_step);
  }
  out.mismatch = ad::norm2(diff(out.full_fd, out.detached));
  const SurfaceConstants c = measure_constants(decoder, samples, z);
  out.m_hat = c.m_hat;
  out.lz_hat = c.lz_hat;
  out.bound = std::sqrt(static_cast<double>(samples.size())) * (c.lz_hat / c.m_hat) * out.grad_x_norm;
  return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("loglog_slope: need >= 2 matched points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ValidationError("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  const double n = static_cast<double>(x.size());
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw ValidationError("loglog_slope: x values are all equal");
  return sxy / sxx;
}

DriftScaling constraint_drift_scaling(const sdf::SdfDecoder& decoder, const ConstraintSet& constraints,
                                      std::span<const double> z, std::span<const double> direction,
                                      std::span<const double> step_sizes, double rank_tol) {
  const std::size_t d = decoder.latent_dim();
  check_latent("constraint_drift_scaling", z.size(), d);
  check_latent("constraint_drift_scaling", direction.size(), d);
  if (constraints.points.empty()) throw ValidationError("constraint_drift_scaling: no constraint points");
  const Tensor p = nullspace_projector(constraint_jacobian(decoder, constraints, z), rank_tol);
  const std::vector<double> pg = project_gradient(p, direction);
  const std::vector<double> s0 = decoder.eval(constraints.points, z);

  DriftScaling out;
  out.step_sizes.assign(step_sizes.begin(), step_sizes.end());
  std::vector<double> zs(d);
  for (double eta : step_sizes) {
    for (std::size_t i = 0; i < d; ++i) zs[i] = z[i] - eta * pg[i];
    const std::vector<double> s = decoder.eval(constraints.points, zs);
    double drift = 0.0;
    for (std::size_t m = 0; m < s.size(); ++m) drift = std::max(drift, std::fabs(s[m] - s0[m]));
    out.drifts.push_back(drift);
  }
  out.slope = loglog_slope(out.step_sizes, out.drifts);
  return out;
}

ContractionStats contraction_stats(const ReprojectResult& result, double tol, double threshold,
                                   std::size_t fit_steps, double floor) {
  if (result.residuals.empty()) throw ValidationError("contraction_stats: no residual history");
  ContractionStats out;
  const std::size_t n = result.points.size();
  const std::size_t last = result.residuals.size() - 1;
  std::vector<double> a, b;
  for (std::size_t k = 0; k < std::min(fit_steps, last); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (result.flagged[i]) continue;
      const double rk = std::fabs(result.residuals[k][i]);
      const double rn = std::fabs(result.residuals[k + 1][i]);
      if (rk > 0.0 && rk < threshold && rn > floor) {
        a.push_back(rk);
        b.push_back(rn);
      }
    }
  }
  out.pairs = a.size();
  out.slope = a.size() >= 2 ? loglog_slope(a, b) : std::numeric_limits<double>::quiet_NaN();
  std::size_t ok = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!result.flagged[i] && std::fabs(result.residuals[last][i]) < tol) ++ok;
  out.success_rate = n == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(n);
  return out;
}

}  // namespace gano::opt
