#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <thread>

#include "cli/manifest.hpp"
#include "gano/errors.hpp"
#include "gano/forces.hpp"
#include "gano/geometry.hpp"
#include "gano/helmholtz.hpp"
#include "gano/optloop.hpp"
#include "gano/pipeline.hpp"
#include "gano/rng.hpp"
#include "gano/stablesdf.hpp"
#include "gano/surrogate.hpp"
#include "gano/synthetic_flow.hpp"

namespace fs = std::filesystem;

namespace gano::cli {
namespace {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void note(const std::string& msg) {
  std::fprintf(stderr, "%s\n", msg.c_str());
  std::fflush(stderr);
}

/// fn(i) for i < n on up to jobs threads; results are placed by index, so the
/// output does not depend on jobs.
template <class T, class F>
std::vector<T> parallel_map(std::size_t n, std::size_t jobs, F fn) {
  std::vector<T> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(jobs, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------- inputs

fs::path sdf_checkpoint(const fs::path& dir) { return dir / "sdf.ckpt"; }
fs::path surrogate_checkpoint(const fs::path& dir) { return dir / "surrogate.ckpt"; }

helm::Dataset load_data(const Context& ctx) {
  if (!fs::exists(ctx.data / "dataset.json"))
    throw ValidationError("missing dataset at " + ctx.data.string() + " (run gen-data first)");
  return helm::load_dataset(ctx.data);
}

sdf::SdfModel load_sdf_model(const fs::path& dir) {
  if (!fs::exists(sdf_checkpoint(dir)))
    throw ValidationError("missing prerequisite checkpoint " + sdf_checkpoint(dir).string() + " (run train-sdf first)");
  return sdf::load_sdf(sdf_checkpoint(dir));
}

surrogate::Surrogate load_surrogate_model(const fs::path& dir) {
  if (!fs::exists(surrogate_checkpoint(dir)))
    throw ValidationError("missing prerequisite checkpoint " + surrogate_checkpoint(dir).string() +
                          " (run train-surrogate first)");
  return surrogate::load_surrogate(surrogate_checkpoint(dir));
}

bool is_flow_model(const surrogate::Surrogate& m) { return m.in_dim() == 2 && m.out_dim() == 3; }

/// Latents of the held-out shapes: read from the train-sdf output when it
/// covers the requested count, fitted otherwise.
struct TestLatents {
  std::vector<std::size_t> indices;  // dataset indices
  std::vector<std::vector<double>> codes;
};

TestLatents fit_test_latents(const Context& ctx, const helm::Dataset& data, const sdf::SdfDecoder& decoder,
                             std::size_t count) {
  TestLatents t;
  count = std::min(count, data.split.test.size());
  t.indices.assign(data.split.test.begin(), data.split.test.begin() + static_cast<std::ptrdiff_t>(count));
  const auto cfg = latent_fit_config(ctx.cfg);
  t.codes = parallel_map<std::vector<double>>(count, ctx.jobs, [&](std::size_t k) {
    return pipeline::fit_shape_latent(decoder, data.shapes[t.indices[k]].shape, t.indices[k], cfg);
  });
  return t;
}

TestLatents test_latents(const Context& ctx, const helm::Dataset& data, const sdf::SdfDecoder& decoder,
                         std::size_t count) {
  const fs::path path = ctx.sdf / "test_latents.json";
  if (fs::exists(path)) {
    std::ifstream in(path);
    const json j = json::parse(in);
    TestLatents t{j.at("indices").get<std::vector<std::size_t>>(), j.at("codes").get<std::vector<std::vector<double>>>()};
    if (t.codes.size() >= std::min(count, data.split.test.size())) {
      t.indices.resize(std::min(count, t.indices.size()));
      t.codes.resize(t.indices.size());
      return t;
    }
  }
  return fit_test_latents(ctx, data, decoder, count);
}

std::vector<std::vector<double>> training_codes(const sdf::SdfModel& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < m.latents.size(); ++i) out.push_back(m.latents.code(i));
  return out;
}

// ---------------------------------------------------------------- outputs

void write_points(const fs::path& path, const std::vector<geo::Vec2>& pts) {
  std::ofstream f(path);
  f << std::setprecision(17) << "x,y\n";
  for (const auto& p : pts) f << p.x << ',' << p.y << '\n';
}

void write_json(const fs::path& path, const json& j) { std::ofstream(path) << j.dump(2) << '\n'; }

struct Stats {
  double mean = 0.0, min = 0.0, max = 0.0;
};

Stats stats(const std::vector<double>& v) {
  if (v.empty()) return {};
  return {std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()), *std::min_element(v.begin(), v.end()),
          *std::max_element(v.begin(), v.end())};
}

json to_json(const Stats& s) { return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}}; }

/// Reconstruction metrics of the held-out latents against the exact shapes.
json reconstruction_report(const Context& ctx, const helm::Dataset& data, const sdf::SdfDecoder& decoder,
                           const TestLatents& t) {
  const std::size_t grid = ctx.cfg.at("stablesdf").at("eval_grid");
  const double tau = 2.0 * 2.0 / double(grid);
  const auto metrics = parallel_map<geo::PointMetrics>(t.indices.size(), ctx.jobs, [&](std::size_t k) {
    return pipeline::reconstruction_metrics(decoder, t.codes[k], data.shapes[t.indices[k]].shape, grid, tau);
  });
  std::vector<double> f1, chamfer, emd;
  for (const auto& m : metrics) {
    f1.push_back(m.f1);
    chamfer.push_back(m.chamfer);
    if (m.has_emd) emd.push_back(m.emd);
  }
  return {{"shapes", t.indices.size()},
          {"tau", tau},
          {"f1", to_json(stats(f1))},
          {"chamfer", to_json(stats(chamfer))},
          {"emd", to_json(stats(emd))}};
}

double rel_l2(const Tensor& pred, const Tensor& target) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.values().size(); ++i) {
    num += std::pow(pred.values()[i] - target.values()[i], 2);
    den += std::pow(target.values()[i], 2);
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

std::vector<std::size_t> helm_cells(const Context& ctx, const helm::Dataset& data, const std::string& stream) {
  const std::size_t n = data.cfg.scatter.n;
  return pipeline::grid_subset(n * n, ctx.cfg.at("surrogate").at("grid_queries"),
                               derive_seed(ctx.cfg.at("seed"), stream));
}

/// Held-out relative L2 of the Helmholtz surrogate over every angle.
json helm_surrogate_report(const Context& ctx, const helm::Dataset& data, const surrogate::Surrogate& model,
                           const TestLatents& t) {
  const auto cells = helm_cells(ctx, data, "eval/cells");
  std::vector<double> err;
  for (std::size_t k = 0; k < t.indices.size(); ++k)
    for (std::size_t a = 0; a < data.angles.size(); ++a) {
      const auto s = pipeline::helm_sample(data, t.indices[k], a, cells, t.codes[k]);
      err.push_back(rel_l2(model.predict(s.queries, s.z), s.target));
    }
  return {{"task", "helmholtz"}, {"samples", err.size()}, {"rel_l2", to_json(stats(err))}};
}

/// Held-out relative L2 of the flow surrogate and the error of the control-
/// volume coefficients computed from its predictions.
json flow_surrogate_report(const Context& ctx, const helm::Dataset& data, const surrogate::Surrogate& model,
                           const TestLatents& t) {
  const forces::CvSpec cv = cv_spec(ctx.cfg);
  const flow::FlowParams params = flow_params(ctx.cfg);
  const std::size_t surface = ctx.cfg.at("surrogate").at("surface_points");
  const pipeline::ChannelScale physical(model, pipeline::flow_scale(params));
  std::vector<double> err, dcl, dcd;
  for (std::size_t k = 0; k < t.indices.size(); ++k) {
    const auto& shape = data.shapes[t.indices[k]].shape;
    const auto s = pipeline::flow_sample(shape, t.codes[k], cv, params, surface,
                                         derive_seed(ctx.cfg.at("seed"), "eval/flow-" + std::to_string(k)));
    err.push_back(rel_l2(model.predict(s.queries, s.z), s.target));
    Tape tape;
    const std::size_t m = cv.samples_per_side;
    const Var q = tape.constant(s.queries);
    const Var f = physical.forward(tape, q, tape.constant(Tensor(1, s.z.size(), s.z)));
    const auto side = [&](std::size_t i) {
      std::vector<std::size_t> rows(m);
      std::iota(rows.begin(), rows.end(), i * m);
      return ad::gather_rows(f, rows);
    };
    const Var c = forces::aero_coeffs(forces::cv_forces(side(0), side(1), side(2), side(3), cv.dx(), cv.dy(), cv.rho),
                                      cv.alpha(), cv.q_inf, cv.chord);
    const auto ref = flow::reference_coeffs(flow::describe(shape, params));
    dcl.push_back(std::fabs(c.value()[0] - ref.cl));
    dcd.push_back(std::fabs(c.value()[1] - ref.cd));
  }
  return {{"task", "flow"},
          {"samples", err.size()},
          {"rel_l2", to_json(stats(err))},
          {"cl_abs_error", to_json(stats(dcl))},
          {"cd_abs_error", to_json(stats(dcd))}};
}

}  // namespace

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const Context& ctx) {
  Manifest manifest("gen-data", ctx.cfg);
  helm::DatasetConfig cfg = dataset_config(ctx.cfg);
  cfg.jobs = ctx.jobs;
  // Generated in memory first so a bad config leaves no partial output.
  const helm::Dataset data = helm::gen_dataset(cfg);
  prepare_output(ctx.out, ctx.force);
  helm::save_dataset(ctx.out, data);
  double worst = 0.0;
  for (const auto& s : data.shapes) worst = std::max(worst, s.max_residual);
  write_json(ctx.out / "metrics.json", {{"shapes", data.shapes.size()},
                                        {"angles", data.angles.size()},
                                        {"train", data.split.train.size()},
                                        {"val", data.split.val.size()},
                                        {"test", data.split.test.size()},
                                        {"max_residual", worst}});
  manifest.write(ctx.out);
  std::printf("gen-data: %zu shapes, %zu angles, split %zu/%zu/%zu, max residual %.3g -> %s\n", data.shapes.size(),
              data.angles.size(), data.split.train.size(), data.split.val.size(), data.split.test.size(), worst,
              ctx.out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------- train-sdf

int cmd_train_sdf(const Context& ctx) {
  const helm::Dataset data = load_data(ctx);
  Manifest manifest("train-sdf", ctx.cfg, {ctx.data});
  const fs::path ckpt = sdf_checkpoint(ctx.out);
  std::optional<sdf::SdfModel> resume;
  if (ctx.resume && fs::exists(ckpt)) {
    resume = sdf::load_sdf(ckpt);
    manifest.add_input(ckpt);
  }
  prepare_output(ctx.out, ctx.force, resume.has_value());
  const auto cfg = sdf_train_config(ctx.cfg);
  std::ofstream curve(ctx.out / "training.csv", resume ? std::ios::app : std::ios::trunc);
  if (!resume) curve << "epoch,loss\n";
  curve << std::setprecision(17);
  const sdf::SdfModel model = sdf::train_stablesdf(
      pipeline::shapes_of(data, data.split.train), cfg, decoder_config(ctx.cfg),
      [&](std::size_t epoch, double loss) {
        curve << epoch << ',' << loss << '\n' << std::flush;
        if ((epoch + 1) % 10 == 0) note("train-sdf: epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(loss));
      },
      resume ? &*resume : nullptr);
  sdf::save_sdf(ckpt, model);

  const TestLatents t = fit_test_latents(ctx, data, model.decoder, ctx.cfg.at("stablesdf").at("eval_shapes"));
  write_json(ctx.out / "test_latents.json", {{"indices", t.indices}, {"codes", t.codes}});
  json metrics{{"epochs_done", model.epochs_done}, {"held_out", reconstruction_report(ctx, data, model.decoder, t)}};
  write_json(ctx.out / "metrics.json", metrics);
  manifest.write(ctx.out);
  std::printf("train-sdf: %zu epochs, held-out F1 %.4f (min %.4f) -> %s\n", model.epochs_done,
              metrics["held_out"]["f1"]["mean"].get<double>(), metrics["held_out"]["f1"]["min"].get<double>(),
              ckpt.string().c_str());
  return 0;
}

// ---------------------------------------------------------------- train-surrogate

int cmd_train_surrogate(const Context& ctx) {
  const helm::Dataset data = load_data(ctx);
  const sdf::SdfModel sdf_model = load_sdf_model(ctx.sdf);
  const std::string task = ctx.cfg.at("surrogate").at("task");
  if (task != "helmholtz" && task != "flow")
    throw ValidationError("config: surrogate.task must be \"helmholtz\" or \"flow\"");
  Manifest manifest("train-surrogate", ctx.cfg, {ctx.data, sdf_checkpoint(ctx.sdf)});
  const fs::path ckpt = surrogate_checkpoint(ctx.out);
  std::uint64_t start = 0;
  std::optional<surrogate::Surrogate> resume;
  if (ctx.resume && fs::exists(ckpt)) {
    resume = surrogate::load_surrogate(ckpt, &start);
    manifest.add_input(ckpt);
  }
  prepare_output(ctx.out, ctx.force, resume.has_value());
  surrogate::Surrogate model =
      resume ? std::move(*resume)
             : surrogate::Surrogate(surrogate_config(ctx.cfg, task), derive_seed(ctx.cfg.at("seed"), "surrogate/init"));
  const auto cfg = surrogate_train_config(ctx.cfg);
  const std::uint64_t sample_seed = derive_seed(ctx.cfg.at("seed"), "surrogate/samples");
  const surrogate::EpochSamples samples =
      task == "flow" ? pipeline::flow_epoch_samples(pipeline::shapes_of(data, data.split.train),
                                                    training_codes(sdf_model), cv_spec(ctx.cfg), flow_params(ctx.cfg),
                                                    ctx.cfg.at("surrogate").at("surface_points"), sample_seed)
                     : pipeline::helm_epoch_samples(data, data.split.train, training_codes(sdf_model),
                                                    ctx.cfg.at("surrogate").at("grid_queries"), sample_seed);
  std::ofstream curve(ctx.out / "training.csv", resume ? std::ios::app : std::ios::trunc);
  if (!resume) curve << "epoch,loss\n";
  curve << std::setprecision(17);
  const std::size_t done = surrogate::train_surrogate(
      model, samples, cfg,
      [&](std::size_t epoch, double loss) {
        curve << epoch << ',' << loss << '\n' << std::flush;
        note("train-surrogate: epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(loss));
      },
      start);
  surrogate::save_surrogate(ckpt, model, done);

  const TestLatents t = test_latents(ctx, data, sdf_model.decoder, ctx.cfg.at("stablesdf").at("eval_shapes"));
  const json held_out = task == "flow" ? flow_surrogate_report(ctx, data, model, t)
                                       : helm_surrogate_report(ctx, data, model, t);
  write_json(ctx.out / "metrics.json", {{"epochs_done", done}, {"held_out", held_out}});
  manifest.write(ctx.out);
  std::printf("train-surrogate: %s, %zu epochs, held-out relL2 %.4f -> %s\n", task.c_str(), done,
              held_out["rel_l2"]["mean"].get<double>(), ckpt.string().c_str());
  return 0;
}

// ---------------------------------------------------------------- invert

int cmd_invert(const Context& ctx) {
  const helm::Dataset data = load_data(ctx);
  const sdf::SdfModel sdf_model = load_sdf_model(ctx.sdf);
  const surrogate::Surrogate model = load_surrogate_model(ctx.surrogate);
  if (is_flow_model(model)) throw ValidationError("invert needs a Helmholtz surrogate, got a flow surrogate");
  const json& sec = ctx.cfg.at("invert");
  const std::size_t target = sec.at("target");
  if (target >= data.split.test.size())
    throw ValidationError("invert.target " + std::to_string(target) + " is outside the test split of size " +
                          std::to_string(data.split.test.size()));
  const std::string init = sec.at("z_init");
  std::vector<double> z0(sdf_model.decoder.latent_dim(), 0.0);
  if (init == "mean") {
    for (const auto& c : training_codes(sdf_model))
      for (std::size_t i = 0; i < z0.size(); ++i) z0[i] += c[i] / double(sdf_model.latents.size());
  } else if (init != "zero") {
    throw ValidationError("config: invert.z_init must be \"zero\" or \"mean\"");
  }
  Manifest manifest("invert", ctx.cfg, {ctx.data, sdf_checkpoint(ctx.sdf), surrogate_checkpoint(ctx.surrogate)});
  prepare_output(ctx.out, ctx.force);

  const std::size_t shape = data.split.test[target];
  const opt::OptRunConfig cfg = run_config(ctx.cfg, "invert");
  opt::InversionResult res = opt::invert_shape(
      model, sdf_model.decoder, pipeline::inversion_problem(data, shape, helm_cells(ctx, data, "eval/cells")), z0, cfg);

  const std::size_t n = sec.at("chamfer_points");
  const auto truth = pipeline::boundary_points(data.shapes[shape].shape, n);
  const auto start = pipeline::decoded_points(sdf_model.decoder, z0, cfg.contour_grid, n);
  const auto found = pipeline::decoded_points(sdf_model.decoder, res.z_best, cfg.contour_grid, n);
  const double c0 = start.empty() ? INFINITY : geo::chamfer(start, truth);
  const double c1 = found.empty() ? INFINITY : geo::chamfer(found, truth);
  res.record.summary.push_back({"target_shape", double(shape)});
  res.record.summary.push_back({"initial_mismatch", res.initial_mismatch});
  res.record.summary.push_back({"final_mismatch", res.best_mismatch});
  res.record.summary.push_back({"initial_chamfer", c0});
  res.record.summary.push_back({"final_chamfer", c1});
  res.record.write_csv(ctx.out / "run.csv");
  res.record.write_json(ctx.out / "summary.json", ctx.cfg.dump(), ctx.cfg.at("seed"));
  write_points(ctx.out / "contour.csv", found);
  write_points(ctx.out / "truth.csv", truth);
  write_json(ctx.out / "latent.json", {{"z_init", res.z_init}, {"z_best", res.z_best}});
  manifest.write(ctx.out);
  std::printf("invert: shape %zu mismatch %.4g -> %.4g (%.3f), Chamfer %.4g -> %.4g (%.3f)\n", shape,
              res.initial_mismatch, res.best_mismatch, res.best_mismatch / res.initial_mismatch, c0, c1, c1 / c0);
  return 0;
}

// ---------------------------------------------------------------- optimize

namespace {

/// Squared sensor mismatch to the target's angle-0 observations.
opt::FieldObjective tracking_objective(const helm::Dataset& data, std::size_t shape,
                                       const std::vector<std::size_t>& cells) {
  const opt::InversionProblem prob = pipeline::inversion_problem(data, shape, cells);
  const Tensor queries = prob.queries[0];
  const std::vector<opt::cplx> obs = prob.observations[0];
  Tensor target(obs.size(), 2);
  std::vector<std::size_t> rows(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    target(i, 0) = obs[i].real();
    target(i, 1) = obs[i].imag();
    rows[i] = queries.rows() - obs.size() + i;
  }
  opt::FieldObjective o;
  o.queries = [queries](Tape& tape, Var) { return tape.constant(queries); };
  o.objective = [target, rows](Tape& tape, Var fields, Var, Var) {
    return ad::mean(ad::square(ad::sub(ad::gather_rows(fields, rows), tape.constant(target))));
  };
  return o;
}

/// Pressure drag -sum p n_x dA on the surface samples plus the latent anchor.
/// Normals and area elements come from the decoder at the current samples.
opt::FieldObjective drag_objective(const sdf::SdfDecoder& decoder, const std::vector<double>& z_init,
                                   double lambda_reg) {
  opt::FieldObjective o;
  o.queries = [](Tape&, Var samples) { return samples; };
  o.objective = [&decoder, z_init, lambda_reg](Tape& tape, Var fields, Var z, Var samples) {
    const Tensor& x = samples.value();
    const std::size_t n = x.rows();
    std::vector<geo::Vec2> pts(n);
    for (std::size_t i = 0; i < n; ++i) pts[i] = {x(i, 0), x(i, 1)};
    double perimeter = 0.0;
    for (std::size_t i = 0; i < n; ++i) perimeter += (pts[(i + 1) % n] - pts[i]).norm();
    const auto g = decoder.eval_with_grad(pts, z.value().values());
    Tensor w(n, 1);
    for (std::size_t i = 0; i < n; ++i) w(i, 0) = -(g[i].grad_x.x / g[i].grad_x.norm()) * perimeter / double(n);
    const Var drag = ad::sum(ad::mul(ad::slice_cols(fields, 2, 1), tape.constant(w)));
    return forces::drag_objective(drag, z, z_init, lambda_reg);
  };
  return o;
}

}  // namespace

int cmd_optimize(const Context& ctx) {
  const helm::Dataset data = load_data(ctx);
  const sdf::SdfModel sdf_model = load_sdf_model(ctx.sdf);
  const surrogate::Surrogate sur = load_surrogate_model(ctx.surrogate);
  const json& sec = ctx.cfg.at("optimize");
  const std::size_t source = sec.at("source"), target = sec.at("target");
  if (source >= sdf_model.latents.size())
    throw ValidationError("optimize.source must index a training latent (< " + std::to_string(sdf_model.latents.size()) + ")");
  const std::vector<double> z0 = sdf_model.latents.code(source);
  const opt::OptRunConfig cfg = run_config(ctx.cfg, "optimize");

  // Constraint points on the starting contour.
  const std::string kind = sec.at("constraint");
  opt::ConstraintSet constraints;
  if (kind == "full") {
    constraints.points = pipeline::decoded_points(sdf_model.decoder, z0, cfg.contour_grid, cfg.contour_grid);
  } else if (kind == "front") {
    const std::size_t m = sec.at("constraint_points");
    for (const auto& p : pipeline::decoded_points(sdf_model.decoder, z0, cfg.contour_grid, 2 * m))
      if (p.x < 0.0) constraints.points.push_back(p);
  } else if (kind != "none") {
    throw ValidationError("config: optimize.constraint must be \"none\", \"front\" or \"full\"");
  }

  opt::FieldObjective objective;
  std::unique_ptr<pipeline::ChannelScale> physical;
  const surrogate::FieldModel* model = &sur;
  std::string objective_name;
  if (is_flow_model(sur)) {
    physical = std::make_unique<pipeline::ChannelScale>(sur, pipeline::flow_scale(flow_params(ctx.cfg)));
    model = physical.get();
    objective = drag_objective(sdf_model.decoder, z0, cfg.lambda_reg);
    objective_name = "pressure_drag";
  } else {
    if (target >= data.split.test.size()) throw ValidationError("optimize.target is outside the test split");
    objective = tracking_objective(data, data.split.test[target], helm_cells(ctx, data, "eval/cells"));
    objective_name = "sensor_tracking";
  }
  Manifest manifest("optimize", ctx.cfg, {ctx.data, sdf_checkpoint(ctx.sdf), surrogate_checkpoint(ctx.surrogate)});
  prepare_output(ctx.out, ctx.force);

  opt::ShapeRunResult res =
      opt::optimize_shape(*model, sdf_model.decoder, objective, z0, kind == "none" ? nullptr : &constraints, cfg);
  double drift = 0.0, max_hausdorff = 0.0;
  for (const auto& p : constraints.points)
    drift = std::max(drift, std::fabs(sdf_model.decoder.eval(p, res.z_final) - sdf_model.decoder.eval(p, z0)));
  for (const auto& s : res.record.steps) max_hausdorff = std::max(max_hausdorff, s.hausdorff);
  // Null-space dimension of the constraint Jacobian at the start; 0 means
  // every latent direction is blocked and the geometry is frozen.
  double null_dim = double(z0.size());
  if (!constraints.points.empty()) {
    const Tensor p = opt::nullspace_projector(opt::constraint_jacobian(sdf_model.decoder, constraints, z0), cfg.rank_tol);
    null_dim = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) null_dim += p(i, i);
  }
  res.record.summary.push_back({"constraint_points", double(constraints.points.size())});
  res.record.summary.push_back({"null_space_dim", std::round(null_dim)});
  res.record.summary.push_back({"constraint_drift", drift});
  res.record.summary.push_back({"max_step_hausdorff", max_hausdorff});
  res.record.write_csv(ctx.out / "run.csv");
  res.record.write_json(ctx.out / "summary.json", ctx.cfg.dump(), ctx.cfg.at("seed"));
  write_points(ctx.out / "contour.csv", pipeline::decoded_points(sdf_model.decoder, res.z_best, cfg.contour_grid, 256));
  write_points(ctx.out / "constraints.csv", constraints.points);
  write_json(ctx.out / "latent.json", {{"z_init", z0}, {"z_best", res.z_best}, {"z_final", res.z_final}});
  manifest.write(ctx.out);
  const bool frozen = !constraints.points.empty() && std::round(null_dim) == 0.0;
  std::printf("optimize: %s, %s constraints (%zu points, null space dim %.0f), objective %.4g -> %.4g, "
              "constraint drift %.3g%s\n",
              objective_name.c_str(), kind.c_str(), constraints.points.size(), std::round(null_dim),
              res.record.steps.empty() ? 0.0 : res.record.steps.front().objective, res.record.best_objective, drift,
              frozen ? ", geometry frozen" : "");
  return 0;
}

// ---------------------------------------------------------------- optimize-cv

int cmd_optimize_cv(const Context& ctx) {
  const sdf::SdfModel sdf_model = load_sdf_model(ctx.sdf);
  const surrogate::Surrogate sur = load_surrogate_model(ctx.surrogate);
  if (!is_flow_model(sur))
    throw ValidationError("optimize-cv needs a flow surrogate (train-surrogate with surrogate.task = \"flow\")");
  const json& sec = ctx.cfg.at("optimize_cv");
  const std::size_t source = sec.at("source");
  if (source >= sdf_model.latents.size()) throw ValidationError("optimize_cv.source must index a training latent");
  Manifest manifest("optimize-cv", ctx.cfg, {sdf_checkpoint(ctx.sdf), surrogate_checkpoint(ctx.surrogate)});
  prepare_output(ctx.out, ctx.force);

  const pipeline::ChannelScale physical(sur, pipeline::flow_scale(flow_params(ctx.cfg)));
  const std::vector<double> z0 = sdf_model.latents.code(source);
  const opt::OptRunConfig cfg = run_config(ctx.cfg, "optimize_cv");
  opt::AirfoilRunResult res = opt::optimize_airfoil_style(physical, sdf_model.decoder, cv_spec(ctx.cfg), z0, cfg);
  res.record.summary.push_back({"cl_best", res.cl_best});
  res.record.summary.push_back({"cd_best", res.cd_best});
  res.record.write_csv(ctx.out / "run.csv");
  res.record.write_json(ctx.out / "summary.json", ctx.cfg.dump(), ctx.cfg.at("seed"));
  write_points(ctx.out / "contour.csv", pipeline::decoded_points(sdf_model.decoder, res.z_best, cfg.contour_grid, 256));
  write_json(ctx.out / "latent.json", {{"z_init", z0}, {"z_best", res.z_best}});
  manifest.write(ctx.out);
  const auto& first = res.record.steps.front();
  std::printf("optimize-cv: C_L %.4f -> %.4f, C_D %.4f -> %.4f (cap %.3f)\n", first.extra1, res.cl_best, first.extra2,
              res.cd_best, cfg.cd_max);
  return 0;
}

// ---------------------------------------------------------------- verify

namespace {

struct Check {
  std::string name;
  bool pass = false;
  bool skipped = false;
  std::string detail;
  json measured = json::object();
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Check verify_projector(std::uint64_t seed) {
  Rng rng(seed, "verify/projector");
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + rng.index(32), d = 1 + rng.index(64);
    Tensor g(m, d);
    for (auto& v : g.values()) v = rng.normal();
    const Tensor p = opt::nullspace_projector(g);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double pp = 0.0;
        for (std::size_t k = 0; k < d; ++k) pp += p(i, k) * p(k, j);
        worst = std::max({worst, std::fabs(pp - p(i, j)), std::fabs(p(i, j) - p(j, i))});
      }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double gp = 0.0;
        for (std::size_t k = 0; k < d; ++k) gp += g(i, k) * p(k, j);
        worst = std::max(worst, std::fabs(gp));
      }
  }
  return {"projector identities", worst < 1e-10, false, "max entry error " + num(worst) + " (bar 1e-10)",
          {{"max_error", worst}}};
}

Check verify_drift(const json& v, const sdf::SdfModel& m, std::uint64_t seed) {
  const std::vector<double> etas = v.at("drift_steps");
  std::vector<double> slopes;
  for (std::size_t s = 0; s < std::min(v.at("shapes").get<std::size_t>(), m.latents.size()); ++s) {
    const auto z = m.latents.code(s);
    opt::ConstraintSet c;
    c.points = pipeline::decoded_points(m.decoder, z, 128, v.at("drift_points"));
    Rng rng(seed, "verify/drift-" + std::to_string(s));
    std::vector<double> dir(z.size());
    for (auto& x : dir) x = rng.normal();
    slopes.push_back(opt::constraint_drift_scaling(m.decoder, c, z, dir, etas).slope);
  }
  const Stats st = stats(slopes);
  return {"first-order constraint invariance", st.min >= 1.7 && st.max <= 2.3, false,
          "drift slope in [" + num(st.min) + ", " + num(st.max) + "] (bar [1.7, 2.3])", {{"slopes", slopes}}};
}

Check verify_contraction(const json& v, const sdf::SdfModel& m, std::uint64_t seed) {
  const double noise = v.at("noise");
  std::vector<double> a, b;
  std::size_t ok = 0, total = 0;
  for (std::size_t s = 0; s < std::min(v.at("shapes").get<std::size_t>(), m.latents.size()); ++s) {
    const auto z = m.latents.code(s);
    Rng rng(seed, "verify/contraction-" + std::to_string(s));
    std::vector<geo::Vec2> pts;
    for (const auto& p : pipeline::decoded_points(m.decoder, z, 128, v.at("points")))
      pts.push_back(p + geo::Vec2{rng.normal(0.0, noise), rng.normal(0.0, noise)});
    const auto res = opt::reproject_points(m.decoder, pts, z, 5, 1e-8);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      ok += std::fabs(res.residuals.back()[i]) < 1e-4;
      for (std::size_t k = 0; k < 3 && k + 1 < res.residuals.size(); ++k) {
        const double r0 = std::fabs(res.residuals[k][i]), r1 = std::fabs(res.residuals[k + 1][i]);
        if (!res.flagged[i] && r0 > 0.0 && r0 < 0.01 && r1 > 1e-12) {
          a.push_back(r0);
          b.push_back(r1);
        }
      }
    }
    total += pts.size();
  }
  const double slope = opt::loglog_slope(a, b), rate = double(ok) / double(total);
  return {"reprojection contraction", slope >= 1.7 && rate >= 0.99, false,
          "slope " + num(slope) + " (bar 1.7), " + num(100 * rate) + "% within 1e-4 after 5 steps (bar 99%)",
          {{"slope", slope}, {"success_rate", rate}}};
}

Check verify_denoising(const json& v, const helm::Dataset& data, const sdf::SdfModel& m, std::uint64_t seed) {
  const double sigma = 0.01;
  const std::size_t want = v.at("denoise_samples"), n_mc = v.at("n_mc");
  std::size_t checked = 0, held = 0;
  double min_slack = INFINITY;
  for (std::size_t s = 0; checked < want && s < m.latents.size(); ++s) {
    const auto z = m.latents.code(s);
    const auto pairs = sdf::sample_training_pairs(data.shapes[data.split.train[s]].shape, 40,
                                                  derive_seed(seed, "verify/denoise-" + std::to_string(s)), 1.0, 0.02);
    std::size_t taken = 0;
    for (const auto& p : pairs) {
      if (checked == want || taken == 10) break;
      if (std::fabs(m.decoder.eval(p.x, z) - p.s) > 0.005) continue;
      const auto b = sdf::check_denoising_bound(m.decoder, z, p.x, p.s, sigma, n_mc,
                                                derive_seed(seed, "verify/mc-" + std::to_string(checked)));
      const double slack = b.rhs + 3.0 * b.lhs_stderr - b.lhs;
      min_slack = std::min(min_slack, slack);
      held += slack >= 0.0;
      ++checked;
      ++taken;
    }
  }
  return {"denoising bound", checked == want && held == checked, false,
          std::to_string(held) + "/" + std::to_string(checked) + " samples within 3 SE, min slack " + num(min_slack),
          {{"checked", checked}, {"held", held}, {"min_slack", min_slack}}};
}

double median_sensitivity(const json& v, const helm::Dataset& data, const sdf::SdfModel& m, std::uint64_t seed) {
  const std::size_t shapes = std::min<std::size_t>(10, m.latents.size());
  const std::size_t per = std::max<std::size_t>(1, std::size_t(v.at("sensitivity_samples")) / shapes);
  std::vector<double> norms;
  for (std::size_t s = 0; s < shapes; ++s) {
    const auto pairs = sdf::sample_training_pairs(data.shapes[data.split.train[s]].shape, per,
                                                  derive_seed(seed, "verify/sens-" + std::to_string(s)), 1.0, 0.02);
    std::vector<geo::Vec2> xs;
    for (const auto& p : pairs) xs.push_back(p.x);
    const auto n = sdf::latent_jacobian_norms(m.decoder, m.latents.code(s), xs);
    norms.insert(norms.end(), n.begin(), n.end());
  }
  std::nth_element(norms.begin(), norms.begin() + std::ptrdiff_t(norms.size() / 2), norms.end());
  return norms[norms.size() / 2];
}

Check verify_sensitivity(const Context& ctx, const json& v, const helm::Dataset& data, const sdf::SdfModel& m,
                         std::uint64_t seed) {
  const double noisy = median_sensitivity(v, data, m, seed);
  if (ctx.sdf_baseline.empty())
    return {"sensitivity reduction", true, true, "median |grad_z s| " + num(noisy) + "; no --sdf-baseline given",
            {{"median", noisy}}};
  const double clean = median_sensitivity(v, data, load_sdf_model(ctx.sdf_baseline), seed);
  return {"sensitivity reduction", noisy < clean, false,
          "median |grad_z s| " + num(noisy) + " vs baseline " + num(clean), {{"median", noisy}, {"baseline", clean}}};
}

Check verify_lipschitz(const Context& ctx, const json& v, const helm::Dataset& data, const sdf::SdfModel& m,
                       const surrogate::Surrogate& sur) {
  opt::OptRunConfig cfg = run_config(ctx.cfg, "optimize");
  cfg.steps = v.at("lipschitz_steps");
  cfg.samples = 128;
  cfg.record_geometry = true;
  opt::FieldObjective objective;
  std::unique_ptr<pipeline::ChannelScale> physical;
  const surrogate::FieldModel* model = &sur;
  if (is_flow_model(sur)) {
    physical = std::make_unique<pipeline::ChannelScale>(sur, pipeline::flow_scale(flow_params(ctx.cfg)));
    model = physical.get();
    objective = drag_objective(m.decoder, m.latents.code(0), cfg.lambda_reg);
  } else {
    objective = tracking_objective(data, data.split.test[0], helm_cells(ctx, data, "eval/cells"));
  }
  const auto run = opt::optimize_shape(*model, m.decoder, objective, m.latents.code(0), nullptr, cfg);
  std::size_t ok = 0;
  double worst = 0.0, lz = 0.0, mh = INFINITY;
  for (const auto& s : run.record.steps) {
    const double bound = 1.5 * (s.lz_hat / s.m_hat) * s.dz_norm;
    ok += s.hausdorff <= bound;
    if (bound > 0.0) worst = std::max(worst, s.hausdorff / bound);
    lz = std::max(lz, s.lz_hat);
    mh = std::min(mh, s.m_hat);
  }
  return {"surface Lipschitz bound", ok == run.record.steps.size(), false,
          std::to_string(ok) + "/" + std::to_string(run.record.steps.size()) + " steps, worst ratio " + num(worst) +
              ", m_hat >= " + num(mh) + ", Lz_hat <= " + num(lz),
          {{"worst_ratio", worst}, {"m_hat_min", mh}, {"lz_hat_max", lz}}};
}

Check verify_grad_mismatch(const json& v, const sdf::SdfModel& m, const surrogate::Surrogate* sur,
                           std::uint64_t seed) {
  // Mean squared predicted field at the samples, or mean |x|^2 without a surrogate.
  const opt::SampleObjective objective = [sur](Tape& tape, Var z, Var x) {
    if (!sur) return ad::mean(ad::square(x));
    Var q = x;
    if (sur->in_dim() == 4) {
      Tensor dir(x.value().rows(), 2);
      for (std::size_t i = 0; i < dir.rows(); ++i) dir(i, 0) = 1.0;
      q = ad::concat_cols(x, tape.constant(dir));
    }
    return ad::mean(ad::square(sur->forward(tape, q, z)));
  };
  const std::size_t count = v.at("grad_latents"), n = v.at("grad_samples");
  std::size_t ok = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng(seed, "verify/grad-" + std::to_string(k));
    std::vector<double> z = m.latents.code(rng.index(m.latents.size()));
    for (auto& x : z) x += rng.normal(0.0, 0.02);
    const auto samples = opt::surface_samples(m.decoder, z, n, 128, 5, 1e-8);
    const auto g = opt::check_grad_mismatch(m.decoder, objective, z, samples, 5, 1e-8);
    ok += g.mismatch <= 1.5 * g.bound;
    worst = std::max(worst, g.mismatch / (1.5 * g.bound));
  }
  return {"gradient mismatch bound", ok == count, false,
          std::to_string(ok) + "/" + std::to_string(count) + " latents, worst ratio to 1.5 bound " + num(worst),
          {{"worst_ratio", worst}}};
}

}  // namespace

int cmd_verify(const Context& ctx) {
  const helm::Dataset data = load_data(ctx);
  const sdf::SdfModel m = load_sdf_model(ctx.sdf);
  std::optional<surrogate::Surrogate> sur;
  Manifest manifest("verify", ctx.cfg, {ctx.data, sdf_checkpoint(ctx.sdf)});
  if (fs::exists(surrogate_checkpoint(ctx.surrogate))) {
    sur = load_surrogate_model(ctx.surrogate);
    manifest.add_input(surrogate_checkpoint(ctx.surrogate));
  }
  if (!ctx.sdf_baseline.empty()) manifest.add_input(sdf_checkpoint(ctx.sdf_baseline));
  prepare_output(ctx.out, ctx.force);
  const json& v = ctx.cfg.at("verify");
  const std::uint64_t seed = ctx.cfg.at("seed");

  std::vector<Check> checks;
  checks.push_back(verify_projector(seed));
  checks.push_back(verify_drift(v, m, seed));
  checks.push_back(verify_contraction(v, m, seed));
  checks.push_back(verify_denoising(v, data, m, seed));
  checks.push_back(verify_sensitivity(ctx, v, data, m, seed));
  if (sur) {
    checks.push_back(verify_lipschitz(ctx, v, data, m, *sur));
  } else {
    checks.push_back({"surface Lipschitz bound", true, true, "no surrogate checkpoint", {}});
  }
  checks.push_back(verify_grad_mismatch(v, m, sur ? &*sur : nullptr, seed));
  const TestLatents t = test_latents(ctx, data, m.decoder, ctx.cfg.at("stablesdf").at("eval_shapes"));
  const json rec = reconstruction_report(ctx, data, m.decoder, t);
  const double f1 = rec["f1"]["mean"];
  checks.push_back({"held-out reconstruction F1", f1 >= 0.90, false, "mean F1 " + num(f1) + " (bar 0.90)", rec});

  json report = json::array();
  bool all = true;
  for (const auto& c : checks) {
    std::printf("%-36s %s  %s\n", c.name.c_str(), c.skipped ? "SKIP" : (c.pass ? "PASS" : "FAIL"), c.detail.c_str());
    all = all && c.pass;
    report.push_back({{"name", c.name}, {"pass", c.pass}, {"skipped", c.skipped}, {"detail", c.detail},
                      {"measured", c.measured}});
  }
  write_json(ctx.out / "verify.json", report);
  manifest.write(ctx.out);
  return all ? 0 : 1;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Context& ctx) {
  const helm::Dataset data = load_data(ctx);
  const sdf::SdfModel m = load_sdf_model(ctx.sdf);
  Manifest manifest("eval", ctx.cfg, {ctx.data, sdf_checkpoint(ctx.sdf)});
  std::optional<surrogate::Surrogate> sur;
  if (fs::exists(surrogate_checkpoint(ctx.surrogate))) {
    sur = load_surrogate_model(ctx.surrogate);
    manifest.add_input(surrogate_checkpoint(ctx.surrogate));
  }
  prepare_output(ctx.out, ctx.force);
  const TestLatents t = test_latents(ctx, data, m.decoder, ctx.cfg.at("stablesdf").at("eval_shapes"));
  json metrics{{"reconstruction", reconstruction_report(ctx, data, m.decoder, t)}};
  if (sur)
    metrics["surrogate"] =
        is_flow_model(*sur) ? flow_surrogate_report(ctx, data, *sur, t) : helm_surrogate_report(ctx, data, *sur, t);
  write_json(ctx.out / "metrics.json", metrics);
  manifest.write(ctx.out);
  std::printf("%s\n", metrics.dump(2).c_str());
  return 0;
}

}  // namespace gano::cli
