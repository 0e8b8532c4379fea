// Acceptance suite: one PASS/FAIL line per criterion. Trained desk models
// are cached under --cache so reruns skip training.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include "json.hpp"

#include "gano/errors.hpp"
#include "gano/forces.hpp"
#include "gano/geometry.hpp"
#include "gano/helmholtz.hpp"
#include "gano/optloop.hpp"
#include "gano/pipeline.hpp"
#include "gano/rng.hpp"
#include "gano/stablesdf.hpp"
#include "gano/surrogate.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

#ifndef GANO_ACCEPTANCE_CACHE
#define GANO_ACCEPTANCE_CACHE "acceptance_cache"
#endif

namespace fs = std::filesystem;
using namespace gano;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- desk configuration

constexpr std::size_t kLatent = 16;
constexpr std::uint64_t kDataSeed = 1;
constexpr std::uint64_t kSdfSeed = 3;
constexpr std::uint64_t kSurrogateSeed = 5;
constexpr std::size_t kGridQueries = 128;
constexpr std::size_t kContourGrid = 128;

helm::DatasetConfig desk_dataset_config() {
  helm::DatasetConfig c;
  c.seed = kDataSeed;
  return c;
}

sdf::SdfTrainConfig desk_sdf_config(double sigma) {
  sdf::SdfTrainConfig c;
  c.sigma = sigma;
  c.epochs = 200;
  c.shapes_per_batch = 4;
  c.points_per_shape = 64;
  c.seed = kSdfSeed;
  return c;
}

sdf::DecoderConfig desk_decoder_config() { return sdf::DecoderConfig{kLatent, {64, 64, 64}}; }

surrogate::SurrogateConfig desk_surrogate_config() {
  surrogate::SurrogateConfig c;
  c.width = 32;
  c.blocks = 2;
  c.latent_dim = kLatent;
  return c;
}

surrogate::SurrogateTrainConfig desk_surrogate_train() {
  surrogate::SurrogateTrainConfig c;
  c.epochs = 60;
  c.lr = 2e-3;
  c.batch = 4;
  c.seed = kSurrogateSeed;
  return c;
}

/// Everything that changes a cached artifact; a mismatch forces a rebuild.
std::string desk_fingerprint() {
  const auto s = desk_sdf_config(0.01);
  const auto sc = desk_surrogate_config();
  const auto st = desk_surrogate_train();
  std::ostringstream o;
  o << "v1 data " << kDataSeed << ' ' << desk_dataset_config().n_shapes << " sdf " << s.epochs << ' '
    << s.shapes_per_batch << ' ' << s.points_per_shape << ' ' << s.lr << ' ' << kSdfSeed << " sur " << sc.width
    << ' ' << sc.blocks << ' ' << sc.slices << ' ' << sc.heads << ' ' << st.epochs << ' ' << st.lr << ' '
    << st.batch << ' ' << kGridQueries;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void log(const std::string& msg) {
  std::fprintf(stderr, "[desk] %s\n", msg.c_str());
  std::fflush(stderr);
}

/// Dataset, decoders (sigma = 0.01 and sigma = 0), surrogate and fitted
/// latents of the held-out split, built on first use and cached.
class Desk {
 public:
  explicit Desk(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    const fs::path stamp = dir_ / "fingerprint.txt";
    std::string old;
    if (std::ifstream f(stamp); f) std::getline(f, old);
    if (old != desk_fingerprint()) {
      log("cache fingerprint changed; rebuilding " + dir_.string());
      for (const char* name : {"data", "sdf.ckpt", "sdf0.ckpt", "surrogate.ckpt", "test_latents.json"})
        fs::remove_all(dir_ / name);
      std::ofstream(stamp) << desk_fingerprint() << '\n';
    }
  }

  const helm::Dataset& data() {
    if (!data_) {
      const auto t0 = std::chrono::steady_clock::now();
      if (fs::exists(dir_ / "data")) {
        data_ = helm::load_dataset(dir_ / "data");
      } else {
        data_ = helm::gen_dataset(desk_dataset_config());
        helm::save_dataset(dir_ / "data", *data_);
        log("dataset generated in " + std::to_string(seconds_since(t0)) + " s");
      }
    }
    return *data_;
  }

  std::vector<geo::FourierShape> train_shapes() { return pipeline::shapes_of(data(), data().split.train); }
  std::vector<geo::FourierShape> test_shapes() { return pipeline::shapes_of(data(), data().split.test); }

  const sdf::SdfModel& sdf(bool noisy) {
    auto& slot = noisy ? sdf_ : sdf0_;
    if (!slot) {
      const fs::path path = dir_ / (noisy ? "sdf.ckpt" : "sdf0.ckpt");
      if (fs::exists(path)) {
        slot = sdf::load_sdf(path);
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        slot = sdf::train_stablesdf(train_shapes(), desk_sdf_config(noisy ? 0.01 : 0.0), desk_decoder_config());
        sdf::save_sdf(path, *slot);
        log(std::string("decoder sigma=") + (noisy ? "0.01" : "0") + " trained in " +
            std::to_string(seconds_since(t0)) + " s");
      }
    }
    return *slot;
  }

  const surrogate::Surrogate& surrogate() {
    if (!surrogate_) {
      const fs::path path = dir_ / "surrogate.ckpt";
      if (fs::exists(path)) {
        surrogate_ = surrogate::load_surrogate(path);
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        const auto& m = sdf(true);
        std::vector<std::vector<double>> latents;
        for (std::size_t i = 0; i < m.latents.size(); ++i) latents.push_back(m.latents.code(i));
        surrogate::Surrogate model(desk_surrogate_config(), kSurrogateSeed);
        const auto cfg = desk_surrogate_train();
        surrogate::train_surrogate(
            model, pipeline::helm_epoch_samples(data(), data().split.train, latents, kGridQueries, kSurrogateSeed),
            cfg, [&](std::size_t e, double loss) {
              if ((e + 1) % 10 == 0) log("surrogate epoch " + std::to_string(e) + " loss " + std::to_string(loss));
            });
        surrogate::save_surrogate(path, model, cfg.epochs);
        surrogate_ = std::move(model);
        log("surrogate trained in " + std::to_string(seconds_since(t0)) + " s");
      }
    }
    return *surrogate_;
  }

  /// Test-time latents of the held-out shapes, in split order.
  const std::vector<std::vector<double>>& test_latents() {
    if (test_latents_.empty()) {
      const fs::path path = dir_ / "test_latents.json";
      if (fs::exists(path)) {
        std::ifstream f(path);
        test_latents_ = json::parse(f).get<std::vector<std::vector<double>>>();
      } else {
        const auto& m = sdf(true);
        const auto shapes = test_shapes();
        for (std::size_t k = 0; k < shapes.size(); ++k)
          test_latents_.push_back(
              pipeline::fit_shape_latent(m.decoder, shapes[k], data().split.test[k], pipeline::LatentFitConfig{}));
        std::ofstream(path) << json(test_latents_).dump() << '\n';
      }
    }
    return test_latents_;
  }

  /// Fixed grid cells shared by every held-out query set.
  std::vector<std::size_t> eval_cells() {
    const std::size_t n = data().cfg.scatter.n;
    return pipeline::grid_subset(n * n, kGridQueries, derive_seed(kSurrogateSeed, "acceptance/cells"));
  }

 private:
  fs::path dir_;
  std::optional<helm::Dataset> data_;
  std::optional<sdf::SdfModel> sdf_, sdf0_;
  std::optional<surrogate::Surrogate> surrogate_;
  std::vector<std::vector<double>> test_latents_;
};

// ---------------------------------------------------------------- reporting

struct Outcome {
  bool pass = false;
  std::string detail;
  json metrics = json::object();
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------- 1 autodiff

/// Relative error of the analytic gradient of sum(w * f) against central
/// differences, over the given parameter tensors and input tensors.
double model_grad_error(const std::function<Var(Tape&, const std::vector<Var>&)>& f, std::vector<Tensor> inputs,
                        const Tensor& w) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const auto grads = tape.backward(ad::sum(ad::mul(f(tape, leaves), tape.constant(w))));
  std::vector<double> analytic, flat;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const Tensor g = grads.wrt(leaves[i]);
    analytic.insert(analytic.end(), g.values().begin(), g.values().end());
    flat.insert(flat.end(), inputs[i].values().begin(), inputs[i].values().end());
  }
  const auto fd = test::fd_gradient(
      [&](const std::vector<double>& x) {
        std::vector<Tensor> in = inputs;
        std::size_t o = 0;
        for (auto& t : in)
          for (auto& v : t.values()) v = x[o++];
        Tape t2;
        std::vector<Var> vs;
        for (const auto& t : in) vs.push_back(t2.constant(t));
        return ad::sum(ad::mul(f(t2, vs), t2.constant(w))).value().item();
      },
      flat);
  return test::rel_error(analytic, fd);
}

Outcome criterion_autodiff() {
  double worst_prim = 0.0;
  std::string worst_name;
  for (const auto& c : test::primitive_cases()) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const double e = test::check_case(c, 5000 + s);
      if (e > worst_prim) {
        worst_prim = e;
        worst_name = c.name;
      }
    }
  }

  // Decoder: gradients with respect to the input rows and the first two weight tensors.
  const sdf::SdfDecoder dec(sdf::DecoderConfig{8, {24, 24, 24}}, 11);
  double worst_dec = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(6000 + s);
    const Tensor rows = test::random_tensor(rng, 3, dec.input_dim(), 0.5);
    const Tensor w = test::random_tensor(rng, 3, 1);
    const auto f = [&](Tape& tape, const std::vector<Var>& v) {
      auto bound = dec.params().bind(tape, false);
      bound[0] = v[1];
      bound[2] = v[2];
      return dec.forward(tape, bound, v[0]);
    };
    worst_dec = std::max(worst_dec, model_grad_error(f, {rows, dec.params()[0], dec.params()[2]}, w));
  }

  // Surrogate: gradients with respect to queries, latent and the block-0 gate projection.
  surrogate::SurrogateConfig sc;
  sc.in_dim = 4;
  sc.out_dim = 2;
  sc.slices = 4;
  sc.width = 16;
  sc.blocks = 2;
  sc.heads = 2;
  sc.latent_dim = 6;
  const surrogate::Surrogate sur(sc, 12);
  const std::size_t wz = sur.params().index_of("block0.W_z");
  double worst_sur = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(7000 + s);
    const Tensor q = test::random_tensor(rng, 10, 4, 0.5);
    const Tensor z = test::random_tensor(rng, 1, 6, 0.5);
    const Tensor w = test::random_tensor(rng, 10, 2);
    const auto f = [&](Tape& tape, const std::vector<Var>& v) {
      auto bound = sur.params().bind(tape, false);
      bound[wz] = v[2];
      return sur.forward(tape, bound, v[0], v[1]);
    };
    worst_sur = std::max(worst_sur, model_grad_error(f, {q, z, sur.params()[wz]}, w));
  }
  Outcome o;
  o.pass = worst_prim < 1e-5 && worst_dec < 1e-5 && worst_sur < 1e-5;
  o.detail = "max rel err primitives " + fmt(worst_prim) + " (" + worst_name + "), decoder " + fmt(worst_dec) +
             ", surrogate " + fmt(worst_sur) + " (bar 1e-5)";
  o.metrics = {{"primitives", worst_prim}, {"decoder", worst_dec}, {"surrogate", worst_sur}};
  return o;
}

// ---------------------------------------------------------------- 2 projector

Tensor dense_matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

Outcome criterion_projector() {
  Rng rng(20);
  double worst_idem = 0.0, worst_sym = 0.0, worst_gp = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.index(32), d = 1 + rng.index(64);
    const Tensor g = test::random_tensor(rng, m, d);
    const Tensor p = opt::nullspace_projector(g);
    const Tensor pp = dense_matmul(p, p), gp = dense_matmul(g, p);
    double idem = 0.0, sym = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        idem += std::pow(pp(i, j) - p(i, j), 2);
        sym += std::pow(p(j, i) - p(i, j), 2);
      }
    worst_idem = std::max(worst_idem, std::sqrt(idem));
    worst_sym = std::max(worst_sym, std::sqrt(sym));
    double gpn = 0.0;
    for (double v : gp.values()) gpn += v * v;
    worst_gp = std::max(worst_gp, std::sqrt(gpn));
  }
  Outcome o;
  o.pass = worst_idem < 1e-10 && worst_sym < 1e-10 && worst_gp < 1e-10;
  o.detail = "max |P^2-P| " + fmt(worst_idem) + ", |P^T-P| " + fmt(worst_sym) + ", |GP| " + fmt(worst_gp) +
             " over 100 G up to 32x64";
  o.metrics = {{"idempotence", worst_idem}, {"symmetry", worst_sym}, {"gp", worst_gp}};
  return o;
}

// ---------------------------------------------------------------- 3 drift scaling

Outcome criterion_drift(Desk& desk) {
  const auto& m = desk.sdf(true);
  const std::vector<double> etas{0.08, 0.04, 0.02, 0.01};
  std::vector<double> slopes;
  for (std::size_t s = 0; s < 5; ++s) {
    const auto z = m.latents.code(s);
    opt::ConstraintSet c;
    c.points = pipeline::decoded_points(m.decoder, z, kContourGrid, 8);
    Rng rng(30 + s);
    std::vector<double> dir(kLatent);
    for (auto& v : dir) v = rng.normal();
    slopes.push_back(opt::constraint_drift_scaling(m.decoder, c, z, dir, etas).slope);
  }
  const auto [lo, hi] = std::minmax_element(slopes.begin(), slopes.end());
  Outcome o;
  o.pass = *lo >= 1.7 && *hi <= 2.3;
  o.detail = "drift slope range [" + fmt(*lo) + ", " + fmt(*hi) + "] over 5 shapes (bar [1.7, 2.3])";
  o.metrics = {{"slopes", slopes}};
  return o;
}

// ---------------------------------------------------------------- 4 contraction

Outcome criterion_contraction(Desk& desk) {
  const auto& m = desk.sdf(true);
  std::size_t ok = 0, total = 0, pairs = 0;
  std::vector<double> a, b;
  for (std::size_t s = 0; s < 10; ++s) {
    const auto z = m.latents.code(s);
    Rng rng(40 + s);
    std::vector<geo::Vec2> pts;
    for (const auto& p : pipeline::decoded_points(m.decoder, z, kContourGrid, 1000))
      pts.push_back(p + geo::Vec2{rng.normal(0.0, 0.02), rng.normal(0.0, 0.02)});
    const opt::ReprojectResult res = opt::reproject_points(m.decoder, pts, z, 5, 1e-8);
    const opt::ContractionStats st = opt::contraction_stats(res, 1e-4);
    ok += static_cast<std::size_t>(std::lround(st.success_rate * double(pts.size())));
    total += pts.size();
    pairs += st.pairs;
    // Pool the same pairs contraction_stats fits for a single slope.
    for (std::size_t k = 0; k + 1 < res.residuals.size() && k < 3; ++k)
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double rk = std::fabs(res.residuals[k][i]), rn = std::fabs(res.residuals[k + 1][i]);
        if (!res.flagged[i] && rk > 0.0 && rk < 0.01 && rn > 1e-12) {
          a.push_back(rk);
          b.push_back(rn);
        }
      }
  }
  const double slope = opt::loglog_slope(a, b);
  const double rate = double(ok) / double(total);
  Outcome o;
  o.pass = slope >= 1.7 && rate >= 0.99;
  o.detail = "pooled slope " + fmt(slope) + " over " + std::to_string(pairs) + " pairs (bar 1.7); " +
             std::to_string(ok) + "/" + std::to_string(total) + " points |s| < 1e-4 after K=5 (" + fmt(100 * rate) +
             "%, bar 99%)";
  o.metrics = {{"slope", slope}, {"success_rate", rate}, {"pairs", pairs}};
  return o;
}

// ---------------------------------------------------------------- 5 denoising bound

Outcome criterion_denoising(Desk& desk) {
  const auto& m = desk.sdf(true);
  const auto shapes = desk.train_shapes();
  std::size_t checked = 0, held = 0;
  double worst_margin = 1e300;
  for (std::size_t s = 0; checked < 100 && s < shapes.size(); ++s) {
    const auto z = m.latents.code(s);
    const auto pairs = sdf::sample_training_pairs(shapes[s], 40, derive_seed(50, "denoise-" + std::to_string(s)), 1.0, 0.02);
    std::size_t taken = 0;
    for (const auto& p : pairs) {
      if (checked == 100 || taken == 10) break;
      if (std::fabs(m.decoder.eval(p.x, z) - p.s) > 0.005) continue;  // well-fit samples only
      const sdf::DenoisingBound b =
          sdf::check_denoising_bound(m.decoder, z, p.x, p.s, 0.01, 100000, derive_seed(51, std::to_string(checked)));
      const double margin = b.rhs + 3.0 * b.lhs_stderr - b.lhs;
      worst_margin = std::min(worst_margin, margin);
      held += margin >= 0.0;
      ++checked;
      ++taken;
    }
  }
  Outcome o;
  o.pass = checked == 100 && held == checked;
  o.detail = std::to_string(held) + "/" + std::to_string(checked) +
             " samples satisfy E|s(z+eps)-s| <= |r| + sigma sqrt(2/pi)|grad_z s| + 3 SE; min margin " +
             fmt(worst_margin);
  o.metrics = {{"checked", checked}, {"held", held}, {"min_margin", worst_margin}};
  return o;
}

// ---------------------------------------------------------------- 6 sensitivity

double median_latent_sensitivity(const sdf::SdfModel& m, const std::vector<geo::FourierShape>& shapes) {
  std::vector<double> norms;
  for (std::size_t s = 0; s < 10; ++s) {
    const auto pairs = sdf::sample_training_pairs(shapes[s], 100, derive_seed(60, "sens-" + std::to_string(s)), 1.0, 0.02);
    std::vector<geo::Vec2> xs;
    for (const auto& p : pairs) xs.push_back(p.x);
    const auto n = sdf::latent_jacobian_norms(m.decoder, m.latents.code(s), xs);
    norms.insert(norms.end(), n.begin(), n.end());
  }
  std::nth_element(norms.begin(), norms.begin() + norms.size() / 2, norms.end());
  return norms[norms.size() / 2];
}

Outcome criterion_sensitivity(Desk& desk) {
  const auto shapes = desk.train_shapes();
  const double noisy = median_latent_sensitivity(desk.sdf(true), shapes);
  const double clean = median_latent_sensitivity(desk.sdf(false), shapes);
  Outcome o;
  o.pass = noisy < clean;
  o.detail = "median |grad_z s| sigma=0.01: " + fmt(noisy) + ", sigma=0: " + fmt(clean) + " on 1000 near-surface samples";
  o.metrics = {{"sigma_0.01", noisy}, {"sigma_0", clean}};
  return o;
}

// ---------------------------------------------------------------- 7 surface Lipschitz bound

/// Mean squared complex mismatch at the sensors to a target's observations
/// at incidence angle 0, with queries fixed to the held-out layout.
opt::FieldObjective tracking_objective(const helm::Dataset& data, std::size_t target,
                                       const std::vector<std::size_t>& cells) {
  const opt::InversionProblem prob = pipeline::inversion_problem(data, target, cells);
  opt::FieldObjective o;
  const Tensor queries = prob.queries[0];
  const std::vector<helm::cplx> obs = prob.observations[0];
  o.queries = [queries](Tape& tape, Var) { return tape.constant(queries); };
  o.objective = [queries, obs](Tape& tape, Var fields, Var, Var) {
    std::vector<std::size_t> rows(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) rows[i] = queries.rows() - obs.size() + i;
    Tensor t(obs.size(), 2);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      t(i, 0) = obs[i].real();
      t(i, 1) = obs[i].imag();
    }
    return ad::mean(ad::square(ad::sub(ad::gather_rows(fields, rows), tape.constant(t))));
  };
  return o;
}

Outcome criterion_lipschitz(Desk& desk) {
  const auto& m = desk.sdf(true);
  const auto& data = desk.data();
  opt::OptRunConfig cfg;
  cfg.steps = 50;
  cfg.samples = 128;
  const auto objective = tracking_objective(data, data.split.test[0], desk.eval_cells());
  const opt::ShapeRunResult run =
      opt::optimize_shape(desk.surrogate(), m.decoder, objective, m.latents.code(0), nullptr, cfg);
  std::size_t ok = 0;
  double worst_ratio = 0.0;
  for (const auto& s : run.record.steps) {
    const double bound = 1.5 * (s.lz_hat / s.m_hat) * s.dz_norm;
    ok += s.hausdorff <= bound;
    if (bound > 0.0) worst_ratio = std::max(worst_ratio, s.hausdorff / bound);
  }
  Outcome o;
  o.pass = ok == run.record.steps.size() && run.record.steps.size() == 50;
  o.detail = std::to_string(ok) + "/" + std::to_string(run.record.steps.size()) +
             " steps with Hausdorff <= 1.5 (Lz/m) |dz|; worst ratio to bound " + fmt(worst_ratio) +
             "; objective " + fmt(run.record.steps.front().objective) + " -> " + fmt(run.record.best_objective);
  o.metrics = {{"steps_ok", ok}, {"worst_ratio", worst_ratio}};
  return o;
}

// ---------------------------------------------------------------- 8 gradient mismatch

Outcome criterion_grad_mismatch(Desk& desk) {
  const auto& m = desk.sdf(true);
  const auto& model = desk.surrogate();
  // Mean squared predicted field at the samples under incidence angle 0.
  const opt::SampleObjective objective = [&model](Tape& tape, Var z, Var x) {
    const std::size_t n = x.value().rows();
    Tensor dir(n, 2);
    for (std::size_t i = 0; i < n; ++i) dir(i, 0) = 1.0;
    const Var q = ad::concat_cols(x, tape.constant(dir));
    return ad::mean(ad::square(model.forward(tape, q, z)));
  };
  std::size_t ok = 0;
  double worst = 0.0;
  json rows = json::array();
  for (std::size_t k = 0; k < 10; ++k) {
    Rng rng(80 + k);
    std::vector<double> z = m.latents.code(rng.index(m.latents.size()));
    for (auto& v : z) v += rng.normal(0.0, 0.02);
    const auto samples = opt::surface_samples(m.decoder, z, 64, kContourGrid, 5, 1e-8);
    const opt::GradMismatch g = opt::check_grad_mismatch(m.decoder, objective, z, samples, 5, 1e-8);
    ok += g.mismatch <= 1.5 * g.bound;
    worst = std::max(worst, g.mismatch / (1.5 * g.bound));
    rows.push_back({{"mismatch", g.mismatch}, {"bound", g.bound}});
  }
  Outcome o;
  o.pass = ok == 10;
  o.detail = std::to_string(ok) + "/10 latents with |grad_fd - g_det| <= 1.5 sqrt(N)(Lz/m)|grad_X J|, N=64; worst ratio " +
             fmt(worst);
  o.metrics = {{"runs", rows}, {"worst_ratio", worst}};
  return o;
}

// ---------------------------------------------------------------- 9 reconstruction

Outcome criterion_reconstruction(Desk& desk) {
  const auto& m = desk.sdf(true);
  const auto shapes = desk.test_shapes();
  const auto& latents = desk.test_latents();
  const double tau = 2.0 * 2.0 / double(kContourGrid);
  double sum = 0.0, lo = 1.0;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const double f1 = pipeline::reconstruction_metrics(m.decoder, latents[k], shapes[k], kContourGrid, tau).f1;
    sum += f1;
    lo = std::min(lo, f1);
  }
  const double mean = sum / double(shapes.size());
  Outcome o;
  o.pass = mean >= 0.90;
  o.detail = "held-out mean F1 " + fmt(mean) + " (min " + fmt(lo) + ") over " + std::to_string(shapes.size()) +
             " shapes at tau = 2 cells (bar 0.90)";
  o.metrics = {{"mean_f1", mean}, {"min_f1", lo}};
  return o;
}

// ---------------------------------------------------------------- 10 inversion

Outcome criterion_inversion(Desk& desk) {
  const auto& m = desk.sdf(true);
  const auto& data = desk.data();
  const auto& model = desk.surrogate();
  const auto cells = desk.eval_cells();
  opt::OptRunConfig cfg;
  cfg.steps = 150;
  cfg.lr = 2e-2;
  cfg.record_geometry = false;
  const std::vector<double> z0(kLatent, 0.0);
  const auto start = pipeline::decoded_points(m.decoder, z0, kContourGrid, 256);
  std::size_t ok = 0;
  json runs = json::array();
  std::string per_shape;
  for (std::size_t k = 0; k < 5; ++k) {
    const std::size_t s = data.split.test[k];
    const opt::InversionResult res =
        opt::invert_shape(model, m.decoder, pipeline::inversion_problem(data, s, cells), z0, cfg);
    const auto truth = pipeline::boundary_points(data.shapes[s].shape, 256);
    const auto found = pipeline::decoded_points(m.decoder, res.z_best, kContourGrid, 256);
    const double c0 = start.empty() ? INFINITY : geo::chamfer(start, truth);
    const double c1 = found.empty() ? INFINITY : geo::chamfer(found, truth);
    const double mis = res.best_mismatch / res.initial_mismatch, ch = c1 / c0;
    const bool pass = mis <= 0.10 && ch <= 0.50;
    ok += pass;
    per_shape += (k ? ", " : "") + fmt(mis) + "/" + fmt(ch);
    runs.push_back({{"shape", s}, {"mismatch_ratio", mis}, {"chamfer_ratio", ch}, {"pass", pass}});
  }
  Outcome o;
  o.pass = ok >= 3;
  o.detail = std::to_string(ok) + "/5 held-out shapes with mismatch <= 10% and Chamfer <= 50% of initial (need 3); "
             "ratios " + per_shape;
  o.metrics = {{"runs", runs}};
  return o;
}

// ---------------------------------------------------------------- 11 forces

struct Checks {
  std::size_t total = 0, failed = 0;
  std::string first_failure;
  void expect(bool ok, const std::string& what) {
    ++total;
    if (!ok && failed++ == 0) first_failure = what;
  }
};

forces::CvBoundary boundary_of(const forces::CvSpec& cv, const std::function<forces::FlowSample(geo::Vec2)>& f) {
  forces::CvBoundary b;
  for (const auto& p : cv.left()) b.left.push_back(f(p));
  for (const auto& p : cv.right()) b.right.push_back(f(p));
  for (const auto& p : cv.bottom()) b.bottom.push_back(f(p));
  for (const auto& p : cv.top()) b.top.push_back(f(p));
  b.dx = cv.dx();
  b.dy = cv.dy();
  return b;
}

Outcome criterion_forces() {
  using namespace forces;
  Checks c;
  const CvSpec cv;
  const auto near = [](double a, double b, double tol) { return std::fabs(a - b) <= tol; };

  const Force still = cv_forces(boundary_of(cv, [](geo::Vec2) { return FlowSample{0.0, 0.0, 2.0}; }), 1.0);
  c.expect(near(still.fx, 0.0, 1e-12) && near(still.fy, 0.0, 1e-12), "constant pressure");
  const Force uniform = cv_forces(boundary_of(cv, [](geo::Vec2) { return FlowSample{0.7, 0.0, 0.0}; }), 1.0);
  c.expect(near(uniform.fx, 0.0, 1e-12) && near(uniform.fy, 0.0, 1e-12), "uniform flow");
  const Force linear = cv_forces(boundary_of(cv, [](geo::Vec2 p) { return FlowSample{0.0, 0.0, p.x}; }), 1.0);
  c.expect(near(linear.fx, -6.0, 1e-12) && near(linear.fy, 0.0, 1e-12), "p = x gives (-6, 0)");
  {
    Rng rng(110);
    const auto a = boundary_of(cv, [&](geo::Vec2) { return FlowSample{rng.normal(), rng.normal(), rng.normal()}; });
    const auto b = boundary_of(cv, [&](geo::Vec2) { return FlowSample{rng.normal(), rng.normal(), rng.normal()}; });
    // Pressure enters linearly: forces of (u, v, p_a + p_b) = forces of (u, v, p_a) + forces of (0, 0, p_b).
    CvBoundary sum = a, pb = b;
    auto sides = [](CvBoundary& x) { return std::vector<std::vector<FlowSample>*>{&x.left, &x.right, &x.bottom, &x.top}; };
    auto ss = sides(sum), sb = sides(pb);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t i = 0; i < ss[k]->size(); ++i) {
        (*ss[k])[i].p += (*sb[k])[i].p;
        (*sb[k])[i].u = (*sb[k])[i].v = 0.0;
      }
    const Force fs = cv_forces(sum, 1.0), fa = cv_forces(a, 1.0), fb = cv_forces(pb, 1.0);
    c.expect(near(fs.fx, fa.fx + fb.fx, 1e-12) && near(fs.fy, fa.fy + fb.fy, 1e-12), "superposition");
  }
  {
    auto b = boundary_of(cv, [](geo::Vec2) { return FlowSample{}; });
    b.left.clear();
    bool threw = false;
    try {
      cv_forces(b, 1.0);
    } catch (const ValidationError&) {
      threw = true;
    }
    c.expect(threw, "empty side rejected");
  }

  const LiftDrag l0 = lift_drag(0.4, 0.9, 0.0);
  c.expect(l0.lift == 0.9 && l0.drag == 0.4, "alpha = 0");
  const LiftDrag l90 = lift_drag(0.0, 1.0, std::numbers::pi / 2);
  c.expect(near(l90.lift, 0.0, 1e-15) && near(l90.drag, 1.0, 1e-15), "alpha = 90 deg");
  {
    Rng rng(111);
    bool ok = true;
    for (int k = 0; k < 100; ++k) {
      const double fx = rng.normal(), fy = rng.normal(), a = rng.uniform(-4.0, 4.0);
      const LiftDrag ld = lift_drag(fx, fy, a);
      ok = ok && near(std::hypot(ld.lift, ld.drag), std::hypot(fx, fy), 1e-12);
    }
    c.expect(ok, "rotation preserves magnitude");
  }

  c.expect(aero_coeffs(0.0, 0.3, kDefaultQInf, kDefaultChord).cl == 0.0, "L = 0");
  c.expect(near(aero_coeffs(0.75 * 0.005, 0.0, 0.005, 1.0).cl, 0.75, 1e-15), "C_L = 0.75");
  {
    const AeroCoeffs a = aero_coeffs(0.2, 0.01, 0.005, 1.0), b = aero_coeffs(0.2, 0.01, 0.01, 1.0);
    c.expect(near(b.cl, a.cl / 2, 1e-15) && near(b.cd, a.cd / 2, 1e-15), "doubling q_inf halves coefficients");
  }

  c.expect(aero_objective(1.1, 0.015, kDefaultCdMax, kDefaultLambdaCd) == -1.1, "hinge inactive");
  c.expect(near(aero_objective(1.1, 0.03, 0.02, 100.0, true) + 1.1, 0.01, 1e-15), "squared hinge 0.01");
  c.expect(aero_objective(1.1, 0.5, 0.02, 0.0) == -1.1, "lambda_cd = 0");

  {
    std::vector<SurfaceSample> square;
    const geo::Vec2 normals[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (int f = 0; f < 4; ++f)
      for (int i = 0; i < 100; ++i) square.push_back({f == 0 ? 1.0 : 0.0, normals[f], 0.01});
    c.expect(near(drag_proxy(square), -1.0, 1e-12), "unit square right face");
    for (auto& s : square) s.area *= 2.0;
    c.expect(near(drag_proxy(square), -2.0, 1e-12), "doubling area doubles drag");
    std::vector<SurfaceSample> closed;
    double area = 0.0;
    for (int i = 0; i < 500; ++i) {
      const double t = 2.0 * std::numbers::pi * (i + 0.5) / 500.0;
      closed.push_back({3.0, {std::cos(t), std::sin(t)}, 0.002});
      area += 0.002;
    }
    c.expect(near(drag_proxy(closed), 0.0, 1e-10 * area), "constant pressure on closed surface");
    square[5].normal = {0.6, 0.6};
    bool threw = false;
    try {
      drag_proxy(square);
    } catch (const ValidationError&) {
      threw = true;
    }
    c.expect(threw, "non-unit normal rejected");
  }

  {
    const std::vector<double> zi{0.5, -0.5, 0.25, 1.0};
    c.expect(drag_objective(0.3, zi, zi) == 0.3, "anchor at z_init");
    std::vector<double> z = zi;
    z[0] += 2.0;  // |z - z_init|^2 = 4
    c.expect(near(drag_objective(0.3, z, zi, 0.001) - 0.3, 0.004, 1e-15), "anchor 0.004");
    Tape tape;
    const Var zv = tape.leaf(Tensor(1, 4, z));
    const Tensor g = tape.backward(drag_objective(tape.constant(Tensor::scalar(0.3)), zv, zi, 0.001)).wrt(zv);
    bool ok = true;
    for (std::size_t i = 0; i < 4; ++i) ok = ok && near(g[i], 2.0 * 0.001 * (z[i] - zi[i]), 1e-12);
    c.expect(ok, "anchor gradient");
  }

  c.expect(kDefaultLambdaCd == 100.0 && kDefaultCdMax == 0.020 && kDefaultQInf == 0.0050 &&
               kDefaultAlphaDeg == 4.0 && kDefaultRho == 1.0 && kDefaultLambdaReg == 0.001,
           "default constants");
  const opt::OptRunConfig run;
  c.expect(run.lambda_cd == 100.0 && run.cd_max == 0.020 && run.lambda_reg == 0.001, "loop defaults");

  Outcome o;
  o.pass = c.failed == 0;
  o.detail = std::to_string(c.total - c.failed) + "/" + std::to_string(c.total) + " forces examples" +
             (c.failed ? "; first failure: " + c.first_failure : "");
  o.metrics = {{"checks", c.total}, {"failed", c.failed}};
  return o;
}

// ---------------------------------------------------------------- 12 Helmholtz

Outcome criterion_helmholtz(Desk& desk) {
  const helm::ComplexField zero = helm::solve_forward(geo::make_grid(64), 7.0, 0.0);
  bool zero_ok = true;
  for (std::size_t i = 0; i < zero.re.values.size(); ++i)
    zero_ok = zero_ok && zero.re.values[i] == 0.0 && zero.im.values[i] == 0.0;

  double worst_res = 0.0, worst_conv = 0.0;
  const auto shapes = desk.test_shapes();
  for (std::size_t k = 0; k < 3; ++k) {
    for (double angle : helm::equispaced_angles(4)) {
      double res = 0.0;
      helm::solve_forward(helm::rasterize_q(shapes[k], 64, 1.0), 7.0, angle, &res);
      worst_res = std::max(worst_res, res);
    }
    const geo::Vec2 probe{0.4, 0.1};
    const double coarse = std::abs(helm::solve_forward(helm::rasterize_q(shapes[k], 64, 1.0), 7.0, 0.0).interpolate(probe));
    double res128 = 0.0;
    const double fine =
        std::abs(helm::solve_forward(helm::rasterize_q(shapes[k], 128, 1.0), 7.0, 0.0, &res128).interpolate(probe));
    worst_res = std::max(worst_res, res128);
    worst_conv = std::max(worst_conv, std::fabs(coarse - fine) / fine);
  }
  Outcome o;
  o.pass = zero_ok && worst_res < 1e-10 && worst_conv < 0.05;
  o.detail = std::string("q=0 gives psi=0: ") + (zero_ok ? "yes" : "no") + "; max residual " + fmt(worst_res) +
             "; max probe change n=64 vs 128 " + fmt(100 * worst_conv) + "% (bar 5%)";
  o.metrics = {{"zero_field", zero_ok}, {"max_residual", worst_res}, {"max_probe_change", worst_conv}};
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite for the gano library"};
  std::string cache = GANO_ACCEPTANCE_CACHE;
  std::string report;
  std::vector<int> only;
  app.add_option("--cache", cache, "Directory for cached desk models");
  app.add_option("--report", report, "Write a JSON report to this path");
  app.add_option("--only", only, "Run only these criteria (1-12)")->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);

  Desk desk(cache);
  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> criteria{
      {1, "autodiff finite differences", [] { return criterion_autodiff(); }},
      {2, "projector identities", [] { return criterion_projector(); }},
      {3, "first-order constraint invariance", [&] { return criterion_drift(desk); }},
      {4, "reprojection contraction", [&] { return criterion_contraction(desk); }},
      {5, "denoising bound", [&] { return criterion_denoising(desk); }},
      {6, "sensitivity reduction", [&] { return criterion_sensitivity(desk); }},
      {7, "surface Lipschitz bound", [&] { return criterion_lipschitz(desk); }},
      {8, "gradient mismatch bound", [&] { return criterion_grad_mismatch(desk); }},
      {9, "held-out reconstruction F1", [&] { return criterion_reconstruction(desk); }},
      {10, "end-to-end inversion", [&] { return criterion_inversion(desk); }},
      {11, "forces exactness", [] { return criterion_forces(); }},
      {12, "Helmholtz solver", [&] { return criterion_helmholtz(desk); }},
  };

  const std::set<int> selected(only.begin(), only.end());
  json out = json::array();
  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const double secs = seconds_since(t0);
    std::printf("criterion %2d %-34s %s  %s [%.1fs]\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs);
    std::fflush(stdout);
    failed += !o.pass;
    out.push_back({{"id", c.id}, {"name", c.name}, {"pass", o.pass}, {"detail", o.detail}, {"seconds", secs},
                   {"metrics", o.metrics}});
  }
  if (!report.empty()) std::ofstream(report) << out.dump(2) << '\n';
  return failed == 0 ? 0 : 1;
}
