#include "gano/stablesdf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "gano/checkpoint.hpp"
#include "gano/errors.hpp"
#include "gano/kernels.hpp"
#include "gano/rng.hpp"
#include "json.hpp"

namespace gano::sdf {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr std::size_t kEvalChunk = 2048;

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) entries.
Tensor fan_in_uniform(std::size_t fan_in, std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w(rows, cols);
  for (double& v : w.values()) v = rng.uniform(-a, a);
  return w;
}

/// Rows [x, y, z] for every point.
Tensor point_rows(std::span<const geo::Vec2> xs, std::span<const double> z) {
  Tensor in(xs.size(), 2 + z.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    in(i, 0) = xs[i].x;
    in(i, 1) = xs[i].y;
    for (std::size_t k = 0; k < z.size(); ++k) in(i, 2 + k) = z[k];
  }
  return in;
}

}  // namespace

// ---------------------------------------------------------------- decoder

SdfDecoder::SdfDecoder(DecoderConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.hidden.empty()) throw ValidationError("SdfDecoder: need at least one hidden layer");
  Rng rng(seed, "sdf/init");
  std::size_t fan_in = input_dim();
  for (std::size_t l = 0; l <= cfg_.hidden.size(); ++l) {
    const std::size_t fan_out = l < cfg_.hidden.size() ? cfg_.hidden[l] : 1;
    params_.add("W" + std::to_string(l), fan_in_uniform(fan_in, fan_in, fan_out, rng));
    params_.add("b" + std::to_string(l), fan_in_uniform(fan_in, 1, fan_out, rng));
    fan_in = fan_out;
  }
}

SdfDecoder::SdfDecoder(DecoderConfig cfg, ParamSet params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  if (params_.size() != 2 * layer_count())
    throw ValidationError("SdfDecoder: expected " + std::to_string(2 * layer_count()) +
                          " parameter tensors, got " + std::to_string(params_.size()));
  std::size_t fan_in = input_dim();
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const std::size_t fan_out = l < cfg_.hidden.size() ? cfg_.hidden[l] : 1;
    if (params_[2 * l].shape() != ad::Shape{fan_in, fan_out} ||
        params_[2 * l + 1].shape() != ad::Shape{1, fan_out})
      throw ValidationError("SdfDecoder: layer " + std::to_string(l) + " has shape " +
                            params_[2 * l].shape().str() + ", expected " +
                            ad::Shape{fan_in, fan_out}.str());
    fan_in = fan_out;
  }
}

Var SdfDecoder::forward(Tape& tape, const std::vector<Var>& bound, Var inputs) const {
  (void)tape;
  if (inputs.shape().cols != input_dim())
    throw ValidationError("SdfDecoder::forward: input has " + std::to_string(inputs.shape().cols) +
                          " columns, expected " + std::to_string(input_dim()));
  Var h = inputs;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    h = ad::add_row(ad::matmul(h, bound[2 * l]), bound[2 * l + 1]);
    if (l + 1 < layer_count()) h = ad::silu(h);
  }
  return h;
}

std::vector<double> SdfDecoder::eval_rows(std::span<const double> inputs, std::size_t n) const {
  const std::size_t din = input_dim();
  if (inputs.size() != n * din) throw ValidationError("SdfDecoder::eval_rows: input size mismatch");
  std::vector<double> out(n);
  std::vector<double> a, b;
  for (std::size_t r0 = 0; r0 < n; r0 += kEvalChunk) {
    const std::size_t m = std::min(kEvalChunk, n - r0);
    a.assign(inputs.begin() + static_cast<std::ptrdiff_t>(r0 * din),
             inputs.begin() + static_cast<std::ptrdiff_t>((r0 + m) * din));
    std::size_t fan_in = din;
    for (std::size_t l = 0; l < layer_count(); ++l) {
      const Tensor& w = params_[2 * l];
      const Tensor& bias = params_[2 * l + 1];
      const std::size_t fan_out = w.cols();
      b.resize(m * fan_out);
      ad::kernels::matmul(a.data(), w.data(), b.data(), m, fan_in, fan_out);
      const bool hidden = l + 1 < layer_count();
      for (std::size_t i = 0; i < m; ++i) {
        double* row = b.data() + i * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) {
          const double v = row[j] + bias[j];
          row[j] = hidden ? ad::kernels::silu(v) : v;
        }
      }
      std::swap(a, b);
      fan_in = fan_out;
    }
    std::copy(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(m), out.begin() + static_cast<std::ptrdiff_t>(r0));
  }
  return out;
}

void SdfDecoder::check_latent(std::span<const double> z) const {
  if (z.size() != latent_dim())
    throw ValidationError("SdfDecoder: latent has " + std::to_string(z.size()) + " entries, expected " +
                          std::to_string(latent_dim()));
  for (std::size_t k = 0; k < z.size(); ++k)
    if (!std::isfinite(z[k])) throw ValidationError("SdfDecoder: non-finite latent entry " + std::to_string(k));
}

std::vector<double> SdfDecoder::eval(std::span<const geo::Vec2> xs, std::span<const double> z) const {
  check_latent(z);
  const Tensor in = point_rows(xs, z);
  return eval_rows(in.span(), xs.size());
}

double SdfDecoder::eval(geo::Vec2 x, std::span<const double> z) const {
  return eval(std::span<const geo::Vec2>(&x, 1), z)[0];
}

std::vector<SdfDecoder::PointGrad> SdfDecoder::eval_with_grad(std::span<const geo::Vec2> xs,
                                                              std::span<const double> z) const {
  check_latent(z);
  std::vector<PointGrad> out(xs.size());
  if (xs.empty()) return out;
  Tape tape;
  const auto bound = params_.bind(tape, false);
  const Var in = tape.leaf(point_rows(xs, z));
  const Var s = forward(tape, bound, in);
  const ad::Gradients g = tape.backward(ad::sum(s));
  const Tensor gin = g.wrt(in);
  const std::size_t d = latent_dim();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i].s = s.value()[i];
    out[i].grad_x = {gin(i, 0), gin(i, 1)};
    out[i].grad_z.assign(gin.data() + i * (d + 2) + 2, gin.data() + (i + 1) * (d + 2));
  }
  return out;
}

geo::GridField SdfDecoder::eval_grid(std::span<const double> z, std::size_t n, geo::Box bounds) const {
  geo::GridField g = geo::make_grid(n, bounds);
  const auto pts = g.points();
  g.values = eval(pts, z);
  return g;
}

std::vector<double> LatentTable::code(std::size_t i) const {
  if (i >= size()) throw ValidationError("LatentTable: row " + std::to_string(i) + " out of range");
  const auto r = codes.row_span(i);
  return {r.begin(), r.end()};
}

// ---------------------------------------------------------------- sampling

std::vector<TrainingPair> sample_training_pairs(const geo::FourierShape& shape, std::size_t n,
                                                std::uint64_t seed, double near_fraction, double band) {
  if (n == 0) throw ValidationError("sample_training_pairs: n must be >= 1");
  if (near_fraction < 0.0 || near_fraction > 1.0 || band < 0.0)
    throw ValidationError("sample_training_pairs: near_fraction must be in [0,1] and band >= 0");
  const geo::SdfOracle oracle(shape);
  Rng rng(seed);
  std::vector<TrainingPair> out;
  out.reserve(n);
  const auto n_near = static_cast<std::size_t>(std::llround(near_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    geo::Vec2 x;
    if (i < n_near) {
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r = shape.radius(theta), dr = shape.radius_derivative(theta);
      const double c = std::cos(theta), s = std::sin(theta);
      const geo::Vec2 tangent{dr * c - r * s, dr * s + r * c};
      const geo::Vec2 normal = geo::Vec2{tangent.y, -tangent.x} * (1.0 / tangent.norm());
      x = shape.boundary_point(theta) + normal * rng.normal(0.0, band);
    } else {
      x = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    }
    out.push_back({x, oracle(x)});
  }
  return out;
}

// ---------------------------------------------------------------- training

namespace {

struct BatchGraph {
  Var loss;
  Var latents;  // leaf, one row per shape in the batch
};

/// Records the denoising objective for a batch of k shapes with m points each.
BatchGraph record_batch(Tape& tape, const SdfDecoder& decoder, const std::vector<Var>& bound,
                        const Tensor& points, const Tensor& targets, Tensor latents,
                        const Tensor& noise, std::size_t points_per_shape, double lambda) {
  const std::size_t k = latents.rows();
  std::vector<std::size_t> owner(points.rows());
  for (std::size_t r = 0; r < owner.size(); ++r) owner[r] = r / points_per_shape;
  const Var z = tape.leaf(std::move(latents));
  const Var zn = ad::add(z, tape.constant(noise));
  const Var in = ad::concat_cols(tape.constant(points), ad::gather_rows(zn, std::move(owner)));
  const Var s = decoder.forward(tape, bound, in);
  const Var fit = ad::mean(ad::abs(ad::sub(s, tape.constant(targets))));
  const Var prior = ad::scale(ad::sum(ad::square(z)), lambda / static_cast<double>(k));
  return {ad::add(fit, prior), z};
}

}  // namespace

double denoising_loss(const SdfDecoder& decoder, std::span<const TrainingPair> pairs,
                      std::span<const double> z, std::span<const double> noise, double lambda) {
  const std::size_t d = decoder.latent_dim();
  if (z.size() != d || noise.size() != d) throw ValidationError("denoising_loss: latent size mismatch");
  Tape tape;
  const auto bound = decoder.params().bind(tape, false);
  Tensor pts(pairs.size(), 2), tgt(pairs.size(), 1);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pts(i, 0) = pairs[i].x.x;
    pts(i, 1) = pairs[i].x.y;
    tgt[i] = pairs[i].s;
  }
  Tensor zt(1, d, std::vector<double>(z.begin(), z.end()));
  Tensor nt(1, d, std::vector<double>(noise.begin(), noise.end()));
  const auto g = record_batch(tape, decoder, bound, pts, tgt, std::move(zt), nt, pairs.size(), lambda);
  return g.loss.value().item();
}

SdfModel train_stablesdf(const std::vector<geo::FourierShape>& shapes, const SdfTrainConfig& cfg,
                         const DecoderConfig& dcfg, const EpochCallback& on_epoch, const SdfModel* resume) {
  if (shapes.size() < 2) throw ValidationError("train_stablesdf: need at least 2 shapes");
  if (cfg.sigma < 0.0 || cfg.lambda < 0.0) throw ValidationError("train_stablesdf: sigma and lambda must be >= 0");
  if (cfg.shapes_per_batch == 0 || cfg.points_per_shape == 0 || cfg.samples_per_shape == 0)
    throw ValidationError("train_stablesdf: batch sizes must be positive");
  const std::size_t n_shapes = shapes.size();
  const std::size_t d = dcfg.latent_dim;

  SdfModel model;
  if (resume) {
    model = *resume;
    if (model.latents.size() != n_shapes || model.decoder.latent_dim() != d)
      throw ValidationError("train_stablesdf: resume checkpoint does not match the shape set");
  } else {
    model.decoder = SdfDecoder(dcfg, cfg.seed);
    model.latents.codes = Tensor(n_shapes, d);
    Rng init(cfg.seed, "sdf/latent-init");
    for (double& v : model.latents.codes.values()) v = init.normal(0.0, 0.01);
  }

  std::vector<std::vector<TrainingPair>> pools(n_shapes);
  for (std::size_t i = 0; i < n_shapes; ++i)
    pools[i] = sample_training_pairs(shapes[i], cfg.samples_per_shape,
                                     derive_seed(cfg.seed, "sdf/pool/shape-" + std::to_string(i)),
                                     cfg.near_fraction, cfg.band);

  AdamGroup dec_opt(model.decoder.params(), AdamConfig{cfg.lr});
  std::vector<AdamState> lat_opt(n_shapes, AdamState(d, AdamConfig{cfg.latent_lr}));

  const std::size_t batches = (n_shapes + cfg.shapes_per_batch - 1) / cfg.shapes_per_batch;
  const std::size_t total_steps = cfg.epochs * batches;
  const std::size_t m = cfg.points_per_shape;

  for (std::size_t epoch = model.epochs_done; epoch < cfg.epochs; ++epoch) {
    // Every epoch owns its own sub-streams so that resumed runs match.
    Rng order_rng(cfg.seed, "sdf/order/epoch-" + std::to_string(epoch));
    Rng point_rng(cfg.seed, "sdf/points/epoch-" + std::to_string(epoch));
    Rng noise_rng(cfg.seed, "sdf/noise/epoch-" + std::to_string(epoch));
    std::vector<std::size_t> order(n_shapes);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng.engine());

    double loss_sum = 0.0;
    std::vector<std::size_t> scratch;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      const std::size_t step = epoch * batches + bi;
      const double sched = cosine_lr(1.0, step, total_steps, cfg.lr_floor);
      dec_opt.set_lr(cfg.lr * sched);

      const std::size_t first = bi * cfg.shapes_per_batch;
      const std::size_t k = std::min(cfg.shapes_per_batch, n_shapes - first);
      Tensor pts(k * m, 2), tgt(k * m, 1), lat(k, d), noise(k, d);
      for (std::size_t a = 0; a < k; ++a) {
        const std::size_t shape = order[first + a];
        const auto& pool = pools[shape];
        // Distinct pool points per batch use while the pool allows it.
        if (scratch.size() != pool.size()) {
          scratch.resize(pool.size());
          std::iota(scratch.begin(), scratch.end(), 0);
        }
        for (std::size_t p = 0; p < m; ++p) {
          std::size_t pick;
          if (m <= pool.size()) {
            const std::size_t j = p + point_rng.index(pool.size() - p);
            std::swap(scratch[p], scratch[j]);
            pick = scratch[p];
          } else {
            pick = point_rng.index(pool.size());
          }
          const TrainingPair& tp = pool[pick];
          pts(a * m + p, 0) = tp.x.x;
          pts(a * m + p, 1) = tp.x.y;
          tgt[a * m + p] = tp.s;
        }
        for (std::size_t c = 0; c < d; ++c) {
          lat(a, c) = model.latents.codes(shape, c);
          noise(a, c) = cfg.sigma > 0.0 ? noise_rng.normal(0.0, cfg.sigma) : 0.0;
        }
      }

      Tape tape;
      const auto bound = model.decoder.params().bind(tape, true);
      const auto graph = record_batch(tape, model.decoder, bound, pts, tgt, std::move(lat), noise, m, cfg.lambda);
      const double loss = graph.loss.value().item();
      if (!std::isfinite(loss))
        throw NumericalError("train_stablesdf: non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += loss;
      const ad::Gradients grads = tape.backward(graph.loss);
      dec_opt.step(model.decoder.params(), grads, bound);
      const Tensor gz = grads.wrt(graph.latents);
      for (std::size_t a = 0; a < k; ++a) {
        const std::size_t shape = order[first + a];
        AdamState& st = lat_opt[shape];
        st.cfg.lr = cfg.latent_lr * sched;
        adam_step(st, model.latents.codes.row_span(shape), gz.row_span(a));
      }
    }
    model.epochs_done = epoch + 1;
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(batches));
  }
  return model;
}

std::vector<double> fit_latent(const SdfDecoder& decoder, std::span<const TrainingPair> samples,
                               std::size_t steps, double lr, double lambda) {
  const std::size_t d = decoder.latent_dim();
  std::vector<double> z(d, 0.0);
  if (steps == 0) return z;
  if (samples.empty()) throw ValidationError("fit_latent: no samples");
  const std::size_t n = samples.size();
  Tensor pts(n, 2), tgt(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    pts(i, 0) = samples[i].x.x;
    pts(i, 1) = samples[i].x.y;
    tgt[i] = samples[i].s;
  }
  AdamState st(d, AdamConfig{lr});
  for (std::size_t it = 0; it < steps; ++it) {
    Tape tape;
    const auto bound = decoder.params().bind(tape, false);
    const Var zv = tape.leaf(Tensor(1, d, z));
    const Var in = ad::concat_cols(tape.constant(pts), ad::broadcast_rows(zv, n));
    const Var s = decoder.forward(tape, bound, in);
    const Var loss = ad::add(ad::mean(ad::abs(ad::sub(s, tape.constant(tgt)))),
                             ad::scale(ad::sum(ad::square(zv)), lambda));
    if (!std::isfinite(loss.value().item()))
      throw NumericalError("fit_latent: non-finite loss at step " + std::to_string(it));
    const Tensor g = tape.backward(loss).wrt(zv);
    adam_step(st, z, g.span());
  }
  return z;
}

std::vector<double> latent_jacobian_norms(const SdfDecoder& decoder, std::span<const double> z,
                                          std::span<const geo::Vec2> points) {
  const auto grads = decoder.eval_with_grad(points, z);
  std::vector<double> out;
  out.reserve(grads.size());
  for (const auto& g : grads) out.push_back(ad::norm2(g.grad_z));
  return out;
}

DenoisingBound check_denoising_bound(const SdfDecoder& decoder, std::span<const double> z, geo::Vec2 x,
                                     double s, double sigma, std::size_t n_mc, std::uint64_t seed) {
  if (n_mc == 0) throw ValidationError("check_denoising_bound: n_mc must be >= 1");
  if (sigma < 0.0) throw ValidationError("check_denoising_bound: sigma must be >= 0");
  const std::size_t d = decoder.latent_dim();
  const auto g = decoder.eval_with_grad(std::span<const geo::Vec2>(&x, 1), z);
  DenoisingBound out;
  out.residual = g[0].s - s;
  out.grad_z_norm = ad::norm2(g[0].grad_z);
  out.rhs = std::fabs(out.residual) + sigma * std::sqrt(2.0 / std::numbers::pi) * out.grad_z_norm;
  if (sigma == 0.0) {
    out.lhs = std::fabs(out.residual);
    return out;
  }

  Rng rng(seed);
  const std::size_t din = decoder.input_dim();
  double sum = 0.0, sum_sq = 0.0;
  std::vector<double> rows;
  for (std::size_t done = 0; done < n_mc; done += kEvalChunk) {
    const std::size_t m = std::min(kEvalChunk, n_mc - done);
    rows.assign(m * din, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      rows[r * din] = x.x;
      rows[r * din + 1] = x.y;
      for (std::size_t k = 0; k < d; ++k) rows[r * din + 2 + k] = z[k] + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
    }
    const auto v = decoder.eval_rows(rows, m);
    for (double val : v) {
      const double e = std::fabs(val - s);
      sum += e;
      sum_sq += e * e;
    }
  }
  const double nm = static_cast<double>(n_mc);
  out.lhs = sum / nm;
  const double var = n_mc > 1 ? std::max(0.0, (sum_sq - nm * out.lhs * out.lhs) / (nm - 1.0)) : 0.0;
  out.lhs_stderr = std::sqrt(var / nm);
  return out;
}

std::vector<geo::Polyline> decode_contours(const SdfDecoder& decoder, std::span<const double> z,
                                           std::size_t n, geo::Box bounds) {
  return geo::marching_squares(decoder.eval_grid(z, n, bounds), 0.0);
}

// ---------------------------------------------------------------- persistence

void save_sdf(const std::filesystem::path& path, const SdfModel& model) {
  nlohmann::json meta;
  meta["latent_dim"] = model.decoder.latent_dim();
  meta["hidden"] = model.decoder.config().hidden;
  meta["input_dim"] = model.decoder.input_dim();
  meta["shapes"] = model.latents.size();
  Checkpoint ck;
  ck.kind = "stablesdf";
  ck.meta = meta.dump();
  ck.step = model.epochs_done;
  ck.params = model.decoder.params();
  ck.latents = model.latents.codes;
  save_checkpoint(path, ck);
}

SdfModel load_sdf(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "stablesdf")
    throw ValidationError(path.string() + ": expected a stablesdf checkpoint, found " + ck.kind);
  const auto meta = nlohmann::json::parse(ck.meta);
  DecoderConfig cfg;
  cfg.latent_dim = meta.at("latent_dim").get<std::size_t>();
  cfg.hidden = meta.at("hidden").get<std::vector<std::size_t>>();
  SdfModel model;
  model.decoder = SdfDecoder(cfg, std::move(ck.params));
  model.latents.codes = std::move(ck.latents);
  model.epochs_done = ck.step;
  return model;
}

}  // namespace gano::sdf
