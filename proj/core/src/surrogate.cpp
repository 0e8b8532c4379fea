#include "gano/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gano/checkpoint.hpp"
#include "gano/errors.hpp"
#include "gano/rng.hpp"
#include "json.hpp"

namespace gano::surrogate {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void SurrogateConfig::validate() const {
  if (slices < 2) throw ValidationError("surrogate: slices must be >= 2");
  if (heads == 0 || width % heads != 0) throw ValidationError("surrogate: width must be divisible by heads");
  if (!(eps_slice > 0.0)) throw ValidationError("surrogate: eps_slice must be > 0");
  if (in_dim == 0 || out_dim == 0 || blocks == 0 || ffn_mult == 0)
    throw ValidationError("surrogate: in_dim, out_dim, blocks and ffn_mult must be positive");
}

// ---------------------------------------------------------------- components

Var slice_assign(Var h, Var w_s) { return ad::softmax_rows(ad::matmul(h, w_s)); }

Var slice_aggregate(Var w, Var h, Var w_v, double eps) {
  const Var mass = ad::add_scalar(ad::col_sums(w), eps);
  const Var alpha = ad::mul_row(w, ad::reciprocal(mass));
  return ad::matmul(ad::transpose(alpha), ad::matmul(h, w_v));
}

Var gate_inject(Var tokens, Var z, Var w_1, Var b_1, Var w_2, Var b_2, Var w_z) {
  const Var hidden = ad::silu(ad::add_row(ad::matmul(tokens, w_1), b_1));
  const Var gate = ad::sigmoid(ad::add_row(ad::matmul(hidden, w_2), b_2));
  const Var inj = ad::broadcast_rows(ad::matmul(z, w_z), tokens.shape().rows);
  return ad::add(tokens, ad::mul(gate, inj));
}

Var token_attention(Var tokens, Var w_q, Var w_k, Var w_v, std::size_t heads, std::vector<Var>* weights_out) {
  const std::size_t width = w_q.shape().cols;
  if (heads == 0 || width % heads != 0)
    throw ValidationError("token_attention: width " + std::to_string(width) + " not divisible by " +
                          std::to_string(heads) + " heads");
  const std::size_t dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Var q = ad::matmul(tokens, w_q), k = ad::matmul(tokens, w_k), v = ad::matmul(tokens, w_v);
  Var out;
  for (std::size_t h = 0; h < heads; ++h) {
    const Var qh = ad::slice_cols(q, h * dh, dh);
    const Var kh = ad::slice_cols(k, h * dh, dh);
    const Var vh = ad::slice_cols(v, h * dh, dh);
    const Var att = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), scale));
    if (weights_out) weights_out->push_back(att);
    const Var oh = ad::matmul(att, vh);
    out = h == 0 ? oh : ad::concat_cols(out, oh);
  }
  return out;
}

Var deslice(Var w, Var tokens, Var w_o) { return ad::matmul(w, ad::matmul(tokens, w_o)); }

// ---------------------------------------------------------------- model

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng, double gain = 1.0) {
  const double a = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(fan_in, fan_out);
  for (double& v : w.values()) v = rng.uniform(-a, a);
  return w;
}

std::string block_name(std::size_t b, const char* field) { return "block" + std::to_string(b) + "." + field; }

}  // namespace

Surrogate::Surrogate(SurrogateConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed, "surrogate/init");
  const std::size_t d = cfg_.width, g = cfg_.slices, f = cfg_.width * cfg_.ffn_mult;
  params_.add("embed.W1", glorot(cfg_.in_dim, d, rng));
  params_.add("embed.b1", Tensor(1, d));
  params_.add("embed.W2", glorot(d, d, rng));
  params_.add("embed.b2", Tensor(1, d));
  for (std::size_t b = 0; b < cfg_.blocks; ++b) {
    params_.add(block_name(b, "W_s"), glorot(d, g, rng));
    params_.add(block_name(b, "W_v"), glorot(d, d, rng));
    params_.add(block_name(b, "W_q"), glorot(d, d, rng));
    params_.add(block_name(b, "W_k"), glorot(d, d, rng));
    params_.add(block_name(b, "W_att_v"), glorot(d, d, rng));
    params_.add(block_name(b, "W_o"), glorot(d, d, rng));
    if (cfg_.inject_every_block || b == 0) {
      params_.add(block_name(b, "W_1"), glorot(d, d, rng));
      params_.add(block_name(b, "b_1"), Tensor(1, d));
      params_.add(block_name(b, "W_2"), glorot(d, d, rng));
      params_.add(block_name(b, "b_2"), Tensor(1, d));
      params_.add(block_name(b, "W_z"), glorot(cfg_.latent_dim, d, rng));
    }
    params_.add(block_name(b, "ffn.W1"), glorot(d, f, rng));
    params_.add(block_name(b, "ffn.b1"), Tensor(1, f));
    params_.add(block_name(b, "ffn.W2"), glorot(f, d, rng, 0.5));
    params_.add(block_name(b, "ffn.b2"), Tensor(1, d));
  }
  params_.add("head.W1", glorot(d, d, rng));
  params_.add("head.b1", Tensor(1, d));
  params_.add("head.W2", glorot(d, cfg_.out_dim, rng, 0.5));
  params_.add("head.b2", Tensor(1, cfg_.out_dim));
}

Surrogate::Surrogate(SurrogateConfig cfg, ParamSet params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  const Surrogate reference(cfg_, 0);
  if (reference.params_.size() != params_.size())
    throw ValidationError("Surrogate: expected " + std::to_string(reference.params_.size()) +
                          " parameter tensors, got " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (reference.params_.name(i) != params_.name(i) || reference.params_[i].shape() != params_[i].shape())
      throw ValidationError("Surrogate: parameter " + params_.name(i) + " " + params_[i].shape().str() +
                            " does not match expected " + reference.params_.name(i) + " " +
                            reference.params_[i].shape().str());
}

Var Surrogate::forward(Tape& tape, const std::vector<Var>& p, Var queries, Var z) const {
  (void)tape;
  if (queries.shape().cols != cfg_.in_dim)
    throw ValidationError("Surrogate::forward: queries have " + std::to_string(queries.shape().cols) +
                          " columns, expected " + std::to_string(cfg_.in_dim));
  if (z.shape() != ad::Shape{1, cfg_.latent_dim})
    throw ValidationError("Surrogate::forward: latent shape " + z.shape().str() + ", expected " +
                          ad::Shape{1, cfg_.latent_dim}.str());
  auto P = [&](const std::string& name) { return p[param(name)]; };
  auto B = [&](std::size_t b, const char* field) { return p[param(block_name(b, field))]; };

  Var h = ad::silu(ad::add_row(ad::matmul(queries, P("embed.W1")), P("embed.b1")));
  h = ad::add_row(ad::matmul(h, P("embed.W2")), P("embed.b2"));
  for (std::size_t b = 0; b < cfg_.blocks; ++b) {
    const Var hn = ad::layer_norm_rows(h);
    const Var w = slice_assign(hn, B(b, "W_s"));
    Var t = slice_aggregate(w, hn, B(b, "W_v"), cfg_.eps_slice);
    if (cfg_.inject_every_block || b == 0)
      t = gate_inject(t, z, B(b, "W_1"), B(b, "b_1"), B(b, "W_2"), B(b, "b_2"), B(b, "W_z"));
    t = token_attention(t, B(b, "W_q"), B(b, "W_k"), B(b, "W_att_v"), cfg_.heads);
    h = ad::add(h, deslice(w, t, B(b, "W_o")));
    const Var f = ad::silu(ad::add_row(ad::matmul(ad::layer_norm_rows(h), B(b, "ffn.W1")), B(b, "ffn.b1")));
    h = ad::add(h, ad::add_row(ad::matmul(f, B(b, "ffn.W2")), B(b, "ffn.b2")));
  }
  const Var o = ad::silu(ad::add_row(ad::matmul(ad::layer_norm_rows(h), P("head.W1")), P("head.b1")));
  return ad::add_row(ad::matmul(o, P("head.W2")), P("head.b2"));
}

Var Surrogate::forward(Tape& tape, Var queries, Var z) const {
  return forward(tape, params_.bind(tape, false), queries, z);
}

Tensor Surrogate::predict(const Tensor& queries, std::span<const double> z) const {
  Tape tape;
  const Var q = tape.constant(queries);
  const Var zv = tape.constant(Tensor(1, z.size(), std::vector<double>(z.begin(), z.end())));
  return forward(tape, q, zv).value();
}

// ---------------------------------------------------------------- training

Var relative_l1(Var pred, Var target) {
  const double denom = [&] {
    double s = 0.0;
    for (double v : target.value().values()) s += std::fabs(v);
    return s;
  }();
  if (!(denom > 0.0)) throw ValidationError("relative_l1: target has zero L1 norm");
  return ad::scale(ad::sum(ad::abs(ad::sub(pred, target))), 1.0 / denom);
}

std::size_t train_surrogate(Surrogate& model, const EpochSamples& samples, const SurrogateTrainConfig& cfg,
                            const SurrogateEpochCallback& on_epoch, std::size_t start_epoch) {
  if (cfg.batch == 0) throw ValidationError("train_surrogate: batch must be >= 1");
  AdamGroup opt(model.params(), AdamConfig{cfg.lr});
  std::size_t steps_per_epoch = 0;
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<SurrogateSample> data = samples(epoch);
    if (data.empty()) throw ValidationError("train_surrogate: epoch produced no samples");
    steps_per_epoch = (data.size() + cfg.batch - 1) / cfg.batch;
    const std::size_t total = cfg.epochs * steps_per_epoch;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed, "surrogate/order/epoch-" + std::to_string(epoch));
    std::shuffle(order.begin(), order.end(), rng.engine());

    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      opt.set_lr(cosine_lr(cfg.lr, epoch * steps_per_epoch + s, total, cfg.lr_floor));
      const std::size_t first = s * cfg.batch;
      const std::size_t k = std::min(cfg.batch, data.size() - first);
      Tape tape;
      const auto bound = model.params().bind(tape, true);
      Var loss;
      for (std::size_t a = 0; a < k; ++a) {
        const SurrogateSample& smp = data[order[first + a]];
        const Var q = tape.constant(smp.queries);
        const Var z = tape.constant(Tensor(1, smp.z.size(), smp.z));
        const Var pred = model.forward(tape, bound, q, z);
        const Var l = relative_l1(pred, tape.constant(smp.target));
        loss = a == 0 ? l : ad::add(loss, l);
      }
      loss = ad::scale(loss, 1.0 / static_cast<double>(k));
      const double lv = loss.value().item();
      if (!std::isfinite(lv))
        throw NumericalError("train_surrogate: non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += lv;
      opt.step(model.params(), tape.backward(loss), bound);
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(steps_per_epoch));
  }
  return cfg.epochs;
}

void save_surrogate(const std::filesystem::path& path, const Surrogate& model, std::uint64_t epochs_done) {
  const SurrogateConfig& c = model.config();
  nlohmann::json meta;
  meta["in_dim"] = c.in_dim;
  meta["out_dim"] = c.out_dim;
  meta["slices"] = c.slices;
  meta["width"] = c.width;
  meta["blocks"] = c.blocks;
  meta["heads"] = c.heads;
  meta["latent_dim"] = c.latent_dim;
  meta["ffn_mult"] = c.ffn_mult;
  meta["eps_slice"] = c.eps_slice;
  meta["inject_every_block"] = c.inject_every_block;
  Checkpoint ck;
  ck.kind = "surrogate";
  ck.meta = meta.dump();
  ck.step = epochs_done;
  ck.params = model.params();
  save_checkpoint(path, ck);
}

Surrogate load_surrogate(const std::filesystem::path& path, std::uint64_t* epochs_done) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "surrogate")
    throw ValidationError(path.string() + ": expected a surrogate checkpoint, found " + ck.kind);
  const auto m = nlohmann::json::parse(ck.meta);
  SurrogateConfig c;
  c.in_dim = m.at("in_dim");
  c.out_dim = m.at("out_dim");
  c.slices = m.at("slices");
  c.width = m.at("width");
  c.blocks = m.at("blocks");
  c.heads = m.at("heads");
  c.latent_dim = m.at("latent_dim");
  c.ffn_mult = m.at("ffn_mult");
  c.eps_slice = m.at("eps_slice");
  c.inject_every_block = m.at("inject_every_block");
  if (epochs_done) *epochs_done = ck.step;
  return Surrogate(c, std::move(ck.params));
}

}  // namespace gano::surrogate
