#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "gano/autodiff.hpp"
#include "gano/geometry.hpp"
#include "gano/params.hpp"

namespace gano::sdf {

struct DecoderConfig {
  std::size_t latent_dim = 16;
  std::vector<std::size_t> hidden{64, 64, 64};
};

/// MLP s(x, z): input row [x, y, z_1..z_d], SiLU hidden layers, scalar output.
/// Parameters are W0, b0, W1, b1, ... with W_l of shape fan_in x fan_out.
class SdfDecoder {
 public:
  SdfDecoder() = default;
  SdfDecoder(DecoderConfig cfg, std::uint64_t seed);
  SdfDecoder(DecoderConfig cfg, ParamSet params);

  const DecoderConfig& config() const { return cfg_; }
  std::size_t latent_dim() const { return cfg_.latent_dim; }
  std::size_t input_dim() const { return 2 + cfg_.latent_dim; }
  std::size_t layer_count() const { return cfg_.hidden.size() + 1; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Recorded forward pass; bound comes from params().bind(tape, ...).
  ad::Var forward(ad::Tape& tape, const std::vector<ad::Var>& bound, ad::Var inputs) const;

  /// Tape-free evaluation of n input rows; bitwise equal to forward.
  std::vector<double> eval_rows(std::span<const double> inputs, std::size_t n) const;
  std::vector<double> eval(std::span<const geo::Vec2> xs, std::span<const double> z) const;
  double eval(geo::Vec2 x, std::span<const double> z) const;

  struct PointGrad {
    double s = 0.0;
    geo::Vec2 grad_x;
    std::vector<double> grad_z;
  };
  /// Values and per-point gradients from one reverse pass over the batch.
  /// Rows are independent, so the gradient of the summed output with respect
  /// to each input row is that row's own gradient.
  std::vector<PointGrad> eval_with_grad(std::span<const geo::Vec2> xs, std::span<const double> z) const;

  /// Decoder sampled on a square grid over bounds.
  geo::GridField eval_grid(std::span<const double> z, std::size_t n, geo::Box bounds = {}) const;

 private:
  void check_latent(std::span<const double> z) const;

  DecoderConfig cfg_;
  ParamSet params_;
};

/// Per-shape latent codes; row i belongs to training shape i.
struct LatentTable {
  ad::Tensor codes;

  std::size_t size() const { return codes.rows(); }
  std::size_t dim() const { return codes.cols(); }
  std::vector<double> code(std::size_t i) const;
};

struct TrainingPair {
  geo::Vec2 x;
  double s = 0.0;
};

/// near_fraction of the points are boundary points offset along the outward
/// normal by N(0, band^2); the rest are uniform on [-1, 1]^2. s is exact.
std::vector<TrainingPair> sample_training_pairs(const geo::FourierShape& shape, std::size_t n,
                                                std::uint64_t seed, double near_fraction = 0.7,
                                                double band = 0.05);

struct SdfTrainConfig {
  double sigma = 0.01;
  double lambda = 1e-4;
  double lr = 1e-3;
  double latent_lr = 1e-3;
  double lr_floor = 0.05;  // cosine schedule ends at lr * lr_floor
  std::size_t epochs = 200;
  std::size_t shapes_per_batch = 8;
  std::size_t points_per_shape = 256;  // distinct pool points per batch use
  std::size_t samples_per_shape = 2048;
  double near_fraction = 0.7;
  double band = 0.05;
  std::uint64_t seed = 0;
};

struct SdfModel {
  SdfDecoder decoder;
  LatentTable latents;
  std::size_t epochs_done = 0;
};

/// Called after every epoch with (epoch index, mean batch loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Joint Adam fit of decoder and latents on the denoising objective
/// mean |s(x, z_i + eps) - s| + lambda ||z_i||^2 with eps ~ N(0, sigma^2 I)
/// drawn per batch use of a latent. Throws NumericalError naming the epoch
/// on a non-finite loss. When resume is given, training continues from its
/// parameters and epoch counter.
SdfModel train_stablesdf(const std::vector<geo::FourierShape>& shapes, const SdfTrainConfig& cfg,
                         const DecoderConfig& dcfg, const EpochCallback& on_epoch = {},
                         const SdfModel* resume = nullptr);

/// The objective above for one batch, exposed for tests. noise has one row
/// per shape in the batch.
double denoising_loss(const SdfDecoder& decoder, std::span<const TrainingPair> pairs,
                      std::span<const double> z, std::span<const double> noise, double lambda);

/// Test-time latent fit with the decoder frozen, starting from z = 0 and
/// without latent noise.
std::vector<double> fit_latent(const SdfDecoder& decoder, std::span<const TrainingPair> samples,
                               std::size_t steps, double lr, double lambda);

std::vector<double> latent_jacobian_norms(const SdfDecoder& decoder, std::span<const double> z,
                                          std::span<const geo::Vec2> points);

struct DenoisingBound {
  double lhs = 0.0;        // Monte-Carlo E|s(x, z + eps) - s|
  double lhs_stderr = 0.0;
  double rhs = 0.0;        // |r| + sigma sqrt(2/pi) ||grad_z s||
  double residual = 0.0;   // r = s(x, z) - s
  double grad_z_norm = 0.0;
};

DenoisingBound check_denoising_bound(const SdfDecoder& decoder, std::span<const double> z,
                                     geo::Vec2 x, double s, double sigma, std::size_t n_mc,
                                     std::uint64_t seed);

/// Zero-level contour of the decoder for latent z, sampled on an n x n grid.
std::vector<geo::Polyline> decode_contours(const SdfDecoder& decoder, std::span<const double> z,
                                           std::size_t n, geo::Box bounds = {});

void save_sdf(const std::filesystem::path& path, const SdfModel& model);
SdfModel load_sdf(const std::filesystem::path& path);

}  // namespace gano::sdf
