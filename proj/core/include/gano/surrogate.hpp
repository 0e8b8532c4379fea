#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "gano/autodiff.hpp"
#include "gano/params.hpp"

namespace gano::surrogate {

/// A latent-conditioned field predictor: queries N x in_dim, latent 1 x d,
/// output N x out_dim, differentiable in both.
class FieldModel {
 public:
  virtual ~FieldModel() = default;
  virtual std::size_t in_dim() const = 0;
  virtual std::size_t out_dim() const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual ad::Var forward(ad::Tape& tape, ad::Var queries, ad::Var z) const = 0;
};

struct SurrogateConfig {
  std::size_t in_dim = 4;  // x, y, cos(angle), sin(angle)
  std::size_t out_dim = 2;
  std::size_t slices = 8;
  std::size_t width = 64;
  std::size_t blocks = 3;
  std::size_t heads = 4;
  std::size_t latent_dim = 16;
  std::size_t ffn_mult = 2;
  double eps_slice = 1e-8;
  bool inject_every_block = true;  // false: first block only

  /// Throws ValidationError unless slices >= 2, width % heads == 0, eps > 0.
  void validate() const;
};

// Block components. Weight matrices multiply row features from the right.

/// Row-wise softmax of h W_s: N x G slice weights.
ad::Var slice_assign(ad::Var h, ad::Var w_s);

/// alpha = w / (column sums of w + eps); tokens = alpha^T (h W_v), G x D.
ad::Var slice_aggregate(ad::Var w, ad::Var h, ad::Var w_v, double eps);

/// t + sigmoid(SiLU(t W_1 + b_1) W_2 + b_2) * (z W_z) with z W_z broadcast
/// over tokens.
ad::Var gate_inject(ad::Var tokens, ad::Var z, ad::Var w_1, ad::Var b_1, ad::Var w_2, ad::Var b_2,
                    ad::Var w_z);

/// Multi-head scaled dot-product self-attention over the G tokens; head
/// outputs are concatenated. When weights_out is given it receives the
/// per-head G x G attention matrices.
ad::Var token_attention(ad::Var tokens, ad::Var w_q, ad::Var w_k, ad::Var w_v, std::size_t heads,
                        std::vector<ad::Var>* weights_out = nullptr);

/// h_i = sum_g w_{i,g} (tokens W_o)_g.
ad::Var deslice(ad::Var w, ad::Var tokens, ad::Var w_o);

class Surrogate : public FieldModel {
 public:
  Surrogate() = default;
  Surrogate(SurrogateConfig cfg, std::uint64_t seed);
  Surrogate(SurrogateConfig cfg, ParamSet params);

  const SurrogateConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  std::size_t in_dim() const override { return cfg_.in_dim; }
  std::size_t out_dim() const override { return cfg_.out_dim; }
  std::size_t latent_dim() const override { return cfg_.latent_dim; }

  /// Forward pass with parameters bound by params().bind.
  ad::Var forward(ad::Tape& tape, const std::vector<ad::Var>& bound, ad::Var queries, ad::Var z) const;
  /// Forward pass with frozen parameters.
  ad::Var forward(ad::Tape& tape, ad::Var queries, ad::Var z) const override;
  ad::Tensor predict(const ad::Tensor& queries, std::span<const double> z) const;

 private:
  std::size_t param(const std::string& name) const { return params_.index_of(name); }

  SurrogateConfig cfg_;
  ParamSet params_;
};

struct SurrogateSample {
  ad::Tensor queries;      // N x in_dim
  std::vector<double> z;   // latent of the geometry
  ad::Tensor target;       // N x out_dim
};

struct SurrogateTrainConfig {
  double lr = 1e-3;
  double lr_floor = 0.02;
  std::size_t epochs = 60;
  std::size_t batch = 4;
  std::uint64_t seed = 0;
};

/// sum |pred - target| / sum |target| over one sample.
ad::Var relative_l1(ad::Var pred, ad::Var target);

/// Supplies the training samples of one epoch (queries may be redrawn).
using EpochSamples = std::function<std::vector<SurrogateSample>(std::size_t epoch)>;
using SurrogateEpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Adam with cosine decay on the per-sample relative L1 loss, batch-averaged.
/// Throws NumericalError naming the epoch on a non-finite loss.
std::size_t train_surrogate(Surrogate& model, const EpochSamples& samples, const SurrogateTrainConfig& cfg,
                            const SurrogateEpochCallback& on_epoch = {}, std::size_t start_epoch = 0);

void save_surrogate(const std::filesystem::path& path, const Surrogate& model, std::uint64_t epochs_done = 0);
Surrogate load_surrogate(const std::filesystem::path& path, std::uint64_t* epochs_done = nullptr);

}  // namespace gano::surrogate
