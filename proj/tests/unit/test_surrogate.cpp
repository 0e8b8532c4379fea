#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "gano/errors.hpp"
#include "gano/geometry.hpp"
#include "gano/rng.hpp"
#include "gano/surrogate.hpp"
#include "test_util.hpp"

namespace gano::surrogate {
namespace {

using ad::Tape;
using ad::Tensor;
using ad::Var;

Tensor identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out(t.rows(), t.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < t.cols(); ++c) out(i, c) = t(perm[i], c);
  return out;
}

std::vector<std::size_t> random_perm(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  Rng rng(seed);
  std::shuffle(p.begin(), p.end(), rng.engine());
  return p;
}

void expect_near(Tensor a, Tensor b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "entry " << i;
}

SurrogateConfig small_config() {
  SurrogateConfig c;
  c.in_dim = 3;
  c.out_dim = 2;
  c.slices = 4;
  c.width = 16;
  c.blocks = 2;
  c.heads = 2;
  c.latent_dim = 5;
  return c;
}

// ---------------------------------------------------------------- slicing

TEST(SliceAssign, RowsAreStochasticAndZeroWeightsAreUniform) {
  Rng rng(1);
  Tape tape;
  const Var h = tape.constant(test::random_tensor(rng, 30, 8));
  const Tensor w = slice_assign(h, tape.constant(test::random_tensor(rng, 8, 5, 2.0))).value();
  for (std::size_t i = 0; i < 30; ++i) {
    double s = 0.0;
    for (std::size_t g = 0; g < 5; ++g) s += w(i, g);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const Tensor u = slice_assign(h, tape.constant(Tensor(8, 5))).value();
  for (double v : u.values()) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(SliceAssign, ConstantLogitShiftLeavesWeightsUnchanged) {
  Rng rng(2);
  Tensor h = test::random_tensor(rng, 10, 4), ws = test::random_tensor(rng, 4, 3);
  // An all-ones feature column whose weight row is constant shifts every logit equally.
  Tensor h1(10, 5), ws1(5, 3);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t c = 0; c < 4; ++c) h1(i, c) = h(i, c);
    h1(i, 4) = 1.0;
  }
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t g = 0; g < 3; ++g) ws1(r, g) = ws(r, g);
  for (std::size_t g = 0; g < 3; ++g) ws1(4, g) = 7.5;
  Tape tape;
  expect_near(slice_assign(tape.constant(h1), tape.constant(ws1)).value(),
              slice_assign(tape.constant(h), tape.constant(ws)).value(), 1e-14);
}

TEST(SliceAggregate, AlphaMassMatchesClosedForm) {
  Rng rng(3);
  const double eps = 1e-3;
  Tape tape;
  const Var w = slice_assign(tape.constant(test::random_tensor(rng, 12, 4)), tape.constant(test::random_tensor(rng, 4, 3)));
  // Unit features with an identity value map turn each token into sum_i alpha_ig.
  const Tensor mass = slice_aggregate(w, tape.constant(Tensor(12, 1, 1.0)), tape.constant(identity(1)), eps).value();
  for (std::size_t g = 0; g < 3; ++g) {
    double s = 0.0;
    for (std::size_t i = 0; i < 12; ++i) s += w.value()(i, g);
    EXPECT_NEAR(mass(g, 0), s / (s + eps), 1e-12);
    EXPECT_LE(mass(g, 0), 1.0);
  }
}

TEST(SliceAggregate, IdenticalPointsGiveScaledValueProjection) {
  Rng rng(4);
  const double eps = 1e-2;
  const Tensor row = test::random_tensor(rng, 1, 6);
  Tensor h(9, 6);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 6; ++c) h(i, c) = row(0, c);
  const Tensor wv = test::random_tensor(rng, 6, 6);
  Tape tape;
  const Var w = slice_assign(tape.constant(h), tape.constant(test::random_tensor(rng, 6, 4)));
  const Tensor tokens = slice_aggregate(w, tape.constant(h), tape.constant(wv), eps).value();
  for (std::size_t g = 0; g < 4; ++g) {
    double s = 0.0;
    for (std::size_t i = 0; i < 9; ++i) s += w.value()(i, g);
    for (std::size_t c = 0; c < 6; ++c) {
      double hv = 0.0;
      for (std::size_t k = 0; k < 6; ++k) hv += row(0, k) * wv(k, c);
      EXPECT_NEAR(tokens(g, c), hv * s / (s + eps), 1e-12);
    }
  }
}

TEST(SliceAggregate, PermutingPointsLeavesTokensUnchanged) {
  Rng rng(5);
  const Tensor h = test::random_tensor(rng, 20, 6), ws = test::random_tensor(rng, 6, 4), wv = test::random_tensor(rng, 6, 6);
  const auto perm = random_perm(20, 6);
  Tape tape;
  const auto tokens = [&](const Tensor& hh) {
    const Var hv = tape.constant(hh);
    return slice_aggregate(slice_assign(hv, tape.constant(ws)), hv, tape.constant(wv), 1e-8).value();
  };
  expect_near(tokens(permute_rows(h, perm)), tokens(h), 1e-12);
}

// ---------------------------------------------------------------- gate

struct GateWeights {
  Tensor w1, b1, w2, b2, wz;
};

GateWeights random_gate(Rng& rng, std::size_t d, std::size_t latent) {
  return {test::random_tensor(rng, d, d, 0.5), test::random_tensor(rng, 1, d, 0.1), test::random_tensor(rng, d, d, 0.5),
          test::random_tensor(rng, 1, d, 0.1), test::random_tensor(rng, latent, d)};
}

Tensor run_gate(const Tensor& tokens, const std::vector<double>& z, const GateWeights& g) {
  Tape tape;
  return gate_inject(tape.constant(tokens), tape.constant(Tensor(1, z.size(), z)), tape.constant(g.w1),
                     tape.constant(g.b1), tape.constant(g.w2), tape.constant(g.b2), tape.constant(g.wz))
      .value();
}

TEST(GateInject, ZeroLatentOrZeroProjectionLeavesTokensUnchanged) {
  Rng rng(7);
  const Tensor t = test::random_tensor(rng, 4, 8);
  GateWeights g = random_gate(rng, 8, 3);
  EXPECT_EQ(run_gate(t, {0.0, 0.0, 0.0}, g), t);
  g.wz = Tensor(3, 8);
  EXPECT_EQ(run_gate(t, {0.4, -1.0, 2.0}, g), t);
}

TEST(GateInject, LatentGradientMatchesFiniteDifferences) {
  Rng rng(8);
  const Tensor t = test::random_tensor(rng, 4, 8);
  const GateWeights g = random_gate(rng, 8, 3);
  const Tensor probe = test::random_tensor(rng, 4, 8);
  const std::vector<double> z{0.3, -0.7, 1.1};
  const auto f = [&](const std::vector<double>& zz) {
    const Tensor out = run_gate(t, zz, g);
    return ad::dot(out.values(), probe.values());
  };
  Tape tape;
  const Var zv = tape.leaf(Tensor(1, 3, z));
  const Var out = gate_inject(tape.constant(t), zv, tape.constant(g.w1), tape.constant(g.b1), tape.constant(g.w2),
                              tape.constant(g.b2), tape.constant(g.wz));
  const Var j = ad::sum(ad::mul(out, tape.constant(probe)));
  const Tensor grad = tape.backward(j).wrt(zv);
  EXPECT_LT(test::rel_error(grad.values(), test::fd_gradient(f, z)), 1e-5);
}

// ---------------------------------------------------------------- attention

TEST(TokenAttention, SingleTokenReturnsValueProjection) {
  Rng rng(9);
  const Tensor t = test::random_tensor(rng, 1, 8), wv = test::random_tensor(rng, 8, 8);
  Tape tape;
  const Var out = token_attention(tape.constant(t), tape.constant(test::random_tensor(rng, 8, 8)),
                                  tape.constant(test::random_tensor(rng, 8, 8)), tape.constant(wv), 2);
  expect_near(out.value(), ad::matmul(tape.constant(t), tape.constant(wv)).value(), 1e-14);
}

TEST(TokenAttention, RowsAreStochasticAndOutputIsEquivariant) {
  Rng rng(10);
  const Tensor t = test::random_tensor(rng, 6, 8);
  const Tensor wq = test::random_tensor(rng, 8, 8), wk = test::random_tensor(rng, 8, 8), wv = test::random_tensor(rng, 8, 8);
  Tape tape;
  std::vector<Var> att;
  const Tensor out =
      token_attention(tape.constant(t), tape.constant(wq), tape.constant(wk), tape.constant(wv), 4, &att).value();
  ASSERT_EQ(att.size(), 4u);
  for (const Var& a : att)
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 6; ++c) s += a.value()(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  const auto perm = random_perm(6, 11);
  const Tensor out_p =
      token_attention(tape.constant(permute_rows(t, perm)), tape.constant(wq), tape.constant(wk), tape.constant(wv), 4)
          .value();
  expect_near(out_p, permute_rows(out, perm), 1e-12);
}

TEST(TokenAttention, RejectsWidthNotDivisibleByHeads) {
  Tape tape;
  const Var t = tape.constant(Tensor(3, 6, 1.0)), w = tape.constant(identity(6));
  EXPECT_THROW(token_attention(t, w, w, w, 4), ValidationError);
}

// ---------------------------------------------------------------- deslice

TEST(Deslice, EqualTokensGiveProjectedToken) {
  Rng rng(12);
  const Tensor row = test::random_tensor(rng, 1, 6), wo = test::random_tensor(rng, 6, 6);
  Tensor tokens(4, 6);
  for (std::size_t g = 0; g < 4; ++g)
    for (std::size_t c = 0; c < 6; ++c) tokens(g, c) = row(0, c);
  Tape tape;
  const Var w = slice_assign(tape.constant(test::random_tensor(rng, 7, 5)), tape.constant(test::random_tensor(rng, 5, 4)));
  const Tensor out = deslice(w, tape.constant(tokens), tape.constant(wo)).value();
  const Tensor expect = ad::matmul(tape.constant(row), tape.constant(wo)).value();
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(out(i, c), expect(0, c), 1e-12);
}

TEST(Deslice, OneHotWeightsSelectTokens) {
  Rng rng(13);
  const Tensor tokens = test::random_tensor(rng, 3, 5);
  Tensor w(4, 3);
  const std::size_t pick[4] = {2, 0, 1, 2};
  for (std::size_t i = 0; i < 4; ++i) w(i, pick[i]) = 1.0;
  Tape tape;
  const Tensor out = deslice(tape.constant(w), tape.constant(tokens), tape.constant(identity(5))).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(out(i, c), tokens(pick[i], c));
}

TEST(Deslice, IsLinearInTokens) {
  Rng rng(14);
  const Tensor a = test::random_tensor(rng, 3, 5), b = test::random_tensor(rng, 3, 5), wo = test::random_tensor(rng, 5, 5);
  Tape tape;
  const Var w = tape.constant(test::random_tensor(rng, 6, 3));
  const Tensor sum_out = deslice(w, ad::add(tape.constant(a), tape.constant(b)), tape.constant(wo)).value();
  const Tensor split = ad::add(deslice(w, tape.constant(a), tape.constant(wo)), deslice(w, tape.constant(b), tape.constant(wo))).value();
  expect_near(sum_out, split, 1e-12);
}

// ---------------------------------------------------------------- full model

Tensor random_queries(Rng& rng, std::size_t n, std::size_t dim) {
  Tensor q(n, dim);
  for (double& v : q.values()) v = rng.uniform(-1.0, 1.0);
  return q;
}

TEST(SurrogateModel, ConfigValidation) {
  SurrogateConfig c = small_config();
  c.slices = 1;
  EXPECT_THROW(Surrogate(c, 1), ValidationError);
  c = small_config();
  c.heads = 3;
  EXPECT_THROW(Surrogate(c, 1), ValidationError);
  c = small_config();
  c.eps_slice = 0.0;
  EXPECT_THROW(Surrogate(c, 1), ValidationError);
}

TEST(SurrogateModel, LatentGradientOfSquaredOutputMatchesFiniteDifferences) {
  const Surrogate m(small_config(), 15);
  Rng rng(16);
  const Tensor q = random_queries(rng, 24, 3);
  std::vector<double> z(5);
  for (double& v : z) v = rng.normal(0.0, 0.5);
  const auto f = [&](const std::vector<double>& zz) {
    const Tensor out = m.predict(q, zz);
    double j = 0.0;
    for (double v : out.values()) j += v * v;
    return j;
  };
  Tape tape;
  const Var zv = tape.leaf(Tensor(1, 5, z));
  const Var j = ad::sum(ad::square(m.forward(tape, tape.constant(q), zv)));
  const Tensor grad = tape.backward(j).wrt(zv);
  EXPECT_GT(ad::norm2(grad.values()), 0.0);
  EXPECT_LT(test::rel_error(grad.values(), test::fd_gradient(f, z)), 1e-4);
}

TEST(SurrogateModel, DuplicatedQueriesReproduceOutputs) {
  const Surrogate m(small_config(), 17);
  Rng rng(18);
  const Tensor q = random_queries(rng, 16, 3);
  Tensor q2(32, 3);
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t c = 0; c < 3; ++c) q2(i, c) = q(i % 16, c);
  const std::vector<double> z{0.1, -0.2, 0.3, 0.0, 0.5};
  const Tensor a = m.predict(q, z), b = m.predict(q2, z);
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(b(i, c), a(i % 16, c), 1e-6);
}

TEST(SurrogateModel, PermutingQueriesPermutesOutputs) {
  const Surrogate m(small_config(), 19);
  Rng rng(20);
  const Tensor q = random_queries(rng, 20, 3);
  const std::vector<double> z{0.2, 0.2, -0.1, 0.4, 0.0};
  const auto perm = random_perm(20, 21);
  expect_near(m.predict(permute_rows(q, perm), z), permute_rows(m.predict(q, z), perm), 1e-12);
}

TEST(SurrogateModel, ZeroLatentMakesOutputIndependentOfLatentProjections) {
  Surrogate m(small_config(), 22);
  Rng rng(23);
  const Tensor q = random_queries(rng, 12, 3);
  const std::vector<double> z(5, 0.0);
  const Tensor before = m.predict(q, z);
  for (std::size_t b = 0; b < 2; ++b)
    for (double& v : m.params()[m.params().index_of("block" + std::to_string(b) + ".W_z")].values())
      v = rng.normal(0.0, 3.0);
  EXPECT_EQ(m.predict(q, z), before);
}

TEST(SurrogateModel, RejectsMismatchedInputs) {
  const Surrogate m(small_config(), 24);
  EXPECT_THROW(m.predict(Tensor(4, 2), std::vector<double>(5, 0.0)), ValidationError);
  EXPECT_THROW(m.predict(Tensor(4, 3), std::vector<double>(4, 0.0)), ValidationError);
}

// ---------------------------------------------------------------- training

/// Smooth two-channel field whose phase and amplitude depend on the latent.
Tensor synthetic_field(const Tensor& q, const std::vector<double>& z) {
  Tensor t(q.rows(), 2);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const double x = q(i, 0), y = q(i, 1), c = q(i, 2);
    const double ph = 3.0 * x + 2.0 * y * c + 2.0 * z[0];
    const double amp = 1.0 + 0.5 * z[1] - 0.3 * x * z[2];
    t(i, 0) = amp * std::cos(ph);
    t(i, 1) = amp * std::sin(ph) + 0.3 * z[3] * y;
  }
  return t;
}

std::vector<SurrogateSample> synthetic_set(std::size_t shapes, std::size_t points, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SurrogateSample> out;
  for (std::size_t s = 0; s < shapes; ++s) {
    SurrogateSample smp;
    smp.z.resize(5);
    for (double& v : smp.z) v = rng.uniform(-1.0, 1.0);
    smp.queries = random_queries(rng, points, 3);
    smp.target = synthetic_field(smp.queries, smp.z);
    out.push_back(std::move(smp));
  }
  return out;
}

double rel_l2(const Surrogate& m, const std::vector<SurrogateSample>& set) {
  double num = 0.0, den = 0.0;
  for (const auto& s : set) {
    const Tensor p = m.predict(s.queries, s.z);
    for (std::size_t i = 0; i < p.size(); ++i) {
      num += (p[i] - s.target[i]) * (p[i] - s.target[i]);
      den += s.target[i] * s.target[i];
    }
  }
  return std::sqrt(num / den);
}

TEST(TrainSurrogate, OverfitsFourShapes) {
  Surrogate m(small_config(), 25);
  const auto set = synthetic_set(4, 96, 26);
  SurrogateTrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.epochs = 2000;
  cfg.batch = 4;
  train_surrogate(m, [&](std::size_t) { return set; }, cfg);
  const double err = rel_l2(m, set);
  RecordProperty("rel_l2", std::to_string(err));
  EXPECT_LT(err, 0.05);
}

TEST(TrainSurrogate, ShuffledLabelsGiveMeanPredictorError) {
  // Targets are permuted across queries, so no input carries information.
  Surrogate m(small_config(), 27);
  auto train = synthetic_set(8, 64, 28);
  Rng rng(29);
  for (auto& s : train) s.target = permute_rows(s.target, random_perm(s.target.rows(), rng.engine()()));
  const auto held = synthetic_set(4, 64, 30);
  SurrogateTrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.epochs = 150;
  train_surrogate(m, [&](std::size_t) { return train; }, cfg);

  double mean[2] = {0.0, 0.0};
  std::size_t n = 0;
  for (const auto& s : train)
    for (std::size_t i = 0; i < s.target.rows(); ++i, ++n)
      for (std::size_t c = 0; c < 2; ++c) mean[c] += s.target(i, c);
  for (double& v : mean) v /= double(n);
  double num = 0.0, den = 0.0;
  for (const auto& s : held)
    for (std::size_t i = 0; i < s.target.rows(); ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        num += (mean[c] - s.target(i, c)) * (mean[c] - s.target(i, c));
        den += s.target(i, c) * s.target(i, c);
      }
  const double mean_err = std::sqrt(num / den);
  const double model_err = rel_l2(m, held);
  RecordProperty("mean_err", std::to_string(mean_err));
  RecordProperty("model_err", std::to_string(model_err));
  EXPECT_GT(model_err, 0.8 * mean_err);
  EXPECT_LT(model_err, 1.3 * mean_err);
}

TEST(TrainSurrogate, DivergenceAbortsWithEpochIndex) {
  Surrogate m(small_config(), 31);
  const auto set = synthetic_set(2, 16, 32);
  SurrogateTrainConfig cfg;
  cfg.lr = 1e300;
  cfg.epochs = 5;
  try {
    train_surrogate(m, [&](std::size_t) { return set; }, cfg);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(TrainSurrogate, RelativeL1RejectsZeroTarget) {
  Tape tape;
  EXPECT_THROW(relative_l1(tape.constant(Tensor(3, 2, 1.0)), tape.constant(Tensor(3, 2))), ValidationError);
}

TEST(Checkpoint, SurrogateRoundTripIsBitExact) {
  const Surrogate m(small_config(), 33);
  const auto path = std::filesystem::temp_directory_path() / "gano_surrogate_roundtrip.ckpt";
  save_surrogate(path, m, 17);
  std::uint64_t epochs = 0;
  const Surrogate back = load_surrogate(path, &epochs);
  EXPECT_EQ(back.params(), m.params());
  EXPECT_EQ(epochs, 17u);
  EXPECT_EQ(back.config().slices, m.config().slices);
  Rng rng(34);
  const Tensor q = random_queries(rng, 8, 3);
  EXPECT_EQ(back.predict(q, std::vector<double>(5, 0.1)), m.predict(q, std::vector<double>(5, 0.1)));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace gano::surrogate
