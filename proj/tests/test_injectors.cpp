#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "frozenseg/errors.hpp"
#include "frozenseg/injectors.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace frozenseg;
using frozenseg::testing::gradient_violation;
using frozenseg::testing::random_matrix;

namespace {

Linear identity_linear(int dim, Real gain = 1.0) {
  std::mt19937_64 rng(0);
  Linear l("id", dim, dim, rng);
  l.weight.value = Matrix::identity(dim);
  for (auto& v : l.weight.value.data()) v *= gain;
  l.bias.value.fill(0.0);
  return l;
}

AttentionParams identity_attention(int dim) {
  std::mt19937_64 rng(0);
  AttentionParams p("attn", dim, 1, rng);
  p.query = identity_linear(dim);
  p.key = identity_linear(dim);
  p.value = identity_linear(dim);
  p.output = identity_linear(dim);
  return p;
}

FeatureGrid grid_from(int h, int w, Matrix tokens) { return FeatureGrid(h, w, Scale::eighth, std::move(tokens)); }

}  // namespace

TEST(MaskPool, SelectedPixelsAverage) {
  const FeatureGrid f = grid_from(2, 2, Matrix{{1}, {2}, {3}, {4}});
  const MaskLogitSet m{2, 2, Scale::eighth, Matrix{{5, -5, -5, 5}}};
  EXPECT_EQ(mask_pool(m, f)(0, 0), 2.5);
}

TEST(MaskPool, EmptyMaskFallsBackToGlobalMean) {
  const FeatureGrid f = grid_from(2, 2, Matrix{{1}, {2}, {3}, {4}});
  const MaskLogitSet m{2, 2, Scale::eighth, Matrix{{-1, -2, -3, -4}}};
  EXPECT_EQ(mask_pool(m, f)(0, 0), 2.5);
}

TEST(MaskPool, ConstantFeaturesPoolToTheConstant) {
  std::mt19937_64 rng(1);
  FeatureGrid f(4, 4, 3, Scale::eighth);
  for (int p = 0; p < 16; ++p) f.tokens.row(p)[0] = 0.5, f.tokens.row(p)[1] = -2.0, f.tokens.row(p)[2] = 7.0;
  const MaskLogitSet m{4, 4, Scale::eighth, random_matrix(5, 16, rng)};
  const Matrix pooled = mask_pool(m, f);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(pooled.row(i)[2], 7.0);
}

TEST(MaskPool, ZeroLogitIsNotSelected) {
  const FeatureGrid f = grid_from(1, 2, Matrix{{1}, {3}});
  const MaskLogitSet m{1, 2, Scale::eighth, Matrix{{0.0, 1.0}}};
  EXPECT_EQ(mask_pool(m, f)(0, 0), 3.0);
}

TEST(MaskPool, MatchesPixelLoopOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    FeatureGrid f(8, 8, 3, Scale::eighth);
    f.tokens = random_matrix(64, 3, rng, -5, 5);
    const MaskLogitSet m{8, 8, Scale::eighth, random_matrix(4, 64, rng, -3, t % 5 == 0 ? -0.1 : 3)};
    const Matrix got = mask_pool(m, f), want = oracle::mask_pool(m.logits, f);
    EXPECT_LE(max_abs_diff(got, want), 1e-12);
  }
}

TEST(MaskPool, GridMismatchThrows) {
  const FeatureGrid f(2, 2, 1, Scale::eighth);
  EXPECT_THROW(mask_pool(MaskLogitSet{2, 3, Scale::eighth, Matrix(1, 6)}, f), DimensionError);
  EXPECT_THROW(mask_pool_binary(Matrix(1, 5), f), DimensionError);
}

TEST(QueryInject, ScalarExample) {
  const FeatureGrid sam = grid_from(2, 2, Matrix{{1}, {2}, {3}, {4}});
  const MaskLogitSet m{2, 2, Scale::eighth, Matrix{{5, -5, -5, 5}}};
  Linear f = identity_linear(1, 2.0);
  const QuerySet out = query_inject(QuerySet{Matrix{{0.5}}}, m, sam, f);
  EXPECT_EQ(out.embeddings(0, 0), 5.5);
}

TEST(QueryInject, IdentityProjectionAddsPooledRow) {
  std::mt19937_64 rng(3);
  FeatureGrid sam(4, 4, 3, Scale::eighth);
  sam.tokens = random_matrix(16, 3, rng);
  const MaskLogitSet m{4, 4, Scale::eighth, random_matrix(2, 16, rng)};
  const Matrix q = random_matrix(2, 3, rng);
  Linear f = identity_linear(3);
  const Matrix pooled = mask_pool(m, sam);
  const QuerySet out = query_inject(QuerySet{q}, m, sam, f);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_DOUBLE_EQ(out.embeddings.data()[i], q.data()[i] + pooled.data()[i]);
}

TEST(QueryInject, ZeroFeaturesLeaveQueriesUnchanged) {
  std::mt19937_64 rng(4);
  FeatureGrid sam(4, 4, 5, Scale::eighth);
  const MaskLogitSet m{4, 4, Scale::eighth, random_matrix(3, 16, rng)};
  Linear f("proj", 5, 6, rng);
  f.bias.value.fill(0.0);
  const Matrix q = random_matrix(3, 6, rng);
  EXPECT_EQ(query_inject(QuerySet{q}, m, sam, f).embeddings, q);
}

TEST(QueryInject, InjectionIsIndependentOfQueries) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    FeatureGrid sam(4, 4, 5, Scale::eighth);
    sam.tokens = random_matrix(16, 5, rng);
    const MaskLogitSet m{4, 4, Scale::eighth, random_matrix(3, 16, rng)};
    Linear f("proj", 5, 6, rng);
    const Matrix q1 = random_matrix(3, 6, rng), q2 = random_matrix(3, 6, rng);
    const Matrix o1 = query_inject(QuerySet{q1}, m, sam, f).embeddings;
    const Matrix o2 = query_inject(QuerySet{q2}, m, sam, f).embeddings;
    for (std::size_t i = 0; i < o1.size(); ++i)
      EXPECT_NEAR(o1.data()[i] - q1.data()[i], o2.data()[i] - q2.data()[i], 1e-12);
  }
}

TEST(FeatureInject, HandComputedTwoTokenAttention) {
  AttentionParams p = identity_attention(1);
  p.value = identity_linear(1, 1.0 / std::log(3.0));
  const FeatureGrid clip = grid_from(1, 1, Matrix{{1}});
  const FeatureGrid sam = grid_from(1, 2, Matrix{{0}, {std::log(3.0)}});
  Matrix attn;
  const FeatureGrid out = feature_inject(clip, sam, p, false, &attn);
  EXPECT_NEAR(out.tokens(0, 0), 0.75, 1e-12);
  EXPECT_NEAR(attn(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(attn(0, 1), 0.75, 1e-12);
  const FeatureGrid with_residual = feature_inject(clip, sam, p, true);
  EXPECT_NEAR(with_residual.tokens(0, 0), 1.75, 1e-12);
}

TEST(FeatureInject, SingleTokenGetsFullWeight) {
  std::mt19937_64 rng(6);
  AttentionParams p("attn", 4, 2, rng);
  FeatureGrid clip(2, 2, 4, Scale::eighth), sam(1, 1, 4, Scale::eighth);
  clip.tokens = random_matrix(4, 4, rng, -10, 10);
  sam.tokens = random_matrix(1, 4, rng, -10, 10);
  Matrix attn;
  feature_inject(clip, sam, p, false, &attn);
  for (Real w : attn.data()) EXPECT_EQ(w, 1.0);
}

TEST(FeatureInject, IdenticalKeysAttendUniformly) {
  std::mt19937_64 rng(7);
  AttentionParams p("attn", 4, 2, rng);
  FeatureGrid clip(2, 2, 4, Scale::eighth), sam(2, 3, 4, Scale::eighth);
  clip.tokens = random_matrix(4, 4, rng);
  const Matrix v = random_matrix(1, 4, rng);
  for (int t = 0; t < 6; ++t) std::copy(v.data().begin(), v.data().end(), sam.tokens.row(t).begin());
  Matrix attn;
  const FeatureGrid out = feature_inject(clip, sam, p, false, &attn);
  Tape tape;
  const Matrix projected = p.output(tape, p.value(tape, tape.constant(v))).value();
  for (Real w : attn.data()) EXPECT_NEAR(w, 1.0 / 6.0, 1e-12);
  for (int t = 0; t < 4; ++t)
    for (int d = 0; d < 4; ++d) EXPECT_NEAR(out.tokens(t, d), projected(0, d), 1e-12);
}

TEST(FeatureInject, RowsSumToOneAndOutputStaysInEnvelope) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    AttentionParams p = identity_attention(3);
    FeatureGrid clip(3, 3, 3, Scale::eighth);
    clip.tokens = random_matrix(9, 3, rng, -4, 4);
    Matrix attn;
    const FeatureGrid out = feature_inject(clip, clip, p, false, &attn);
    EXPECT_EQ(out.height, 3);
    for (std::size_t r = 0; r < attn.rows(); ++r) {
      Real s = 0.0;
      for (Real w : attn.row(r)) s += w;
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    for (int d = 0; d < 3; ++d) {
      Real lo = 1e300, hi = -1e300;
      for (int k = 0; k < 9; ++k) lo = std::min(lo, clip.tokens(k, d)), hi = std::max(hi, clip.tokens(k, d));
      for (int k = 0; k < 9; ++k) {
        EXPECT_GE(out.tokens(k, d), lo - 1e-12);
        EXPECT_LE(out.tokens(k, d), hi + 1e-12);
      }
    }
  }
}

TEST(FeatureInject, ChannelMismatchThrows) {
  std::mt19937_64 rng(9);
  AttentionParams p("attn", 4, 2, rng);
  EXPECT_THROW(feature_inject(FeatureGrid(2, 2, 4, Scale::eighth), FeatureGrid(2, 2, 3, Scale::eighth), p),
               DimensionError);
}

TEST(InjectorGradients, EveryParameterReceivesMatchingGradient) {
  std::mt19937_64 rng(10);
  const int dim = 4;
  Linear proj("query_proj", 3, dim, rng);
  AttentionParams attn("feature_attn", dim, 2, rng);
  const Matrix queries = random_matrix(3, dim, rng);
  const Matrix pooled = random_matrix(3, 3, rng);
  const Matrix clip = random_matrix(6, dim, rng);
  const Matrix sam = random_matrix(5, dim, rng);

  auto loss = [&](Tape& tape) {
    Var q = query_inject(tape, tape.constant(queries), tape.constant(pooled), proj);
    Var f = feature_inject(tape, tape.constant(clip), tape.constant(sam), attn, true);
    Var logits = ad::matmul(q, ad::transpose(f));
    return ad::mean(ad::hadamard(ad::sigmoid(logits), logits));
  };

  ParameterList params;
  proj.collect(params);
  attn.collect(params);
  for (Parameter* p : params) p->zero_grad();
  Tape tape;
  tape.backward(loss(tape));
  for (Parameter* p : params) {
    const Matrix numeric = finite_difference_gradient(
        [&](const Parameter&) {
          Tape t;
          return loss(t).value()(0, 0);
        },
        *p, 1e-5);
    Real mag = 0.0;
    for (Real g : p->gradient.data()) mag = std::max(mag, std::abs(g));
    EXPECT_GT(mag, 0.0) << p->name;
    EXPECT_LE(gradient_violation(p->gradient, numeric), 1.0) << p->name;
  }
}
