#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "frozenseg/ensemble.hpp"
#include "frozenseg/errors.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace frozenseg;
using frozenseg::testing::random_matrix;

namespace {

ClassScoreSet scores(Matrix m) { return ClassScoreSet{std::move(m)}; }

SemanticScoreMap score_map(Matrix m, int h, int w) { return SemanticScoreMap{h, w, std::move(m)}; }

}  // namespace

TEST(ClassEnsemble, FixedPointOfEqualProbabilities) {
  const auto d = scores(Matrix{{0.8, 0.1, 0.1}});
  for (Real a : {0.0, 0.3, 0.4, 1.0}) {
    EnsembleConfig cfg;
    cfg.alpha = a;
    const auto out = class_ensemble(d, d, cfg, {true, false}, false);
    EXPECT_NEAR(out.probabilities(0, 0), 0.8, 1e-12);
  }
}

TEST(ClassEnsemble, ZeroAlphaKeepsDetectorForSeen) {
  EnsembleConfig cfg;
  cfg.alpha = 0.0;
  const auto out = class_ensemble(scores(Matrix{{0.3, 0.2, 0.5}}), scores(Matrix{{0.9, 0.1, 0.0}}), cfg,
                                  {true, true}, false);
  EXPECT_EQ(out.probabilities(0, 0), 0.3);
  EXPECT_EQ(out.probabilities(0, 1), 0.2);
  EXPECT_EQ(out.probabilities(0, 2), 0.5);
}

TEST(ClassEnsemble, UnseenGeometricMean) {
  EnsembleConfig cfg;
  cfg.beta = 0.5;
  const auto out = class_ensemble(scores(Matrix{{0.64, 0.36, 0.0}}), scores(Matrix{{0.25, 0.75, 0.0}}), cfg,
                                  {false, true}, false);
  EXPECT_NEAR(out.probabilities(0, 0), 0.4, 1e-12);
}

TEST(ClassEnsemble, RowsRenormalizeAndNoObjectFollowsDetector) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto d = scores(oracle::random_probabilities(3, 5, rng));
    auto c = scores(oracle::random_probabilities(3, 5, rng));
    for (std::size_t r = 0; r < 3; ++r) c.probabilities(r, 4) = 0.0;
    const auto raw = class_ensemble(d, c, EnsembleConfig{}, {true, true, false, false}, false);
    const auto out = class_ensemble(d, c, EnsembleConfig{}, {true, true, false, false});
    for (std::size_t r = 0; r < 3; ++r) {
      EXPECT_EQ(raw.probabilities(r, 4), d.probabilities(r, 4));
      Real s = 0.0;
      for (Real v : out.probabilities.row(r)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(ClassEnsemble, ZeroWeightsPreserveDetectorArgmax) {
  std::mt19937_64 rng(2);
  EnsembleConfig cfg;
  cfg.alpha = cfg.beta = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto d = scores(oracle::random_probabilities(4, 6, rng));
    const auto c = scores(oracle::random_probabilities(4, 6, rng));
    const auto out = class_ensemble(d, c, cfg, {true, false, true, false, true});
    for (std::size_t r = 0; r < 4; ++r) {
      auto argmax = [&](const Matrix& m) {
        std::size_t b = 0;
        for (std::size_t j = 1; j < 5; ++j)
          if (m(r, j) > m(r, b)) b = j;
        return b;
      };
      EXPECT_EQ(argmax(out.probabilities), argmax(d.probabilities));
    }
  }
}

TEST(ClassEnsemble, InvalidInputsThrow) {
  const auto d = scores(Matrix{{0.5, 0.5}});
  EnsembleConfig cfg;
  cfg.alpha = 1.5;
  EXPECT_THROW(class_ensemble(d, d, cfg, {true}), ConfigError);
  EXPECT_THROW(class_ensemble(d, scores(Matrix{{1, 0, 0}}), EnsembleConfig{}, {true}), DimensionError);
  EXPECT_THROW(class_ensemble(d, d, EnsembleConfig{}, {true, false}), DimensionError);
}

TEST(SamProposals, ThresholdIsStrict) {
  TextEmbeddingBank bank;
  bank.embeddings = Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  bank.names = {"a", "b", "c"};
  bank.is_seen = {true, true, false};
  const FeatureGrid clip(1, 2, Scale::full, Matrix{{1, 0.2, 0}, {1, 1, 1}});
  const BinaryMaskSet masks{1, 2, Matrix{{1, 0}, {0, 1}}};
  const Matrix probs = pooled_class_probabilities(Matrix{{1, 0.2, 0}}, bank, 2.0);
  const Real top = probs(0, 0);
  ASSERT_GT(top, 0.5);

  const SamProposalSet kept = build_sam_proposals(masks, clip, bank, 0.5, 2.0);
  ASSERT_EQ(kept.count(), 1);
  EXPECT_EQ(kept.masks.masks(0, 0), 1.0);
  EXPECT_NEAR(kept.scores(0, 0), top, 1e-15);
  EXPECT_EQ(build_sam_proposals(masks, clip, bank, top, 2.0).count(), 0);
  EXPECT_EQ(build_sam_proposals(masks, clip, bank, std::nextafter(top, 0.0), 2.0).count(), 1);
}

TEST(SamProposals, EmptyInputGivesZeroScoreMap) {
  const Scene s = generate_scene(SceneSpec{});
  const SamProposalSet none = build_sam_proposals(BinaryMaskSet{64, 64, Matrix(0, 64 * 64)}, s.clip.full, s.bank, 0.5, 20);
  EXPECT_EQ(none.count(), 0);
  const SemanticScoreMap r = semantic_aggregate(none, 64, 64, 8);
  for (Real v : r.scores.data()) EXPECT_EQ(v, 0.0);
}

TEST(SamProposals, NoiselessGroundTruthMasksAreKeptWithTheirClass) {
  SceneSpec spec;
  spec.noise = 0.0;
  spec.unseen_instances = 2;
  const Scene s = generate_scene(spec);
  const BinaryMaskSet gt{64, 64, s.gt.instance_masks()};
  const SamProposalSet kept = build_sam_proposals(gt, s.clip.full, s.bank, 0.5, 20.0);
  ASSERT_EQ(kept.count(), s.gt.segment_count());
  for (int k = 0; k < kept.count(); ++k) {
    const auto row = kept.scores.row(k);
    EXPECT_EQ(std::max_element(row.begin(), row.end()) - row.begin(), s.gt.segment_class[k]);
  }
}

TEST(SemanticAggregate, HandValues) {
  const auto p = scores(Matrix{{0.5, 0.5}, {0.25, 0.75}});
  const Real logit_04 = std::log(0.4 / 0.6);
  const MaskLogitSet m{1, 1, Scale::full, Matrix{{800.0}, {logit_04}}};
  EXPECT_NEAR(semantic_aggregate(p, m).scores(0, 0), 0.6, 1e-12);
  const MaskLogitSet zero{1, 1, Scale::full, Matrix{{-800.0}, {-800.0}}};
  EXPECT_EQ(semantic_aggregate(p, zero).scores(0, 0), 0.0);
}

TEST(SemanticAggregate, MatchesTripleLoop) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto p = scores(oracle::random_probabilities(5, 5, rng));
    const MaskLogitSet m{8, 8, Scale::eighth, random_matrix(5, 64, rng, -6, 6)};
    const Matrix want = oracle::semantic_aggregate(p.probabilities, m.logits);
    EXPECT_LE(max_abs_diff(semantic_aggregate(p, m).scores, want), 1e-12);
  }
}

TEST(MaskEnsemble, HandValueAndIdentities) {
  const auto r = score_map(Matrix{{0.5}, {0.5}}, 1, 1);
  const auto rh = score_map(Matrix{{0.9}, {0.9}}, 1, 1);
  const auto out = mask_ensemble(r, rh, 0.2, {true, false});
  EXPECT_EQ(out.scores(0, 0), 0.5);
  EXPECT_NEAR(out.scores(1, 0), 0.58, 1e-12);
  EXPECT_EQ(mask_ensemble(r, rh, 0.0, {false, false}).scores, r.scores);
}

TEST(MaskEnsemble, SeenIdentityAndMonotonicity) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<Real> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const auto r = score_map(random_matrix(4, 16, rng, 0, 3), 4, 4);
    auto rh = score_map(random_matrix(4, 16, rng, 0, 3), 4, 4);
    const std::vector<bool> seen{true, false, true, false};
    const Real eps = u(rng);
    const auto a = mask_ensemble(r, rh, eps, seen);
    for (int c : {0, 2})
      for (std::size_t p = 0; p < 16; ++p) EXPECT_EQ(a.scores(c, p), r.scores(c, p));
    rh.scores(1, 5) += 0.5;
    const auto b = mask_ensemble(r, rh, eps, seen);
    EXPECT_GE(b.scores(1, 5), a.scores(1, 5));
  }
  EXPECT_THROW(mask_ensemble(score_map(Matrix(1, 1), 1, 1), score_map(Matrix(1, 1), 1, 1), 1.5, {false}), ConfigError);
}

TEST(SemanticDecode, OneHotTiesAndOracle) {
  Matrix one_hot(3, 4);
  for (std::size_t p = 0; p < 4; ++p) one_hot(1, p) = 1.0;
  EXPECT_EQ(semantic_decode(score_map(one_hot, 2, 2)).labels, std::vector<int>(4, 1));

  Matrix tie(6, 1);
  tie(2, 0) = tie(5, 0) = 0.7;
  EXPECT_EQ(semantic_decode(score_map(tie, 1, 1)).labels[0], 2);

  const Matrix hand{{0.1, 0.9, 0.3, 0.3}, {0.2, 0.1, 0.3, 0.5}, {0.3, 0.0, 0.1, 0.5}};
  EXPECT_EQ(semantic_decode(score_map(hand, 2, 2)).labels, (std::vector<int>{2, 0, 0, 1}));
}

TEST(PanopticDecode, NoObjectQueryGivesAllVoid) {
  const auto p = scores(Matrix{{0.1, 0.2, 0.7}});
  const PanopticMap m = panoptic_decode(p, MaskLogitSet{2, 2, Scale::full, Matrix(1, 4, 10.0)}, {0.25, 1});
  EXPECT_EQ(m.segment_ids, std::vector<int>(4, kVoid));
  EXPECT_TRUE(m.segments.empty());
}

TEST(PanopticDecode, DisjointConfidentQueries) {
  const auto p = scores(Matrix{{0.9, 0.05, 0.05}, {0.1, 0.8, 0.1}});
  const Matrix masks{{1, 1, 0, 0}, {0, 0, 1, 1}};
  const PanopticMap m = panoptic_decode(p, masks, 2, 2, {0.25, 1});
  EXPECT_EQ(m.segment_ids, (std::vector<int>{0, 0, 1, 1}));
  ASSERT_EQ(m.segments.size(), 2u);
  EXPECT_EQ(m.segments[0].class_id, 0);
  EXPECT_EQ(m.segments[1].class_id, 1);
  EXPECT_DOUBLE_EQ(m.segments[1].score, 0.8);
}

TEST(PanopticDecode, OverlapGoesToHigherProduct) {
  const auto p = scores(Matrix{{0.9, 0.05, 0.05}, {0.05, 0.6, 0.35}});
  const Matrix masks{{1.0}, {1.0}};
  const PanopticMap m = panoptic_decode(p, masks, 1, 1, {0.25, 1});
  EXPECT_EQ(m.segment_ids[0], 0);
  EXPECT_EQ(m.segments[0].class_id, 0);
}

TEST(PanopticDecode, FloorAndMinimumArea) {
  const auto p = scores(Matrix{{0.9, 0.1}, {0.8, 0.2}});
  const Matrix masks{{0.2, 0.2, 0.2, 0.2}, {1, 0, 0, 0}};
  const PanopticMap m = panoptic_decode(p, masks, 2, 2, {0.25, 1});
  EXPECT_EQ(m.segment_ids, (std::vector<int>{0, kVoid, kVoid, kVoid}));
  ASSERT_EQ(m.segments.size(), 1u);
  EXPECT_DOUBLE_EQ(m.segments[0].score, 0.8);
  const PanopticMap dropped = panoptic_decode(p, masks, 2, 2, {0.25, 2});
  EXPECT_EQ(dropped.segment_ids, std::vector<int>(4, kVoid));
}

TEST(PanopticDecode, MatchesOracleAndStaysConsistent) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> level(0, 4);
  for (int t = 0; t < 200; ++t) {
    const auto p = scores(oracle::random_probabilities(6, 4, rng, t % 2 == 0));
    Matrix masks(6, 64);
    for (auto& v : masks.data()) v = level(rng) / 4.0;
    const PanopticOptions opt{0.25, t % 4};
    const PanopticMap got = panoptic_decode(p, masks, 8, 8, opt);
    EXPECT_EQ(got, oracle::panoptic_decode(p.probabilities, masks, 8, 8, opt.score_floor, opt.min_area));
    got.validate();
    for (const auto& s : got.segments) EXPECT_NE(s.class_id, 3);
  }
}

TEST(ProposalFile, RoundTripAndHeader) {
  std::mt19937_64 rng(6);
  std::bernoulli_distribution on(0.3);
  for (int t = 0; t < 30; ++t) {
    BinaryMaskSet m{5, 7, Matrix(t % 4, 35)};
    for (auto& v : m.masks.data()) v = on(rng) ? 1.0 : 0.0;
    if (t % 4 > 0) m.masks(0, 0) = 1.0;
    const auto bytes = encode_proposals(m);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FZPM");
    EXPECT_EQ(decode_proposals(bytes), m);
  }
  const auto path = std::filesystem::temp_directory_path() / "frozenseg_proposals.fzpm";
  const BinaryMaskSet m{2, 2, Matrix{{0, 1, 1, 0}}};
  save_proposals(path, m);
  EXPECT_EQ(load_proposals(path), m);
}

TEST(ProposalFile, MalformedRunsThrowAtMaskOffset) {
  const BinaryMaskSet m{2, 2, Matrix{{0, 1, 1, 0}}};
  const auto good = encode_proposals(m);
  auto bad = good;
  bad[0] = 'Q';
  EXPECT_THROW(decode_proposals(bad), FormatError);

  auto over = good;
  over[20] = 9;  // first run length
  try {
    decode_proposals(over);
    FAIL() << "over-covering runs accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 16u);
  }
  auto under = good;
  under[20] = 0;
  try {
    decode_proposals(under);
    FAIL() << "under-covering runs accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 16u);
  }
  auto cut = good;
  cut.pop_back();
  EXPECT_THROW(decode_proposals(cut), FormatError);
}
