#pragma once

// Inference-time combination of decoder predictions with semantic-feature
// classification and zero-shot localization proposals.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "frozenseg/decoder.hpp"
#include "frozenseg/maps.hpp"

namespace frozenseg {

struct EnsembleConfig {
  /// Weight of the pooled-feature classifier for seen classes.
  Real alpha = 0.4;
  /// Weight of the pooled-feature classifier for unseen classes.
  Real beta = 0.8;
  /// Share of the proposal score map blended into unseen classes.
  Real epsilon = 0.2;
  /// Proposals whose best class probability does not exceed xi are dropped.
  Real xi = 0.5;

  /// Throws ConfigError unless every weight lies in [0, 1].
  void validate() const;
};

/// Zero-shot proposals kept after score filtering, with C class scores each.
struct SamProposalSet {
  BinaryMaskSet masks;
  Matrix scores;

  int count() const noexcept { return masks.count(); }
};

/// C x (H*W) per-class score map.
struct SemanticScoreMap {
  int height = 0;
  int width = 0;
  Matrix scores;

  int classes() const noexcept { return static_cast<int>(scores.rows()); }
};

struct PanopticOptions {
  /// Pixels whose best query score falls below this value stay void.
  Real score_floor = 0.25;
  /// Segments smaller than this many pixels are dropped to void.
  int min_area = 32;
};

/// p_d^(1-w) * p_cl^w per class, with w = alpha for seen and beta for unseen
/// classes; the no-object column is copied from p_d. With `renormalize`
/// each row is rescaled to sum to 1 over C+1.
ClassScoreSet class_ensemble(const ClassScoreSet& detector, const ClassScoreSet& clip, const EnsembleConfig& cfg,
                             const std::vector<bool>& is_seen, bool renormalize = true);

/// Scores binary proposals with the pooled-feature classifier and keeps
/// those whose maximum probability exceeds xi.
SamProposalSet build_sam_proposals(const BinaryMaskSet& masks, const FeatureGrid& clip_full,
                                   const TextEmbeddingBank& bank, Real xi, Real temperature);

/// r(c, p) = sum_i p_i(c) * sigmoid(logit_i(p)) over the first C columns.
SemanticScoreMap semantic_aggregate(const ClassScoreSet& probs, const MaskLogitSet& masks);
/// Same sum for kept proposals, whose masks enter as 0/1.
SemanticScoreMap semantic_aggregate(const SamProposalSet& proposals, int height, int width, int classes);

/// Seen classes keep r; unseen classes get (1 - epsilon) r + epsilon r_hat.
SemanticScoreMap mask_ensemble(const SemanticScoreMap& r, const SemanticScoreMap& r_hat, Real epsilon,
                               const std::vector<bool>& is_seen);

/// Per-pixel argmax over classes; ties go to the lowest class id.
SemanticMap semantic_decode(const SemanticScoreMap& scores);

/// Drops queries whose top class is no-object, then gives each pixel to the
/// query maximizing p_i(c_i) * sigmoid(logit_i). Masks must already be at
/// the output resolution.
PanopticMap panoptic_decode(const ClassScoreSet& probs, const MaskLogitSet& masks, const PanopticOptions& options = {});
/// Same decoding from per-query mask probabilities (e.g. 0/1 proposals).
PanopticMap panoptic_decode(const ClassScoreSet& probs, const Matrix& mask_probs, int height, int width,
                            const PanopticOptions& options = {});

// "FZPM" proposal files: magic, u32 count, u32 H, u32 W, then per mask a
// u32 run count followed by u32 run lengths over the row-major pixels,
// alternating background and foreground and starting with background.
std::vector<std::uint8_t> encode_proposals(const BinaryMaskSet& masks);
BinaryMaskSet decode_proposals(const std::vector<std::uint8_t>& bytes);
void save_proposals(const std::filesystem::path& path, const BinaryMaskSet& masks);
BinaryMaskSet load_proposals(const std::filesystem::path& path);

}  // namespace frozenseg
