#pragma once

// Toy-scale optimization of the decoder and injectors: bipartite matching of
// queries to GT segments, deep-supervised mask-classification losses, and a
// full-batch momentum SGD loop. Scene features and the text bank are inputs
// only and are never modified.

#include <filesystem>
#include <functional>
#include <vector>

#include "frozenseg/decoder.hpp"

namespace frozenseg {

struct LossWeights {
  Real cls = 2.0;
  Real bce = 5.0;
  Real dice = 5.0;
  /// Class-loss weight of queries matched to nothing.
  Real no_object = 0.1;

  /// Throws ConfigError unless every weight is positive.
  void validate() const;
};

struct MatchResult {
  /// GT segment per query, -1 for unmatched queries.
  std::vector<int> assignment;
  Real cost = 0.0;

  int matched() const;
};

/// Exact minimum-cost assignment of every column (GT) to a distinct row
/// (query). Throws ConfigError when there are more columns than rows.
MatchResult hungarian(const Matrix& cost);

/// GT instance masks area-downsampled to the loss grid, with their classes.
struct MaskTargets {
  int height = 0;
  int width = 0;
  /// One row per GT segment, values in [0, 1].
  Matrix masks;
  std::vector<int> classes;

  int count() const noexcept { return static_cast<int>(classes.size()); }
};

/// Throws DimensionError unless the GT sides are multiples of the target sides.
MaskTargets make_targets(const GroundTruth& gt, int height, int width);

/// cost(i, k) = cls * (1 - p_i(class_k)) + bce * BCE(m_i, t_k) + dice * Dice(m_i, t_k),
/// with masks already on the target grid.
Matrix match_cost(const ClassScoreSet& probs, const MaskLogitSet& masks, const MaskTargets& targets,
                  const LossWeights& weights);
MatchResult hungarian_match(const ClassScoreSet& probs, const MaskLogitSet& masks, const MaskTargets& targets,
                            const LossWeights& weights);

struct LossTerms {
  Var total;
  Real cls = 0.0;
  Real bce = 0.0;
  Real dice = 0.0;
};

/// Loss of one prediction set: weighted class cross-entropy over all queries
/// (unmatched queries target no-object) plus BCE and Dice on matched masks.
/// `mask_logits` must be on the target grid.
LossTerms layer_loss(Tape& tape, Var class_logits, Var mask_logits, const MaskTargets& targets,
                     const MatchResult& match, const LossWeights& weights);

/// Resamples each layer's 1/8 mask logits to the target grid, matches it to
/// the targets, and sums the layer losses with equal weight.
LossTerms compute_loss(Tape& tape, const DecoderTrace& trace, const MaskTargets& targets, const LossWeights& weights);

struct TrainConfig {
  int iterations = 2000;
  Real learning_rate = 0.05;
  Real momentum = 0.9;
  /// Global gradient-norm clip.
  Real clip_norm = 1.0;
  LossWeights weights;
  /// Mask losses are computed at image size / this divisor.
  int loss_divisor = 4;

  void validate() const;
};

struct LossRecord {
  int iteration = 0;
  Real total = 0.0;
  Real cls = 0.0;
  Real bce = 0.0;
  Real dice = 0.0;
};

/// Called after every iteration; returning false stops training early.
using TrainObserver = std::function<bool(const LossRecord&)>;

/// Full-batch training over `scenes`, classifying against `bank` (normally
/// the seen-class subset). GT classes must index into `bank`. Throws
/// TrainingError with the iteration index when the loss or a gradient
/// becomes non-finite. Returns the per-iteration loss trace.
std::vector<LossRecord> train(DecoderParams& params, const std::vector<Scene>& scenes, const TextEmbeddingBank& bank,
                              const TrainConfig& cfg, const TrainObserver& observer = {});

/// CSV with header iteration,loss,class_loss,bce_loss,dice_loss.
void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace);

}  // namespace frozenseg
