#pragma once

// End-to-end inference for one scene: decoder, class ensemble, optional
// mask ensemble with zero-shot proposals, then semantic and panoptic
// decoding at image resolution.

#include "frozenseg/decoder.hpp"
#include "frozenseg/ensemble.hpp"

namespace frozenseg {

struct InferenceOptions {
  EnsembleConfig ensemble;
  /// Blend proposal-derived scores into unseen classes. Proposals also join
  /// the recall pool when this is set and epsilon > 0.
  bool mask_ensemble = true;
  PanopticOptions panoptic;
  /// Temperature of the pooled-feature classifier.
  Real clip_temperature = 100.0;
};

struct SceneResult {
  SemanticMap semantic;
  PanopticMap panoptic;
  /// Class-agnostic masks scored for recall.
  BinaryMaskSet proposals;
  /// Final-layer class scores after the class ensemble.
  ClassScoreSet classes;
  /// Final-layer mask logits at image resolution.
  MaskLogitSet masks;
  /// Filtered zero-shot proposals (empty when unused).
  SamProposalSet sam;
  DecoderOutput decoder;
};

/// `sam_masks` may be null, which disables the mask ensemble.
SceneResult infer_scene(DecoderParams& params, const ClipPyramid& clip, const FeatureGrid& sam,
                        const TextEmbeddingBank& bank, const BinaryMaskSet* sam_masks, const InferenceOptions& options);

/// Segmentation from zero-shot proposals alone: pooled-feature scores drive
/// both the semantic map and the panoptic segments.
SceneResult infer_proposals_only(const ClipPyramid& clip, const TextEmbeddingBank& bank, const BinaryMaskSet& sam_masks,
                                 const InferenceOptions& options);

}  // namespace frozenseg
