#pragma once

// Query injection (spatial queries from pooled localization features) and
// feature injection (cross-attention from semantic to localization
// features), plus the mask-pooling primitive both rely on.

#include "frozenseg/autodiff.hpp"
#include "frozenseg/grid.hpp"
#include "frozenseg/layers.hpp"

namespace frozenseg {

/// N x D query embeddings.
struct QuerySet {
  Matrix embeddings;

  int count() const noexcept { return static_cast<int>(embeddings.rows()); }
  int dim() const noexcept { return static_cast<int>(embeddings.cols()); }
};

/// Per-query mask logits over a height x width grid, one row per query.
struct MaskLogitSet {
  int height = 0;
  int width = 0;
  Scale scale = Scale::eighth;
  Matrix logits;

  int count() const noexcept { return static_cast<int>(logits.rows()); }
  /// 1 where sigmoid(logit) > 0.5, else 0.
  Matrix binarized() const;
  Matrix probabilities() const;
  /// Bilinear resampling of the logits to another grid.
  MaskLogitSet resized(int h, int w, Scale s) const;
};

/// Mean feature over the pixels where sigmoid(logit) > 0.5, one row per
/// mask; an empty mask pools the whole grid. Throws DimensionError when the
/// mask and feature grids differ in size.
Matrix mask_pool(const MaskLogitSet& masks, const FeatureGrid& features);
/// Same pooling for 0/1 masks given as rows over the feature pixels.
Matrix mask_pool_binary(const Matrix& masks, const FeatureGrid& features);

/// queries + proj(mask_pool(masks, sam)).
QuerySet query_inject(const QuerySet& queries, const MaskLogitSet& masks, const FeatureGrid& sam, Linear& proj);
/// Tape form: adds proj(pooled) to the query node, where `pooled` holds one
/// mask-pooled localization feature row per query.
Var query_inject(Tape& tape, Var queries, Var pooled, Linear& proj);

/// clip + MHCA(query = clip, key = value = sam) when `residual` is set,
/// otherwise the attention term alone. The result keeps clip's grid.
FeatureGrid feature_inject(const FeatureGrid& clip, const FeatureGrid& sam, AttentionParams& params,
                           bool residual = true, Matrix* attention_out = nullptr);
/// Tape form over token matrices.
Var feature_inject(Tape& tape, Var clip_tokens, Var sam_tokens, AttentionParams& params, bool residual,
                   Matrix* attention_out = nullptr);

}  // namespace frozenseg
