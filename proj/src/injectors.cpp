#include "frozenseg/injectors.hpp"

#include <cmath>

#include "frozenseg/errors.hpp"
#include "frozenseg/kernels.hpp"

namespace frozenseg {

Matrix MaskLogitSet::binarized() const {
  Matrix b(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) b.data()[i] = logits.data()[i] > 0.0 ? 1.0 : 0.0;
  return b;
}

Matrix MaskLogitSet::probabilities() const {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const Real x = logits.data()[i];
    p.data()[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return p;
}

MaskLogitSet MaskLogitSet::resized(int h, int w, Scale s) const {
  return MaskLogitSet{h, w, s, resize_maps(logits, height, width, h, w)};
}

Matrix mask_pool_binary(const Matrix& masks, const FeatureGrid& features) {
  if (masks.cols() != static_cast<std::size_t>(features.pixels())) {
    throw DimensionError("mask_pool: masks cover " + std::to_string(masks.cols()) + " pixels, features " +
                         std::to_string(features.pixels()));
  }
  Matrix out(masks.rows(), features.tokens.cols());
  kernels::parallel::masked_mean(masks, features.tokens, out);
  return out;
}

Matrix mask_pool(const MaskLogitSet& masks, const FeatureGrid& features) {
  if (masks.height != features.height || masks.width != features.width) {
    throw DimensionError("mask_pool: mask grid " + std::to_string(masks.height) + "x" + std::to_string(masks.width) +
                         " vs feature grid " + std::to_string(features.height) + "x" +
                         std::to_string(features.width));
  }
  return mask_pool_binary(masks.binarized(), features);
}

Var query_inject(Tape& tape, Var queries, Var pooled, Linear& proj) {
  if (pooled.rows() != queries.rows()) throw DimensionError("query_inject: one pooled row per query required");
  Var spatial = proj(tape, pooled);
  return ad::add(queries, spatial);
}

QuerySet query_inject(const QuerySet& queries, const MaskLogitSet& masks, const FeatureGrid& sam, Linear& proj) {
  Tape tape;
  Var out = query_inject(tape, tape.constant(queries.embeddings), tape.constant(mask_pool(masks, sam)), proj);
  return QuerySet{out.value()};
}

Var feature_inject(Tape& tape, Var clip_tokens, Var sam_tokens, AttentionParams& params, bool residual,
                   Matrix* attention_out) {
  Var attended = multi_head_attention(tape, params, clip_tokens, sam_tokens, sam_tokens, nullptr, attention_out);
  return residual ? ad::add(clip_tokens, attended) : attended;
}

FeatureGrid feature_inject(const FeatureGrid& clip, const FeatureGrid& sam, AttentionParams& params, bool residual,
                           Matrix* attention_out) {
  Tape tape;
  Var out = feature_inject(tape, tape.constant(clip.tokens), tape.constant(sam.tokens), params, residual,
                           attention_out);
  return FeatureGrid(clip.height, clip.width, clip.scale, out.value());
}

}  // namespace frozenseg
