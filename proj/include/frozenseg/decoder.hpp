#pragma once

// Lightweight transformer decoder over frozen semantic features.
//
// Each layer runs masked cross-attention over one scale of the pixel
// features (1/32, 1/16, 1/8 in turn), then query self-attention and a
// feed-forward block, all pre-norm with residuals. Spatial queries are added
// entering the query-inject layers; the 1/32 memory is replaced by the
// feature-injected grid at the feature-inject layers. Every layer emits
// class scores against the text bank and mask logits at 1/8 scale.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <vector>

#include "frozenseg/autodiff.hpp"
#include "frozenseg/fixtures.hpp"
#include "frozenseg/injectors.hpp"
#include "frozenseg/layers.hpp"

namespace frozenseg {

struct DecoderConfig {
  int layers = 9;
  int queries = 32;
  int dim = 32;
  int heads = 4;
  int ffn_dim = 64;
  /// 1-based layer indices.
  std::vector<int> query_inject_layers{3, 6, 9};
  std::vector<int> feature_inject_layers{1, 4, 7};
  /// Scale attended by each layer; empty means 1/32, 1/16, 1/8 round robin.
  std::vector<Scale> schedule;
  Real temperature = 20.0;
  /// Add the attention term to the semantic features instead of replacing them.
  bool feature_residual = true;

  std::vector<Scale> resolved_schedule() const;
  bool query_inject_at(int layer) const;
  bool feature_inject_at(int layer) const;
  /// Throws ConfigError on out-of-range inject layers, a schedule of the
  /// wrong length, or feature injection at a layer not scheduled at 1/32.
  void validate() const;

  /// 250 queries, 9 layers, injectors at 3/6/9 and 1/4/7.
  static DecoderConfig paper_scale();
};

/// N x (C+1) class probabilities; the last column is "no object".
struct ClassScoreSet {
  Matrix probabilities;

  int count() const noexcept { return static_cast<int>(probabilities.rows()); }
  int classes() const noexcept { return static_cast<int>(probabilities.cols()) - 1; }
};

struct DecoderLayerOutput {
  ClassScoreSet classes;
  MaskLogitSet masks;
};

struct DecoderOutput {
  std::vector<DecoderLayerOutput> layers;
  QuerySet queries;
  /// Head-averaged attention weights of the last cross-attention layer
  /// (queries x tokens at that layer's scale).
  Matrix last_attention;
  int last_attention_height = 0;
  int last_attention_width = 0;
};

/// Tape nodes of one decoder layer's predictions, for loss computation.
struct DecoderLayerNodes {
  Var class_logits;  // N x (C+1)
  Var mask_logits;   // N x (H/8 * W/8)
};

struct DecoderTrace {
  std::vector<DecoderLayerNodes> layers;
  DecoderOutput output;
};

/// Trainable weights of the decoder and both injectors.
class DecoderParams {
 public:
  DecoderParams(const DecoderConfig& cfg, int clip_dim, int sam_dim, int text_dim, std::uint64_t seed);

  DecoderParams(const DecoderParams&) = delete;
  DecoderParams& operator=(const DecoderParams&) = delete;

  const DecoderConfig& config() const noexcept { return cfg_; }
  int clip_dim() const noexcept { return clip_dim_; }
  int sam_dim() const noexcept { return sam_dim_; }
  int text_dim() const noexcept { return text_dim_; }

  ParameterList parameters();
  /// Parameters of the query and feature injectors (including the SAM projection).
  ParameterList injector_parameters();
  void zero_grad();
  Parameter* find(const std::string& name);

  struct Layer {
    AttentionParams cross;
    AttentionParams self;
    LayerNorm cross_norm;
    LayerNorm self_norm;
    LayerNorm ffn_norm;
    Linear ffn_in;
    Linear ffn_out;
  };

  Parameter query_embed;
  std::map<Scale, Linear> pixel_proj;
  Linear mask_proj;
  Linear sam_proj;
  Linear query_injector;
  AttentionParams feature_injector;
  std::vector<Layer> layers;
  LayerNorm decoder_norm;
  Linear class_proj;
  Parameter null_logit;
  std::vector<Linear> mask_mlp;

 private:
  DecoderConfig cfg_;
  int clip_dim_;
  int sam_dim_;
  int text_dim_;
};

struct DecoderInputs {
  const ClipPyramid& clip;
  /// Localization features at any scale; resampled to each grid that needs them.
  const FeatureGrid& sam;
  /// Classification vocabulary.
  const TextEmbeddingBank& bank;
};

/// Records the full forward pass on `tape`. Throws ConfigError when the
/// configuration is invalid or disagrees with the parameter shapes.
DecoderTrace decoder_forward(Tape& tape, DecoderParams& params, const DecoderInputs& in);
/// Inference wrapper using a private tape.
DecoderOutput decoder_forward(DecoderParams& params, const DecoderInputs& in);

/// Tape form: logits = [temperature * cos(proj(q), bank rows), null] per query.
Var classify_query_logits(Tape& tape, Var queries, const TextEmbeddingBank& bank, Real temperature, Linear& proj,
                          Parameter& null_logit);
/// Softmax over C+1 of the logits above.
ClassScoreSet classify_queries(const QuerySet& queries, const TextEmbeddingBank& bank, Real temperature,
                               Linear& proj, Parameter& null_logit);

/// softmax over C of temperature * cos(pooled row, bank rows).
Matrix pooled_class_probabilities(const Matrix& pooled, const TextEmbeddingBank& bank, Real temperature);
/// Scores masks by pooling the full-resolution semantic features. The
/// no-object column is fixed at 0. Masks are resized to the feature grid.
ClassScoreSet clip_classify_masks(const MaskLogitSet& masks, const FeatureGrid& clip_full,
                                  const TextEmbeddingBank& bank, Real temperature);

/// Fixed 2-D sinusoidal encoding, one dim-wide row per grid pixel.
Matrix sinusoidal_positions(int height, int width, int dim);

// "FZCK" checkpoints: magic, u32 version (1), u32 tensor count, then per
// tensor u32 name length, name bytes, u32 rank, u32 dims, float64 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::vector<std::uint8_t> encode_checkpoint(const ParameterList& params);
/// Loads values by name. Throws FormatError for malformed files and
/// ConfigError for missing names or shape mismatches.
void decode_checkpoint(const std::vector<std::uint8_t>& bytes, const ParameterList& params);
void save_checkpoint(const std::filesystem::path& path, DecoderParams& params);
void load_checkpoint(const std::filesystem::path& path, DecoderParams& params);

}  // namespace frozenseg
