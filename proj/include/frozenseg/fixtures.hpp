#pragma once

// Synthetic scenes standing in for frozen CLIP / SAM encoder outputs.
//
// Each scene is a void background with non-overlapping axis-aligned object
// rectangles snapped to an 8-pixel lattice. The semantic ("CLIP") features
// carry the class text embedding of each object; the localization ("SAM")
// features carry a per-object random embedding that says nothing about the
// class. Both get i.i.d. Gaussian noise. All generated values are rounded to
// float32 so that writing and reading feature files is lossless.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frozenseg/grid.hpp"
#include "frozenseg/maps.hpp"
#include "frozenseg/matrix.hpp"

namespace frozenseg {

struct SceneSpec {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int classes = 8;
  int seen_classes = 6;
  int instances = 4;
  /// How many of the instances are drawn from unseen classes.
  int unseen_instances = 0;
  int dim = 32;
  int sam_dim = 32;
  Real noise = 0.1;
  /// Seed of the shared text-embedding bank; scenes of one dataset share it.
  std::uint64_t bank_seed = 0;

  /// Throws ConfigError for invalid counts and DimensionError when the image
  /// sides are not multiples of 32.
  void validate() const;
};

struct GroundTruth {
  int height = 0;
  int width = 0;
  /// Segment id per pixel, kVoid where unlabeled. Ids are 0..K-1.
  std::vector<int> panoptic;
  /// Class of each segment.
  std::vector<int> segment_class;

  int segment_count() const noexcept { return static_cast<int>(segment_class.size()); }
  SemanticMap semantic() const;
  PanopticMap panoptic_map() const;
  /// One binary row per segment.
  Matrix instance_masks() const;
  /// Throws DataError if ids are out of range or classes exceed `classes`.
  void validate(int classes) const;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// Class-name text embeddings; rows are unit norm.
struct TextEmbeddingBank {
  Matrix embeddings;
  std::vector<std::string> names;
  std::vector<bool> is_seen;

  int classes() const noexcept { return static_cast<int>(embeddings.rows()); }
  int dim() const noexcept { return static_cast<int>(embeddings.cols()); }
  std::vector<int> seen_indices() const;
  /// Bank restricted to the seen (training) vocabulary.
  TextEmbeddingBank seen_subset() const;
  void validate() const;

  friend bool operator==(const TextEmbeddingBank&, const TextEmbeddingBank&) = default;
};

TextEmbeddingBank make_text_bank(int classes, int seen_classes, int dim, std::uint64_t bank_seed);

struct ClipPyramid {
  FeatureGrid full;
  FeatureGrid eighth;
  FeatureGrid sixteenth;
  FeatureGrid thirty_second;

  const FeatureGrid& at(Scale s) const;
};

struct Scene {
  SceneSpec spec;
  ClipPyramid clip;
  /// Localization features at 1/16 of the image.
  FeatureGrid sam;
  GroundTruth gt;
  TextEmbeddingBank bank;
};

Scene generate_scene(const SceneSpec& spec);

/// Builds the CLIP pyramid from a full-resolution grid by 2x average pooling.
ClipPyramid build_pyramid(const FeatureGrid& full);

struct ProposalOptions {
  /// Maximum absolute shift in pixels applied to each GT mask.
  int max_shift = 2;
  /// Extra random rectangles that do not follow any object.
  int distractors = 2;
};

/// Class-agnostic stand-ins for automatic SAM proposals: every GT mask,
/// randomly shifted, plus a few random rectangles.
BinaryMaskSet make_fixture_proposals(const GroundTruth& gt, std::uint64_t seed,
                                     const ProposalOptions& options = {});

// "FZSG" feature files: magic, u32 version (1), u32 H, u32 W, u32 D, u8 scale
// code, then H*W*D little-endian float32 values in row-major order.
inline constexpr std::uint32_t kFeatureFileVersion = 1;
std::vector<std::uint8_t> encode_feature_grid(const FeatureGrid& grid);
FeatureGrid decode_feature_grid(const std::vector<std::uint8_t>& bytes);
void save_feature_file(const std::filesystem::path& path, const FeatureGrid& grid);
FeatureGrid load_feature_file(const std::filesystem::path& path);

// "FZTB" text-bank files: magic, u32 C, u32 D, then C names (u32 byte length
// followed by UTF-8 bytes), then C*D little-endian float32 values. Seen flags
// are not part of the file; loaded banks mark every class as seen.
std::vector<std::uint8_t> encode_text_bank(const TextEmbeddingBank& bank);
TextEmbeddingBank decode_text_bank(const std::vector<std::uint8_t>& bytes);
void save_text_bank(const std::filesystem::path& path, const TextEmbeddingBank& bank);
TextEmbeddingBank load_text_bank(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace frozenseg
