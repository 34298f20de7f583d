#pragma once

#include <vector>

#include "frozenseg/matrix.hpp"

namespace frozenseg {

inline constexpr int kVoid = -1;

/// Per-pixel class ids; kVoid marks unlabeled pixels.
struct SemanticMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;

  friend bool operator==(const SemanticMap&, const SemanticMap&) = default;
};

struct PanopticSegment {
  int class_id = 0;
  Real score = 1.0;

  friend bool operator==(const PanopticSegment&, const PanopticSegment&) = default;
};

/// Per-pixel segment ids (kVoid for unassigned) plus the segment table.
struct PanopticMap {
  int height = 0;
  int width = 0;
  std::vector<int> segment_ids;
  std::vector<PanopticSegment> segments;

  /// Throws DataError if a pixel references a segment missing from the table.
  void validate() const;
  SemanticMap semantic() const;
  /// One binary row per segment (segments x pixels).
  Matrix segment_masks() const;

  friend bool operator==(const PanopticMap&, const PanopticMap&) = default;
};

/// Set of binary masks, one 0/1 row per mask over height*width pixels.
struct BinaryMaskSet {
  int height = 0;
  int width = 0;
  Matrix masks;

  int count() const noexcept { return static_cast<int>(masks.rows()); }

  friend bool operator==(const BinaryMaskSet&, const BinaryMaskSet&) = default;
};

}  // namespace frozenseg
