#pragma once

// Segmentation quality metrics. Each metric has a per-image function and an
// accumulator that sums raw counts across images, so dataset-level values
// are computed from pooled counts rather than averaged per image. Void GT
// pixels never contribute to any count.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "frozenseg/fixtures.hpp"
#include "frozenseg/maps.hpp"

#include "json.hpp"

namespace frozenseg {

struct IoUResult {
  /// IoU per class; 0 for classes absent from both prediction and GT.
  std::vector<Real> per_class;
  /// Whether the class appears in the prediction or the GT.
  std::vector<bool> present;
  Real miou = 0.0;
  Real fwiou = 0.0;
};

/// Confusion counts indexed (gt, pred) over C classes.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int classes);

  /// Throws DimensionError on shape mismatch. Void GT pixels are skipped;
  /// a void prediction on a labeled pixel counts as a miss for the GT class.
  void add(const SemanticMap& pred, const SemanticMap& gt);
  IoUResult result() const;

  int classes() const noexcept { return classes_; }
  std::int64_t count(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * classes_ + pred]; }

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
  std::vector<std::int64_t> missed_;
};

IoUResult miou(const SemanticMap& pred, const SemanticMap& gt, int classes);

struct PanopticQualityResult {
  Real pq = 0.0;
  Real sq = 0.0;
  Real rq = 0.0;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t false_negatives = 0;
  Real iou_sum = 0.0;
};

/// Pooled PQ over every segment of every image. A prediction matches a GT
/// segment of the same class when their IoU exceeds 0.5, with the void area
/// of the prediction left out of the union. Unmatched predictions lying
/// mostly on void are not counted as false positives.
class PanopticAccumulator {
 public:
  /// Throws DimensionError on shape mismatch and DataError if a GT segment
  /// would match two predictions.
  void add(const PanopticMap& pred, const PanopticMap& gt);
  PanopticQualityResult result() const;

 private:
  std::int64_t tp_ = 0, fp_ = 0, fn_ = 0;
  Real iou_sum_ = 0.0;
};

PanopticQualityResult panoptic_quality(const PanopticMap& pred, const PanopticMap& gt);

inline constexpr std::array<Real, 3> kRecallThresholds{0.5, 0.75, 0.9};

struct RecallReport {
  std::array<Real, 3> seen{};
  std::array<Real, 3> unseen{};
  std::int64_t seen_total = 0;
  std::int64_t unseen_total = 0;
};

/// Class-agnostic recall: a GT instance counts as recalled at threshold t
/// when some proposal overlaps it with IoU >= t. Groups without instances
/// report 0.
class RecallAccumulator {
 public:
  void add(const BinaryMaskSet& proposals, const GroundTruth& gt, const std::vector<bool>& is_seen);
  RecallReport result() const;

 private:
  std::array<std::int64_t, 3> seen_hits_{}, unseen_hits_{};
  std::int64_t seen_total_ = 0, unseen_total_ = 0;
};

RecallReport mask_recall(const BinaryMaskSet& proposals, const GroundTruth& gt, const std::vector<bool>& is_seen);

struct InstanceDetection {
  /// 0/1 per pixel, same grid as the GT.
  std::vector<std::uint8_t> mask;
  int class_id = 0;
  Real score = 0.0;
};

std::vector<InstanceDetection> detections_from_panoptic(const PanopticMap& map);

/// AP at IoU 0.5: detections are matched greedily in descending score order
/// to the unmatched same-class GT instance of highest IoU (>= 0.5). The
/// precision-recall curve of each class with GT instances is integrated with
/// all-point interpolation, and the class APs are averaged.
class DetectionAccumulator {
 public:
  void add(const std::vector<InstanceDetection>& detections, const GroundTruth& gt);
  Real average_precision() const;

 private:
  struct Scored {
    Real score;
    bool true_positive;
    std::int64_t order;
  };
  std::vector<std::vector<Scored>> per_class_;
  std::vector<std::int64_t> gt_per_class_;
  std::int64_t next_order_ = 0;
};

Real average_precision_50(const std::vector<InstanceDetection>& detections, const GroundTruth& gt);

struct SegQualityReport {
  IoUResult iou;
  PanopticQualityResult panoptic;
  Real ap50 = 0.0;
  RecallReport recall;
};

/// Dataset-level evaluator combining every accumulator above.
class Evaluator {
 public:
  Evaluator(int classes, std::vector<bool> is_seen);

  /// `proposals` are the class-agnostic masks scored for recall.
  void add(const SemanticMap& semantic, const PanopticMap& panoptic, const BinaryMaskSet& proposals,
           const GroundTruth& gt);
  SegQualityReport report() const;

 private:
  std::vector<bool> is_seen_;
  ConfusionAccumulator confusion_;
  PanopticAccumulator panoptic_;
  RecallAccumulator recall_;
  DetectionAccumulator detection_;
};

/// {"miou", "fwiou", "per_class_iou": {name: iou}, "pq", "sq", "rq", "ap50",
///  "recall": {"seen": {"0.5", "0.75", "0.9"}, "unseen": {...}}}
/// per_class_iou lists only classes present in prediction or GT.
nlohmann::json report_to_json(const SegQualityReport& report, const std::vector<std::string>& class_names);
/// Throws DataError naming the first missing or out-of-range field.
void validate_report_json(const nlohmann::json& j);

}  // namespace frozenseg
