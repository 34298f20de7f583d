#include "frozenseg/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "frozenseg/errors.hpp"
#include "frozenseg/kernels.hpp"

namespace frozenseg {

namespace {

void require_same_grid(int h1, int w1, int h2, int w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    std::ostringstream os;
    os << what << ": prediction is " << h1 << "x" << w1 << " but ground truth is " << h2 << "x" << w2;
    throw DimensionError(os.str());
  }
}

std::string threshold_key(Real t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

}  // namespace

ConfusionAccumulator::ConfusionAccumulator(int classes)
    : classes_(classes),
      counts_(static_cast<std::size_t>(std::max(classes, 0)) * std::max(classes, 0), 0),
      missed_(static_cast<std::size_t>(std::max(classes, 0)), 0) {
  if (classes <= 0) throw ConfigError("confusion accumulator needs at least one class");
}

void ConfusionAccumulator::add(const SemanticMap& pred, const SemanticMap& gt) {
  require_same_grid(pred.height, pred.width, gt.height, gt.width, "miou");
  if (pred.labels.size() != gt.labels.size()) throw DimensionError("miou: label vectors differ in length");
  std::vector<std::int64_t> image;
  kernels::parallel::confusion(pred.labels, gt.labels, classes_, image);
  for (std::size_t i = 0; i < image.size(); ++i) counts_[i] += image[i];
  for (std::size_t p = 0; p < gt.labels.size(); ++p) {
    const int g = gt.labels[p];
    if (g < 0 || g >= classes_) continue;
    if (pred.labels[p] < 0 || pred.labels[p] >= classes_) ++missed_[g];
  }
}

IoUResult ConfusionAccumulator::result() const {
  const auto c = static_cast<std::size_t>(classes_);
  std::vector<std::int64_t> gt_total(c, 0), pred_total(c, 0);
  for (std::size_t g = 0; g < c; ++g) {
    gt_total[g] += missed_[g];
    for (std::size_t p = 0; p < c; ++p) {
      gt_total[g] += counts_[g * c + p];
      pred_total[p] += counts_[g * c + p];
    }
  }
  const std::int64_t labeled = std::accumulate(gt_total.begin(), gt_total.end(), std::int64_t{0});
  IoUResult r;
  r.per_class.assign(c, 0.0);
  r.present.assign(c, false);
  int present = 0;
  for (std::size_t j = 0; j < c; ++j) {
    const std::int64_t tp = counts_[j * c + j];
    const std::int64_t uni = gt_total[j] + pred_total[j] - tp;
    if (uni == 0) continue;
    r.present[j] = true;
    ++present;
    r.per_class[j] = static_cast<Real>(tp) / static_cast<Real>(uni);
    r.miou += r.per_class[j];
    if (labeled > 0) r.fwiou += static_cast<Real>(gt_total[j]) / static_cast<Real>(labeled) * r.per_class[j];
  }
  if (present > 0) r.miou /= present;
  return r;
}

IoUResult miou(const SemanticMap& pred, const SemanticMap& gt, int classes) {
  ConfusionAccumulator acc(classes);
  acc.add(pred, gt);
  return acc.result();
}

void PanopticAccumulator::add(const PanopticMap& pred, const PanopticMap& gt) {
  require_same_grid(pred.height, pred.width, gt.height, gt.width, "panoptic_quality");
  pred.validate();
  gt.validate();
  const std::size_t np = pred.segments.size(), ng = gt.segments.size();
  std::vector<std::int64_t> pred_area(np, 0), pred_void(np, 0), gt_area(ng, 0);
  std::map<std::pair<int, int>, std::int64_t> inter;
  for (std::size_t p = 0; p < gt.segment_ids.size(); ++p) {
    const int a = pred.segment_ids[p], b = gt.segment_ids[p];
    if (b != kVoid) ++gt_area[b];
    if (a == kVoid) continue;
    ++pred_area[a];
    if (b == kVoid)
      ++pred_void[a];
    else
      ++inter[{a, b}];
  }
  std::vector<bool> pred_matched(np, false), gt_matched(ng, false);
  for (const auto& [key, count] : inter) {
    const auto [a, b] = key;
    if (pred.segments[a].class_id != gt.segments[b].class_id) continue;
    const Real uni = static_cast<Real>(pred_area[a] - pred_void[a] + gt_area[b] - count);
    const Real iou = static_cast<Real>(count) / uni;
    if (iou <= 0.5) continue;
    if (pred_matched[a] || gt_matched[b]) throw DataError("panoptic_quality: segment matched twice at IoU > 0.5");
    pred_matched[a] = gt_matched[b] = true;
    ++tp_;
    iou_sum_ += iou;
  }
  for (std::size_t b = 0; b < ng; ++b)
    if (gt_area[b] > 0 && !gt_matched[b]) ++fn_;
  for (std::size_t a = 0; a < np; ++a) {
    if (pred_area[a] == 0 || pred_matched[a]) continue;
    if (2 * pred_void[a] > pred_area[a]) continue;
    ++fp_;
  }
}

PanopticQualityResult PanopticAccumulator::result() const {
  PanopticQualityResult r;
  r.true_positives = tp_;
  r.false_positives = fp_;
  r.false_negatives = fn_;
  r.iou_sum = iou_sum_;
  const Real denom = static_cast<Real>(tp_) + 0.5 * static_cast<Real>(fp_ + fn_);
  if (denom == 0.0) {
    r.pq = r.sq = r.rq = 1.0;
    return r;
  }
  r.rq = static_cast<Real>(tp_) / denom;
  r.sq = tp_ > 0 ? iou_sum_ / static_cast<Real>(tp_) : 0.0;
  r.pq = iou_sum_ / denom;
  return r;
}

PanopticQualityResult panoptic_quality(const PanopticMap& pred, const PanopticMap& gt) {
  PanopticAccumulator acc;
  acc.add(pred, gt);
  return acc.result();
}

void RecallAccumulator::add(const BinaryMaskSet& proposals, const GroundTruth& gt, const std::vector<bool>& is_seen) {
  if (proposals.count() > 0) require_same_grid(proposals.height, proposals.width, gt.height, gt.width, "mask_recall");
  const Matrix instances = gt.instance_masks();
  const std::size_t pixels = instances.cols();
  std::vector<std::int64_t> prop_area(proposals.count(), 0);
  for (int j = 0; j < proposals.count(); ++j)
    for (Real v : proposals.masks.row(j)) prop_area[j] += v != 0.0;
  for (int k = 0; k < gt.segment_count(); ++k) {
    const int cls = gt.segment_class[k];
    if (cls < 0 || static_cast<std::size_t>(cls) >= is_seen.size()) throw DataError("mask_recall: class without seen flag");
    std::int64_t area = 0;
    for (Real v : instances.row(k)) area += v != 0.0;
    if (area == 0) continue;
    Real best = 0.0;
    for (int j = 0; j < proposals.count(); ++j) {
      std::int64_t both = 0;
      for (std::size_t p = 0; p < pixels; ++p) both += (instances(k, p) != 0.0) && (proposals.masks(j, p) != 0.0);
      best = std::max(best, static_cast<Real>(both) / static_cast<Real>(area + prop_area[j] - both));
    }
    auto& hits = is_seen[cls] ? seen_hits_ : unseen_hits_;
    ++(is_seen[cls] ? seen_total_ : unseen_total_);
    for (std::size_t t = 0; t < kRecallThresholds.size(); ++t)
      if (best >= kRecallThresholds[t]) ++hits[t];
  }
}

RecallReport RecallAccumulator::result() const {
  RecallReport r;
  r.seen_total = seen_total_;
  r.unseen_total = unseen_total_;
  for (std::size_t t = 0; t < kRecallThresholds.size(); ++t) {
    if (seen_total_ > 0) r.seen[t] = static_cast<Real>(seen_hits_[t]) / static_cast<Real>(seen_total_);
    if (unseen_total_ > 0) r.unseen[t] = static_cast<Real>(unseen_hits_[t]) / static_cast<Real>(unseen_total_);
  }
  return r;
}

RecallReport mask_recall(const BinaryMaskSet& proposals, const GroundTruth& gt, const std::vector<bool>& is_seen) {
  RecallAccumulator acc;
  acc.add(proposals, gt, is_seen);
  return acc.result();
}

std::vector<InstanceDetection> detections_from_panoptic(const PanopticMap& map) {
  std::vector<InstanceDetection> out(map.segments.size());
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s].class_id = map.segments[s].class_id;
    out[s].score = map.segments[s].score;
    out[s].mask.assign(map.segment_ids.size(), 0);
  }
  for (std::size_t p = 0; p < map.segment_ids.size(); ++p)
    if (map.segment_ids[p] != kVoid) out[map.segment_ids[p]].mask[p] = 1;
  std::erase_if(out, [](const InstanceDetection& d) { return std::find(d.mask.begin(), d.mask.end(), 1) == d.mask.end(); });
  return out;
}

void DetectionAccumulator::add(const std::vector<InstanceDetection>& detections, const GroundTruth& gt) {
  const Matrix instances = gt.instance_masks();
  const std::size_t pixels = instances.cols();
  int max_class = 0;
  for (int c : gt.segment_class) max_class = std::max(max_class, c + 1);
  for (const auto& d : detections) {
    if (d.mask.size() != pixels) throw DimensionError("average_precision_50: detection mask size differs from GT");
    if (d.class_id < 0) throw DataError("average_precision_50: negative class id");
    max_class = std::max(max_class, d.class_id + 1);
  }
  if (per_class_.size() < static_cast<std::size_t>(max_class)) {
    per_class_.resize(max_class);
    gt_per_class_.resize(max_class, 0);
  }
  std::vector<std::int64_t> gt_area(gt.segment_count(), 0);
  for (int k = 0; k < gt.segment_count(); ++k) {
    for (Real v : instances.row(k)) gt_area[k] += v != 0.0;
    if (gt_area[k] > 0) ++gt_per_class_[gt.segment_class[k]];
  }
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
  std::vector<bool> used(gt.segment_count(), false);
  for (std::size_t idx : order) {
    const auto& d = detections[idx];
    std::int64_t area = 0;
    for (auto v : d.mask) area += v != 0;
    int best = -1;
    Real best_iou = 0.0;
    for (int k = 0; k < gt.segment_count(); ++k) {
      if (used[k] || gt.segment_class[k] != d.class_id || gt_area[k] == 0) continue;
      std::int64_t both = 0;
      for (std::size_t p = 0; p < pixels; ++p) both += d.mask[p] != 0 && instances(k, p) != 0.0;
      const Real iou = static_cast<Real>(both) / static_cast<Real>(area + gt_area[k] - both);
      if (iou >= 0.5 && iou > best_iou) {
        best = k;
        best_iou = iou;
      }
    }
    if (best >= 0) used[best] = true;
    per_class_[d.class_id].push_back({d.score, best >= 0, next_order_++});
  }
}

Real DetectionAccumulator::average_precision() const {
  Real total = 0.0;
  int classes = 0;
  for (std::size_t c = 0; c < gt_per_class_.size(); ++c) {
    if (gt_per_class_[c] == 0) continue;
    ++classes;
    auto dets = per_class_[c];
    std::sort(dets.begin(), dets.end(), [](const Scored& a, const Scored& b) {
      return a.score != b.score ? a.score > b.score : a.order < b.order;
    });
    std::vector<Real> precision(dets.size()), recall(dets.size());
    std::int64_t tp = 0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      tp += dets[k].true_positive;
      precision[k] = static_cast<Real>(tp) / static_cast<Real>(k + 1);
      recall[k] = static_cast<Real>(tp) / static_cast<Real>(gt_per_class_[c]);
    }
    for (std::size_t k = dets.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    Real ap = 0.0, prev_recall = 0.0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
    total += ap;
  }
  return classes > 0 ? total / classes : 0.0;
}

Real average_precision_50(const std::vector<InstanceDetection>& detections, const GroundTruth& gt) {
  DetectionAccumulator acc;
  acc.add(detections, gt);
  return acc.average_precision();
}

Evaluator::Evaluator(int classes, std::vector<bool> is_seen) : is_seen_(std::move(is_seen)), confusion_(classes) {
  if (is_seen_.size() != static_cast<std::size_t>(classes)) throw ConfigError("evaluator: one seen flag per class required");
}

void Evaluator::add(const SemanticMap& semantic, const PanopticMap& panoptic, const BinaryMaskSet& proposals,
                    const GroundTruth& gt) {
  gt.validate(confusion_.classes());
  confusion_.add(semantic, gt.semantic());
  panoptic_.add(panoptic, gt.panoptic_map());
  recall_.add(proposals, gt, is_seen_);
  detection_.add(detections_from_panoptic(panoptic), gt);
}

SegQualityReport Evaluator::report() const {
  return SegQualityReport{confusion_.result(), panoptic_.result(), detection_.average_precision(), recall_.result()};
}

nlohmann::json report_to_json(const SegQualityReport& report, const std::vector<std::string>& class_names) {
  nlohmann::json j;
  j["miou"] = report.iou.miou;
  j["fwiou"] = report.iou.fwiou;
  j["per_class_iou"] = nlohmann::json::object();
  for (std::size_t c = 0; c < report.iou.per_class.size(); ++c) {
    if (!report.iou.present[c]) continue;
    const std::string name = c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
    j["per_class_iou"][name] = report.iou.per_class[c];
  }
  j["pq"] = report.panoptic.pq;
  j["sq"] = report.panoptic.sq;
  j["rq"] = report.panoptic.rq;
  j["ap50"] = report.ap50;
  for (std::size_t t = 0; t < kRecallThresholds.size(); ++t) {
    j["recall"]["seen"][threshold_key(kRecallThresholds[t])] = report.recall.seen[t];
    j["recall"]["unseen"][threshold_key(kRecallThresholds[t])] = report.recall.unseen[t];
  }
  return j;
}

void validate_report_json(const nlohmann::json& j) {
  auto unit = [](const nlohmann::json& v, const std::string& where) {
    if (!v.is_number()) throw DataError("report field '" + where + "' is missing or not a number");
    const Real x = v.get<Real>();
    if (!(x >= 0.0 && x <= 1.0)) throw DataError("report field '" + where + "' lies outside [0, 1]");
  };
  if (!j.is_object()) throw DataError("report is not a JSON object");
  for (const char* key : {"miou", "fwiou", "pq", "sq", "rq", "ap50"}) unit(j.contains(key) ? j[key] : nlohmann::json(), key);
  if (!j.contains("per_class_iou") || !j["per_class_iou"].is_object()) throw DataError("report field 'per_class_iou' is missing");
  for (const auto& [name, v] : j["per_class_iou"].items()) unit(v, "per_class_iou." + name);
  if (!j.contains("recall") || !j["recall"].is_object()) throw DataError("report field 'recall' is missing");
  for (const char* group : {"seen", "unseen"}) {
    const auto& r = j["recall"];
    if (!r.contains(group) || !r[group].is_object()) throw DataError(std::string("report field 'recall.") + group + "' is missing");
    for (Real t : kRecallThresholds) {
      const std::string key = threshold_key(t);
      unit(r[group].contains(key) ? r[group][key] : nlohmann::json(), std::string("recall.") + group + "." + key);
    }
  }
  const Real pq = j["pq"].get<Real>(), sq = j["sq"].get<Real>(), rq = j["rq"].get<Real>();
  if (std::abs(pq - sq * rq) > 1e-9) throw DataError("report violates pq = sq * rq");
}

}  // namespace frozenseg
