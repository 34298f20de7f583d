#include "frozenseg/ensemble.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "frozenseg/errors.hpp"
#include "frozenseg/kernels.hpp"

namespace frozenseg {

void EnsembleConfig::validate() const {
  auto unit = [](Real v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  unit(alpha, "alpha");
  unit(beta, "beta");
  unit(epsilon, "epsilon");
  unit(xi, "xi");
}

ClassScoreSet class_ensemble(const ClassScoreSet& detector, const ClassScoreSet& clip, const EnsembleConfig& cfg,
                             const std::vector<bool>& is_seen, bool renormalize) {
  cfg.validate();
  require_same_shape(detector.probabilities, clip.probabilities, "class_ensemble");
  const std::size_t classes = detector.probabilities.cols() - 1;
  if (is_seen.size() != classes) throw DimensionError("class_ensemble: one seen flag per class required");
  ClassScoreSet out{Matrix(detector.probabilities.rows(), classes + 1)};
  for (std::size_t i = 0; i < out.probabilities.rows(); ++i) {
    Real total = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const Real w = is_seen[j] ? cfg.alpha : cfg.beta;
      const Real v = std::pow(detector.probabilities(i, j), 1.0 - w) * std::pow(clip.probabilities(i, j), w);
      out.probabilities(i, j) = v;
      total += v;
    }
    out.probabilities(i, classes) = detector.probabilities(i, classes);
    total += out.probabilities(i, classes);
    if (renormalize && total > 0.0)
      for (auto& v : out.probabilities.row(i)) v /= total;
  }
  return out;
}

SamProposalSet build_sam_proposals(const BinaryMaskSet& masks, const FeatureGrid& clip_full,
                                   const TextEmbeddingBank& bank, Real xi, Real temperature) {
  SamProposalSet out;
  out.masks = BinaryMaskSet{masks.height, masks.width, Matrix(0, masks.masks.cols())};
  out.scores = Matrix(0, bank.classes());
  if (masks.count() == 0) return out;
  Matrix sized = masks.masks;
  if (masks.height != clip_full.height || masks.width != clip_full.width) {
    sized = resize_maps(masks.masks, masks.height, masks.width, clip_full.height, clip_full.width);
    for (auto& v : sized.data()) v = v > 0.5 ? 1.0 : 0.0;
  }
  const Matrix probs = pooled_class_probabilities(mask_pool_binary(sized, clip_full), bank, temperature);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    Real best = 0.0;
    for (Real v : probs.row(i)) best = std::max(best, v);
    if (best > xi) keep.push_back(i);
  }
  out.masks.masks = Matrix(keep.size(), masks.masks.cols());
  out.scores = Matrix(keep.size(), probs.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    std::copy(masks.masks.row(keep[k]).begin(), masks.masks.row(keep[k]).end(), out.masks.masks.row(k).begin());
    std::copy(probs.row(keep[k]).begin(), probs.row(keep[k]).end(), out.scores.row(k).begin());
  }
  return out;
}

SemanticScoreMap semantic_aggregate(const ClassScoreSet& probs, const MaskLogitSet& masks) {
  if (probs.count() != masks.count()) throw DimensionError("semantic_aggregate: query counts differ");
  SemanticScoreMap r{masks.height, masks.width, Matrix(probs.classes(), masks.logits.cols())};
  kernels::parallel::aggregate_scores(probs.probabilities, probs.classes(), masks.probabilities(), r.scores);
  return r;
}

SemanticScoreMap semantic_aggregate(const SamProposalSet& proposals, int height, int width, int classes) {
  SemanticScoreMap r{height, width, Matrix(classes, static_cast<std::size_t>(height) * width)};
  if (proposals.count() == 0) return r;
  if (proposals.masks.height != height || proposals.masks.width != width) {
    throw DimensionError("semantic_aggregate: proposal grid differs from the output grid");
  }
  kernels::parallel::aggregate_scores(proposals.scores, classes, proposals.masks.masks, r.scores);
  return r;
}

SemanticScoreMap mask_ensemble(const SemanticScoreMap& r, const SemanticScoreMap& r_hat, Real epsilon,
                               const std::vector<bool>& is_seen) {
  require_same_shape(r.scores, r_hat.scores, "mask_ensemble");
  if (is_seen.size() != r.scores.rows()) throw DimensionError("mask_ensemble: one seen flag per class required");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  SemanticScoreMap out = r;
  for (std::size_t c = 0; c < r.scores.rows(); ++c) {
    if (is_seen[c]) continue;
    auto o = out.scores.row(c);
    auto a = r.scores.row(c);
    auto b = r_hat.scores.row(c);
    for (std::size_t p = 0; p < o.size(); ++p) o[p] = (1.0 - epsilon) * a[p] + epsilon * b[p];
  }
  return out;
}

SemanticMap semantic_decode(const SemanticScoreMap& scores) {
  SemanticMap m{scores.height, scores.width, std::vector<int>(scores.scores.cols(), kVoid)};
  for (std::size_t p = 0; p < scores.scores.cols(); ++p) {
    int best = kVoid;
    Real best_v = 0.0;
    for (std::size_t c = 0; c < scores.scores.rows(); ++c) {
      const Real v = scores.scores(c, p);
      if (best == kVoid || v > best_v) {
        best = static_cast<int>(c);
        best_v = v;
      }
    }
    m.labels[p] = best;
  }
  return m;
}

PanopticMap panoptic_decode(const ClassScoreSet& probs, const MaskLogitSet& masks, const PanopticOptions& options) {
  return panoptic_decode(probs, masks.probabilities(), masks.height, masks.width, options);
}

PanopticMap panoptic_decode(const ClassScoreSet& probs, const Matrix& m, int height, int width,
                            const PanopticOptions& options) {
  if (static_cast<std::size_t>(probs.count()) != m.rows()) throw DimensionError("panoptic_decode: query counts differ");
  if (m.cols() != static_cast<std::size_t>(height) * width) throw DimensionError("panoptic_decode: mask size differs from the grid");
  const std::size_t n = static_cast<std::size_t>(probs.count());
  const std::size_t pixels = m.cols();
  const int no_object = probs.classes();
  std::vector<int> top_class(n);
  std::vector<Real> top_score(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c <= no_object; ++c)
      if (probs.probabilities(i, c) > probs.probabilities(i, best)) best = c;
    top_class[i] = best;
    top_score[i] = probs.probabilities(i, best);
  }
  std::vector<int> owner(pixels, kVoid);
  std::vector<int> area(n, 0);
  for (std::size_t p = 0; p < pixels; ++p) {
    int best = kVoid;
    Real best_v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (top_class[i] == no_object) continue;
      const Real v = top_score[i] * m(i, p);
      if (best == kVoid || v > best_v) {
        best = static_cast<int>(i);
        best_v = v;
      }
    }
    if (best != kVoid && best_v >= options.score_floor) {
      owner[p] = best;
      ++area[best];
    }
  }
  std::vector<int> segment_of(n, kVoid);
  PanopticMap out{height, width, std::vector<int>(pixels, kVoid), {}};
  for (std::size_t i = 0; i < n; ++i) {
    if (area[i] == 0 || area[i] < options.min_area) continue;
    segment_of[i] = static_cast<int>(out.segments.size());
    out.segments.push_back({top_class[i], top_score[i]});
  }
  for (std::size_t p = 0; p < pixels; ++p)
    if (owner[p] != kVoid) out.segment_ids[p] = segment_of[owner[p]];
  return out;
}

std::vector<std::uint8_t> encode_proposals(const BinaryMaskSet& masks) {
  detail::ByteWriter w;
  w.magic("FZPM");
  w.u32(static_cast<std::uint32_t>(masks.count()));
  w.u32(static_cast<std::uint32_t>(masks.height));
  w.u32(static_cast<std::uint32_t>(masks.width));
  for (int i = 0; i < masks.count(); ++i) {
    std::vector<std::uint32_t> runs;
    bool fg = false;
    std::uint32_t len = 0;
    for (Real v : masks.masks.row(i)) {
      const bool on = v != 0.0;
      if (on != fg) {
        runs.push_back(len);
        len = 0;
        fg = on;
      }
      ++len;
    }
    runs.push_back(len);
    w.u32(static_cast<std::uint32_t>(runs.size()));
    for (auto r : runs) w.u32(r);
  }
  return w.take();
}

BinaryMaskSet decode_proposals(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "FZPM");
  r.expect_magic("FZPM");
  const std::uint32_t count = r.u32(), h = r.u32(), w = r.u32();
  const std::size_t pixels = static_cast<std::size_t>(h) * w;
  BinaryMaskSet out{static_cast<int>(h), static_cast<int>(w), Matrix(0, pixels)};
  std::vector<Real> data;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t mask_at = r.offset();
    const std::uint32_t runs = r.u32();
    r.need(static_cast<std::size_t>(runs) * 4);
    std::size_t filled = 0;
    bool fg = false;
    for (std::uint32_t k = 0; k < runs; ++k) {
      const std::uint32_t len = r.u32();
      if (filled + len > pixels) r.fail_at("mask " + std::to_string(i) + " runs exceed the image size", mask_at);
      data.insert(data.end(), len, fg ? 1.0 : 0.0);
      filled += len;
      fg = !fg;
    }
    if (filled != pixels) r.fail_at("mask " + std::to_string(i) + " runs cover " + std::to_string(filled) +
                                        " of " + std::to_string(pixels) + " pixels", mask_at);
  }
  r.expect_end();
  out.masks = Matrix(count, pixels, std::move(data));
  return out;
}

void save_proposals(const std::filesystem::path& path, const BinaryMaskSet& masks) {
  write_file_bytes(path, encode_proposals(masks));
}

BinaryMaskSet load_proposals(const std::filesystem::path& path) { return decode_proposals(read_file_bytes(path)); }

}  // namespace frozenseg
