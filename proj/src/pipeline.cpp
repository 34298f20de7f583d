#include "frozenseg/pipeline.hpp"

#include "frozenseg/errors.hpp"

namespace frozenseg {

namespace {

BinaryMaskSet nonempty_rows(const Matrix& masks, int height, int width) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < masks.rows(); ++i) {
    for (Real v : masks.row(i)) {
      if (v != 0.0) {
        keep.push_back(i);
        break;
      }
    }
  }
  BinaryMaskSet out{height, width, Matrix(keep.size(), masks.cols())};
  for (std::size_t k = 0; k < keep.size(); ++k)
    std::copy(masks.row(keep[k]).begin(), masks.row(keep[k]).end(), out.masks.row(k).begin());
  return out;
}

void append_rows(BinaryMaskSet& to, const BinaryMaskSet& from) {
  if (from.count() == 0) return;
  std::vector<Real> data(to.masks.data().begin(), to.masks.data().end());
  data.insert(data.end(), from.masks.data().begin(), from.masks.data().end());
  to.masks = Matrix(to.masks.rows() + from.masks.rows(), to.masks.cols(), std::move(data));
}

}  // namespace

SceneResult infer_scene(DecoderParams& params, const ClipPyramid& clip, const FeatureGrid& sam,
                        const TextEmbeddingBank& bank, const BinaryMaskSet* sam_masks, const InferenceOptions& options) {
  options.ensemble.validate();
  const int h = clip.full.height, w = clip.full.width;
  SceneResult res;
  res.decoder = decoder_forward(params, {clip, sam, bank});
  const DecoderLayerOutput& last = res.decoder.layers.back();
  res.masks = last.masks.resized(h, w, Scale::full);

  const ClassScoreSet pooled = clip_classify_masks(last.masks, clip.full, bank, options.clip_temperature);
  res.classes = class_ensemble(last.classes, pooled, options.ensemble, bank.is_seen);

  SemanticScoreMap scores = semantic_aggregate(res.classes, res.masks);
  res.proposals = nonempty_rows(res.masks.binarized(), h, w);
  if (options.mask_ensemble && sam_masks != nullptr) {
    if (sam_masks->height != h || sam_masks->width != w)
      throw DimensionError("proposal masks do not match the image size");
    res.sam = build_sam_proposals(*sam_masks, clip.full, bank, options.ensemble.xi, options.clip_temperature);
    const SemanticScoreMap from_sam = semantic_aggregate(res.sam, h, w, bank.classes());
    scores = mask_ensemble(scores, from_sam, options.ensemble.epsilon, bank.is_seen);
    if (options.ensemble.epsilon > 0.0) append_rows(res.proposals, res.sam.masks);
  }
  res.semantic = semantic_decode(scores);
  res.panoptic = panoptic_decode(res.classes, res.masks, options.panoptic);
  return res;
}

SceneResult infer_proposals_only(const ClipPyramid& clip, const TextEmbeddingBank& bank, const BinaryMaskSet& sam_masks,
                                 const InferenceOptions& options) {
  options.ensemble.validate();
  const int h = clip.full.height, w = clip.full.width;
  if (sam_masks.height != h || sam_masks.width != w) throw DimensionError("proposal masks do not match the image size");
  SceneResult res;
  res.sam = build_sam_proposals(sam_masks, clip.full, bank, options.ensemble.xi, options.clip_temperature);
  res.proposals = res.sam.masks;
  res.classes = ClassScoreSet{Matrix(res.sam.count(), bank.classes() + 1)};
  for (int i = 0; i < res.sam.count(); ++i)
    std::copy(res.sam.scores.row(i).begin(), res.sam.scores.row(i).end(), res.classes.probabilities.row(i).begin());
  res.semantic = semantic_decode(semantic_aggregate(res.sam, h, w, bank.classes()));
  res.panoptic = panoptic_decode(res.classes, res.sam.masks.masks, h, w, options.panoptic);
  return res;
}

}  // namespace frozenseg
