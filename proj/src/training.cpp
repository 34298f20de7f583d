#include "frozenseg/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "frozenseg/errors.hpp"

namespace frozenseg {

void LossWeights::validate() const {
  if (!(cls > 0.0 && bce > 0.0 && dice > 0.0 && no_object > 0.0)) throw ConfigError("loss weights must be positive");
}

int MatchResult::matched() const {
  int n = 0;
  for (int a : assignment) n += a >= 0;
  return n;
}

MatchResult hungarian(const Matrix& cost) {
  const std::size_t rows = cost.rows(), cols = cost.cols();
  if (cols > rows) {
    throw ConfigError("cannot match " + std::to_string(cols) + " ground-truth segments with " + std::to_string(rows) +
                      " queries");
  }
  require_finite(cost, "hungarian cost");
  MatchResult result;
  result.assignment.assign(rows, -1);
  if (cols == 0) return result;

  // Potentials method with GT as the (smaller) row side, 1-based.
  const std::size_t n = cols, m = rows;
  const Real inf = std::numeric_limits<Real>::infinity();
  std::vector<Real> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<Real> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      Real delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const Real cur = cost(j - 1, i0 - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] == 0) continue;
    result.assignment[j - 1] = static_cast<int>(owner[j] - 1);
    result.cost += cost(j - 1, owner[j] - 1);
  }
  return result;
}

MaskTargets make_targets(const GroundTruth& gt, int height, int width) {
  if (height <= 0 || width <= 0 || gt.height % height != 0 || gt.width % width != 0) {
    throw DimensionError("target grid " + std::to_string(height) + "x" + std::to_string(width) +
                         " does not divide the " + std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                         " ground truth");
  }
  const int fy = gt.height / height, fx = gt.width / width;
  MaskTargets t{height, width, Matrix(gt.segment_count(), static_cast<std::size_t>(height) * width), gt.segment_class};
  const Real cell = 1.0 / (fy * fx);
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      const int id = gt.panoptic[static_cast<std::size_t>(y) * gt.width + x];
      if (id == kVoid) continue;
      t.masks(id, static_cast<std::size_t>(y / fy) * width + x / fx) += cell;
    }
  }
  return t;
}

Matrix match_cost(const ClassScoreSet& probs, const MaskLogitSet& masks, const MaskTargets& targets,
                  const LossWeights& weights) {
  if (probs.count() != masks.count()) throw DimensionError("match_cost: query counts differ");
  if (masks.height != targets.height || masks.width != targets.width)
    throw DimensionError("match_cost: masks are not on the target grid");
  const std::size_t n = masks.logits.rows(), k = targets.masks.rows(), pixels = masks.logits.cols();
  Matrix cost(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = masks.logits.row(i);
    Real softplus_sum = 0.0, sig_sum = 0.0;
    std::vector<Real> s(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      softplus_sum += std::max(x[p], 0.0) + std::log1p(std::exp(-std::abs(x[p])));
      s[p] = 1.0 / (1.0 + std::exp(-x[p]));
      sig_sum += s[p];
    }
    for (std::size_t j = 0; j < k; ++j) {
      auto t = targets.masks.row(j);
      Real xt = 0.0, st = 0.0, t_sum = 0.0;
      for (std::size_t p = 0; p < pixels; ++p) {
        xt += x[p] * t[p];
        st += s[p] * t[p];
        t_sum += t[p];
      }
      const Real bce = (softplus_sum - xt) / static_cast<Real>(pixels);
      const Real dice = 1.0 - (2.0 * st + 1.0) / (sig_sum + t_sum + 1.0);
      const int cls = targets.classes[j];
      if (cls < 0 || cls >= probs.classes()) throw DataError("match_cost: target class outside the vocabulary");
      cost(i, j) = weights.cls * (1.0 - probs.probabilities(i, cls)) + weights.bce * bce + weights.dice * dice;
    }
  }
  return cost;
}

MatchResult hungarian_match(const ClassScoreSet& probs, const MaskLogitSet& masks, const MaskTargets& targets,
                            const LossWeights& weights) {
  return hungarian(match_cost(probs, masks, targets, weights));
}

LossTerms layer_loss(Tape& tape, Var class_logits, Var mask_logits, const MaskTargets& targets,
                     const MatchResult& match, const LossWeights& weights) {
  const std::size_t n = class_logits.rows();
  if (match.assignment.size() != n || mask_logits.rows() != n) throw DimensionError("layer_loss: query counts differ");
  const int no_object = static_cast<int>(class_logits.cols()) - 1;
  std::vector<int> cls_targets(n, no_object);
  std::vector<Real> cls_weights(n, weights.no_object);
  Matrix select(targets.masks.rows(), n);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = match.assignment[i];
    if (k < 0) continue;
    cls_targets[i] = targets.classes[k];
    cls_weights[i] = 1.0;
    select(k, i) = 1.0;
  }
  LossTerms terms;
  Var ce = ad::cross_entropy_rows(class_logits, cls_targets, cls_weights);
  terms.cls = ce.value()(0, 0);
  terms.total = ad::scale(ce, weights.cls);
  if (targets.count() > 0) {
    if (match.matched() != targets.count()) throw DataError("layer_loss: every target needs a matched query");
    Var chosen = ad::matmul(tape.constant(std::move(select)), mask_logits);
    Var bce = ad::bce_with_logits(chosen, targets.masks);
    Var dice = ad::dice_loss(chosen, targets.masks);
    terms.bce = bce.value()(0, 0);
    terms.dice = dice.value()(0, 0);
    terms.total = ad::add(terms.total, ad::add(ad::scale(bce, weights.bce), ad::scale(dice, weights.dice)));
  }
  return terms;
}

LossTerms compute_loss(Tape& tape, const DecoderTrace& trace, const MaskTargets& targets, const LossWeights& weights) {
  weights.validate();
  if (trace.layers.empty()) throw DataError("compute_loss: decoder produced no layers");
  LossTerms sum;
  Var upsample;
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& nodes = trace.layers[l];
    const auto& out = trace.output.layers[l];
    Var masks = nodes.mask_logits;
    if (out.masks.height != targets.height || out.masks.width != targets.width) {
      if (!upsample.valid()) {
        upsample = tape.constant(
            bilinear_operator(out.masks.height, out.masks.width, targets.height, targets.width).transposed());
      }
      masks = ad::matmul(masks, upsample);
    }
    const MaskLogitSet sized{targets.height, targets.width, out.masks.scale, masks.value()};
    const MatchResult match = hungarian_match(out.classes, sized, targets, weights);
    LossTerms t = layer_loss(tape, nodes.class_logits, masks, targets, match, weights);
    sum.total = sum.total.valid() ? ad::add(sum.total, t.total) : t.total;
    sum.cls += t.cls;
    sum.bce += t.bce;
    sum.dice += t.dice;
  }
  return sum;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be nonnegative");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("gradient clip norm must be positive");
  if (loss_divisor <= 0) throw ConfigError("loss divisor must be positive");
  weights.validate();
}

std::vector<LossRecord> train(DecoderParams& params, const std::vector<Scene>& scenes, const TextEmbeddingBank& bank,
                              const TrainConfig& cfg, const TrainObserver& observer) {
  cfg.validate();
  if (scenes.empty()) throw DataError("training needs at least one scene");
  std::vector<MaskTargets> targets;
  for (const auto& s : scenes) {
    s.gt.validate(bank.classes());
    targets.push_back(make_targets(s.gt, s.gt.height / cfg.loss_divisor, s.gt.width / cfg.loss_divisor));
  }

  ParameterList trainable;
  for (Parameter* p : params.parameters())
    if (p->trainable) trainable.push_back(p);
  std::vector<Matrix> velocity;
  for (Parameter* p : trainable) velocity.emplace_back(p->value.rows(), p->value.cols());

  const Real inv_scenes = 1.0 / static_cast<Real>(scenes.size());
  std::vector<LossRecord> trace;
  for (int it = 0; it < cfg.iterations; ++it) {
    params.zero_grad();
    LossRecord rec{it};
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      Tape tape;
      LossTerms terms;
      try {
        const DecoderTrace dt = decoder_forward(tape, params, {scenes[s].clip, scenes[s].sam, bank});
        terms = compute_loss(tape, dt, targets[s], cfg.weights);
      } catch (const NumericError& e) {
        throw TrainingError(std::string("non-finite values in the forward pass: ") + e.what(), it);
      }
      const Real total = terms.total.value()(0, 0);
      if (!std::isfinite(total)) throw TrainingError("loss became non-finite", it);
      tape.backward(terms.total);
      rec.total += total * inv_scenes;
      rec.cls += terms.cls * inv_scenes;
      rec.bce += terms.bce * inv_scenes;
      rec.dice += terms.dice * inv_scenes;
    }
    Real norm2 = 0.0;
    for (Parameter* p : trainable) {
      for (auto& g : p->gradient.data()) {
        g *= inv_scenes;
        norm2 += g * g;
      }
    }
    if (!std::isfinite(norm2)) throw TrainingError("gradient became non-finite", it);
    const Real norm = std::sqrt(norm2);
    const Real clip = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
    for (std::size_t k = 0; k < trainable.size(); ++k) {
      auto v = velocity[k].data();
      auto g = trainable[k]->gradient.data();
      auto w = trainable[k]->value.data();
      for (std::size_t e = 0; e < v.size(); ++e) {
        v[e] = cfg.momentum * v[e] + clip * g[e];
        w[e] -= cfg.learning_rate * v[e];
      }
    }
    trace.push_back(rec);
    if (observer && !observer(rec)) break;
  }
  return trace;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write loss trace to " + path.string());
  out.precision(17);
  out << "iteration,loss,class_loss,bce_loss,dice_loss\n";
  for (const auto& r : trace) out << r.iteration << ',' << r.total << ',' << r.cls << ',' << r.bce << ',' << r.dice << '\n';
  if (!out) throw DataError("failed while writing " + path.string());
}

}  // namespace frozenseg
