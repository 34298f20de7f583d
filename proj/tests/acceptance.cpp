// Acceptance harness: one PASS/FAIL line per criterion, with the measured
// values and the tolerances they are held to. Exit status is the number of
// failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "frozenseg/commands.hpp"
#include "frozenseg/errors.hpp"
#include "frozenseg/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace frozenseg;
using frozenseg::testing::gradient_violation;
using frozenseg::testing::random_matrix;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& why) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << why << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

Real seconds_since(Clock::time_point start) {
  return std::chrono::duration<Real>(Clock::now() - start).count();
}

// Class and mask ensembles against hand-computed values and their identities.
Verdict equation_fidelity() {
  Verdict v;
  const auto start = Clock::now();
  Real worst = 0.0;

  EnsembleConfig cfg;
  cfg.beta = 0.5;
  const ClassScoreSet pd{Matrix{{0.64, 0.36, 0.0}}}, pcl{Matrix{{0.25, 0.75, 0.0}}};
  const Real geo = class_ensemble(pd, pcl, cfg, {false, true}, false).probabilities(0, 0);
  worst = std::max(worst, std::abs(geo - 0.4));

  const SemanticScoreMap r{1, 1, Matrix{{0.5}, {0.5}}}, rh{1, 1, Matrix{{0.9}, {0.9}}};
  const SemanticScoreMap blended = mask_ensemble(r, rh, 0.2, {true, false});
  worst = std::max(worst, std::abs(blended.scores(1, 0) - 0.58));
  v.require(worst <= 1e-12, "hand values off by more than 1e-12");

  bool identities = blended.scores(0, 0) == r.scores(0, 0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<Real> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const SemanticScoreMap a{4, 4, random_matrix(5, 16, rng, 0, 3)}, b{4, 4, random_matrix(5, 16, rng, 0, 3)};
    const std::vector<bool> seen{true, false, true, false, false};
    identities = identities && mask_ensemble(a, b, 0.0, seen).scores == a.scores;
    const SemanticScoreMap m = mask_ensemble(a, b, u(rng), seen);
    for (int c : {0, 2})
      for (std::size_t p = 0; p < 16; ++p) identities = identities && m.scores(c, p) == a.scores(c, p);

    EnsembleConfig zero;
    zero.alpha = 0.0;
    const ClassScoreSet d{oracle::random_probabilities(3, 6, rng)}, c{oracle::random_probabilities(3, 6, rng)};
    const ClassScoreSet e = class_ensemble(d, c, zero, {true, true, true, false, false}, false);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) identities = identities && e.probabilities(i, j) == d.probabilities(i, j);
  }
  v.require(identities, "zero-weight or seen-class identity not bitwise");
  const Real elapsed = seconds_since(start);
  v.require(elapsed < 1.0, "runtime over 1 s");
  v.detail << "max |err| " << worst << " (tol 1e-12), eps=0 and seen-class identities bitwise over 200 cases, "
           << elapsed << " s (limit 1 s)";
  return v;
}

// Each operation against an independent brute-force reference.
Verdict oracle_equivalence() {
  Verdict v;
  const auto start = Clock::now();
  constexpr int kInstances = 250;
  std::mt19937_64 rng(20);
  std::uniform_int_distribution<int> level(0, 4);
  std::bernoulli_distribution coin(0.5);
  int pool_ok = 0, agg_ok = 0, pan_ok = 0, iou_ok = 0, pq_ok = 0, rec_ok = 0, hung_ok = 0;
  std::int64_t pq_matches = 0, recalled = 0;

  for (int t = 0; t < kInstances; ++t) {
    FeatureGrid f(8, 8, 3, Scale::eighth);
    f.tokens = random_matrix(64, 3, rng, -5, 5);
    const MaskLogitSet m{8, 8, Scale::eighth, random_matrix(4, 64, rng, -3, t % 5 == 0 ? -0.1 : 3)};
    pool_ok += max_abs_diff(mask_pool(m, f), oracle::mask_pool(m.logits, f)) <= 1e-9;

    const ClassScoreSet p{oracle::random_probabilities(5, 5, rng)};
    const MaskLogitSet ml{8, 8, Scale::eighth, random_matrix(5, 64, rng, -6, 6)};
    agg_ok += max_abs_diff(semantic_aggregate(p, ml).scores, oracle::semantic_aggregate(p.probabilities, ml.logits)) <= 1e-9;

    const ClassScoreSet pc{oracle::random_probabilities(6, 4, rng, coin(rng))};
    Matrix probs(6, 64);
    for (auto& x : probs.data()) x = level(rng) / 4.0;
    const PanopticOptions opt{0.25, t % 4};
    pan_ok += panoptic_decode(pc, probs, 8, 8, opt) ==
              oracle::panoptic_decode(pc.probabilities, probs, 8, 8, opt.score_floor, opt.min_area);

    const PanopticMap gt = oracle::random_panoptic(8, 8, 1 + t % 5, 4, rng);
    const PanopticMap pred = oracle::perturb_panoptic(gt, 0.05 * (t % 6), 4, rng);
    const IoUResult a = miou(pred.semantic(), gt.semantic(), 4), b = oracle::miou(pred.semantic(), gt.semantic(), 4);
    bool same = a.present == b.present && std::abs(a.miou - b.miou) <= 1e-9 && std::abs(a.fwiou - b.fwiou) <= 1e-9;
    for (int c = 0; c < 4; ++c) same = same && std::abs(a.per_class[c] - b.per_class[c]) <= 1e-9;
    iou_ok += same;

    const auto q = panoptic_quality(pred, gt), qo = oracle::panoptic_quality(pred, gt);
    pq_ok += q.true_positives == qo.true_positives && q.false_positives == qo.false_positives &&
             q.false_negatives == qo.false_negatives && std::abs(q.pq - qo.pq) <= 1e-9 &&
             std::abs(q.sq - qo.sq) <= 1e-9 && std::abs(q.rq - qo.rq) <= 1e-9;
    pq_matches += q.true_positives;

    const GroundTruth g = oracle::ground_truth_from(gt);
    const std::vector<bool> seen{true, false, true, false};
    BinaryMaskSet props{8, 8, Matrix(t % 7, 64)};
    const Matrix inst = g.instance_masks();
    for (int j = 0; j < props.count(); ++j)
      for (int px = 0; px < 64; ++px) {
        const Real base = inst(j % inst.rows(), px);
        props.masks(j, px) = coin(rng) && coin(rng) ? 1.0 - base : base;
      }
    const RecallReport rr = mask_recall(props, g, seen);
    const oracle::RecallCounts rc = oracle::mask_recall(props, g, seen);
    bool rec_same = rr.seen_total == rc.seen_total && rr.unseen_total == rc.unseen_total;
    for (int k = 0; k < 3; ++k) {
      rec_same = rec_same && std::llround(rr.seen[k] * rc.seen_total) == rc.seen[k] &&
                 std::llround(rr.unseen[k] * rc.unseen_total) == rc.unseen[k];
      recalled += rc.seen[k] + rc.unseen[k];
    }
    rec_ok += rec_same;

    const std::size_t nq = 1 + t % 6, nt = 1 + (t / 6) % nq;
    const ClassScoreSet hp{oracle::random_probabilities(nq, 4, rng)};
    const MaskLogitSet hm{4, 4, Scale::full, random_matrix(nq, 16, rng, -4, 4)};
    MaskTargets targets{4, 4, random_matrix(nt, 16, rng, 0, 1), {}};
    for (std::size_t k = 0; k < nt; ++k) targets.classes.push_back(static_cast<int>(k % 3));
    const LossWeights w;
    const MatchResult mr = hungarian_match(hp, hm, targets, w);
    const Matrix cost = oracle::match_cost(hp.probabilities, hm.logits, targets.masks, targets.classes, w.cls, w.bce, w.dice);
    Real chosen = 0.0;
    std::vector<int> hits(nt, 0);
    for (std::size_t i = 0; i < nq; ++i)
      if (mr.assignment[i] >= 0) chosen += cost(i, mr.assignment[i]), ++hits[mr.assignment[i]];
    const Real best = oracle::assignment_cost(cost);
    hung_ok += hits == std::vector<int>(nt, 1) && std::abs(chosen - best) <= 1e-9 && std::abs(mr.cost - best) <= 1e-9;
  }

  const std::pair<const char*, int> rows[] = {{"mask_pool", pool_ok},         {"semantic_aggregate", agg_ok},
                                              {"panoptic_decode", pan_ok},    {"miou", iou_ok},
                                              {"panoptic_quality", pq_ok},    {"mask_recall", rec_ok},
                                              {"hungarian_match", hung_ok}};
  for (const auto& [name, ok] : rows) {
    v.detail << name << " " << ok << "/" << kInstances << ", ";
    v.require(ok == kInstances, std::string(name) + " disagrees with its oracle");
  }
  v.require(pq_matches > kInstances, "too few panoptic matches to exercise the metric");
  const Real elapsed = seconds_since(start);
  v.require(elapsed < 60.0, "runtime over 60 s");
  v.detail << "(exact counts, reals within 1e-9; " << pq_matches << " PQ matches, " << recalled
           << " recall hits), " << elapsed << " s (limit 60 s)";
  return v;
}

// Finite differences on every decoder and injector parameter.
Verdict gradient_checks() {
  Verdict v;
  const auto start = Clock::now();
  SceneSpec spec;
  spec.dim = 8;
  spec.sam_dim = 8;
  spec.seed = 3;
  const Scene scene = generate_scene(spec);
  DecoderConfig cfg;
  cfg.layers = 2;
  cfg.queries = 4;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 16;
  cfg.query_inject_layers = {2};
  cfg.feature_inject_layers = {1};
  DecoderParams params(cfg, spec.dim, spec.sam_dim, spec.dim, 5);
  const MaskTargets targets = make_targets(scene.gt, 16, 16);
  const LossWeights weights;

  auto loss_value = [&](const Parameter&) {
    Tape tape;
    const DecoderTrace trace = decoder_forward(tape, params, {scene.clip, scene.sam, scene.bank});
    return compute_loss(tape, trace, targets, weights).total.value()(0, 0);
  };

  params.zero_grad();
  {
    Tape tape;
    const DecoderTrace trace = decoder_forward(tape, params, {scene.clip, scene.sam, scene.bank});
    tape.backward(compute_loss(tape, trace, targets, weights).total);
  }
  ParameterList injectors = params.injector_parameters();
  Real worst = 0.0;
  std::string worst_name;
  std::size_t elements = 0, tensors = 0, silent = 0;
  for (Parameter* p : params.parameters()) {
    if (!p->trainable) continue;
    const Matrix numeric = finite_difference_gradient(loss_value, *p, 1e-5);
    const Real violation = gradient_violation(p->gradient, numeric);
    if (violation > worst) worst = violation, worst_name = p->name;
    elements += p->value.size();
    ++tensors;
    Real mag = 0.0;
    for (Real g : p->gradient.data()) mag = std::max(mag, std::abs(g));
    if (mag == 0.0) {
      ++silent;
      if (std::find(injectors.begin(), injectors.end(), p) != injectors.end())
        v.require(false, "injector parameter " + p->name + " receives no gradient");
    }
  }
  v.require(worst <= 1.0, "gradient of " + worst_name + " disagrees with finite differences");
  const Real elapsed = seconds_since(start);
  v.require(elapsed < 120.0, "runtime over 120 s");
  v.detail << tensors << " tensors / " << elements << " scalars (L=2, N=4, D=8), worst |a-n| / (1e-3 max(|a|,|n|) + 1e-7) = "
           << worst << " at " << worst_name << " (pass <= 1), " << silent << " tensors with zero gradient, "
           << elapsed << " s (limit 120 s)";
  return v;
}

struct Checkpoint {
  int iteration;
  Real miou;
  Real pq;
};

// Default fixture set: train and evaluate on the training scenes.
Verdict end_to_end_overfit() {
  Verdict v;
  const auto start = Clock::now();
  RunConfig cfg;
  const Dataset data = generate_dataset(cfg);
  const InferenceOptions options = cli::inference_options(cfg);
  constexpr int kEvery = 50;

  auto run = [&](int iterations, std::vector<Checkpoint>& checks) {
    auto params = cli::make_model(cfg.decoder, data, cfg.seed);
    TrainConfig tc = cfg.train;
    tc.iterations = iterations;
    const std::vector<Scene> scenes = data.split_scenes("train");
    return train(*params, scenes, data.bank.seen_subset(), tc, [&](const LossRecord& r) {
      if ((r.iteration + 1) % kEvery == 0) {
        const SegQualityReport q = cli::evaluate(params.get(), data, "train", options);
        checks.push_back({r.iteration + 1, q.iou.miou, q.panoptic.pq});
      }
      return true;
    });
  };

  std::vector<Checkpoint> checks;
  const auto trace = run(cfg.train.iterations, checks);
  const Checkpoint* reached = nullptr;
  for (const auto& c : checks)
    if (c.miou >= 0.9 && c.pq >= 0.7) {
      reached = &c;
      break;
    }
  v.require(reached != nullptr, "targets not reached within " + std::to_string(cfg.train.iterations) + " iterations");
  const Real first_elapsed = seconds_since(start);

  bool deterministic = false;
  if (reached != nullptr) {
    std::vector<Checkpoint> again;
    const auto trace2 = run(reached->iteration, again);
    deterministic = again.back().miou == reached->miou && again.back().pq == reached->pq;
    for (std::size_t i = 0; i < trace2.size(); ++i) deterministic = deterministic && trace2[i].total == trace[i].total;
    v.detail << "first reached at iteration " << reached->iteration << " (mIoU " << reached->miou << ", PQ "
             << reached->pq << "); ";
  }
  v.require(deterministic, "rerun with the same seed differs");
  const Real elapsed = seconds_since(start);
  v.require(first_elapsed < 900.0, "runtime over 15 min");
  v.detail << "after " << checks.back().iteration << " iterations mIoU " << checks.back().miou << ", PQ "
           << checks.back().pq << " (targets mIoU >= 0.9, PQ >= 0.7 within 2000), rerun bit-identical: "
           << (deterministic ? "yes" : "no") << ", " << first_elapsed << " s training run (limit 900 s), "
           << elapsed << " s with rerun";
  return v;
}

Real unseen_miou(const SegQualityReport& r, const TextEmbeddingBank& bank) {
  Real sum = 0.0;
  int n = 0;
  for (int c = 0; c < bank.classes(); ++c)
    if (!bank.is_seen[c] && r.iou.present[c]) sum += r.iou.per_class[c], ++n;
  return n > 0 ? sum / n : 0.0;
}

// Unseen-class behaviour of the mask ensemble and of the injectors.
Verdict directional() {
  Verdict v;
  const auto start = Clock::now();
  constexpr int kSeeds = 5, kIterations = 300;
  Real rec_off = 0, rec_on = 0, miou_off = 0, miou_on = 0, rec_base = 0, rec_full = 0;
  std::ostringstream per_seed;
  for (int seed = 0; seed < kSeeds; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.scene.seed = 1000 * seed;
    cfg.scene.bank_seed = seed;
    cfg.train.iterations = kIterations;
    const Dataset data = generate_dataset(cfg);
    auto full = cli::make_model(cfg.decoder, data, seed);
    cli::train_model(*full, data, cfg.train);
    DecoderConfig bare = cfg.decoder;
    bare.query_inject_layers.clear();
    bare.feature_inject_layers.clear();
    auto base = cli::make_model(bare, data, seed);
    cli::train_model(*base, data, cfg.train);

    const InferenceOptions on = cli::inference_options(cfg);
    InferenceOptions off = on;
    off.ensemble.epsilon = 0.0;
    const SegQualityReport r_on = cli::evaluate(full.get(), data, "test", on);
    const SegQualityReport r_off = cli::evaluate(full.get(), data, "test", off);
    const SegQualityReport r_base = cli::evaluate(base.get(), data, "test", off);
    rec_on += r_on.recall.unseen[0] / kSeeds;
    rec_off += r_off.recall.unseen[0] / kSeeds;
    miou_on += unseen_miou(r_on, data.bank) / kSeeds;
    miou_off += unseen_miou(r_off, data.bank) / kSeeds;
    rec_full += r_off.recall.unseen[0] / kSeeds;
    rec_base += r_base.recall.unseen[0] / kSeeds;
    per_seed << " seed " << seed << ": recall " << r_off.recall.unseen[0] << "->" << r_on.recall.unseen[0]
             << ", mIoU " << unseen_miou(r_off, data.bank) << "->" << unseen_miou(r_on, data.bank)
             << ", injectors " << r_base.recall.unseen[0] << "->" << r_off.recall.unseen[0] << ";";
  }
  v.require(rec_on > rec_off, "(a) ensemble does not raise unseen recall@0.5");
  v.require(miou_on > miou_off, "(a) ensemble does not raise unseen mIoU");
  v.require(rec_full >= rec_base, "(b) injectors lower unseen recall@0.5");
  v.detail << "means over " << kSeeds << " seeds, " << kIterations << " iterations each: (a) unseen recall@0.5 "
           << rec_off << " -> " << rec_on << ", unseen mIoU " << miou_off << " -> " << miou_on
           << " (must strictly increase); (b) unseen recall@0.5 without injectors " << rec_base << ", with "
           << rec_full << " (must not decrease);" << per_seed.str() << " " << seconds_since(start) << " s";
  return v;
}

// Six-row module matrix written as JSON.
Verdict ablation_report() {
  Verdict v;
  const auto start = Clock::now();
  const auto dir = std::filesystem::temp_directory_path() / "frozenseg_acceptance_ablation";
  std::filesystem::remove_all(dir);
  RunConfig cfg;
  cfg.fixtures = (dir / "fixtures").string();
  cfg.report = (dir / "ablation.json").string();
  cfg.train.iterations = 300;
  std::ostringstream log;
  try {
    cli::gen_fixtures(cfg, log);
    const nlohmann::json j = cli::ablation_command(cfg, log);
    const nlohmann::json& rows = j.at("rows");
    v.require(rows.size() == 6, "expected 6 rows");
    const char* names[] = {"only SAM", "baseline", "+mask ensemble", "+query injector", "+query+feature injector", "full"};
    const bool query[] = {false, false, false, true, true, true};
    const bool feature[] = {false, false, false, false, true, true};
    const bool ensemble[] = {false, false, true, false, false, true};
    for (std::size_t i = 0; i < rows.size() && i < 6; ++i) {
      const auto& r = rows[i];
      v.require(r.at("name") == names[i] && r.at("query_injector") == query[i] &&
                    r.at("feature_injector") == feature[i] && r.at("mask_ensemble") == ensemble[i],
                std::string("row ") + names[i] + " has the wrong configuration");
      validate_report_json(r.at("metrics"));
      v.detail << r.at("name").get<std::string>() << ": PQ " << r["metrics"]["pq"].get<Real>() << " mIoU "
               << r["metrics"]["miou"].get<Real>() << "; ";
    }
    v.require(std::filesystem::exists(cfg.report), "report file missing");
  } catch (const std::exception& e) {
    v.require(false, e.what());
  }
  v.detail << seconds_since(start) << " s";
  return v;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"equation fidelity", equation_fidelity}, {"oracle equivalence", oracle_equivalence},
      {"gradient checks", gradient_checks},     {"end-to-end overfit", end_to_end_overfit},
      {"directional unseen-class gains", directional}, {"ablation matrix", ablation_report}};
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.require(false, e.what());
    }
    failures += !v.pass;
    std::printf("%s  %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures;
}
