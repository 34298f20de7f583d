#include "frozenseg/commands.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "frozenseg/errors.hpp"

namespace frozenseg::cli {

namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw DataError("cannot write " + path.string());
}

nlohmann::json prediction_to_json(const SceneResult& r) {
  nlohmann::json j;
  j["height"] = r.semantic.height;
  j["width"] = r.semantic.width;
  j["semantic"] = r.semantic.labels;
  j["panoptic"]["segment_ids"] = r.panoptic.segment_ids;
  j["panoptic"]["segments"] = nlohmann::json::array();
  for (std::size_t s = 0; s < r.panoptic.segments.size(); ++s) {
    j["panoptic"]["segments"].push_back(
        {{"id", s}, {"class", r.panoptic.segments[s].class_id}, {"score", r.panoptic.segments[s].score}});
  }
  return j;
}

/// Query indices ordered by their best non-empty class probability.
std::vector<int> most_confident(const ClassScoreSet& classes, int count) {
  std::vector<std::pair<Real, int>> scored;
  for (int i = 0; i < classes.count(); ++i) {
    Real best = 0.0;
    for (int c = 0; c < classes.classes(); ++c) best = std::max(best, classes.probabilities(i, c));
    scored.push_back({best, i});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> out;
  for (int k = 0; k < std::min<int>(count, static_cast<int>(scored.size())); ++k) out.push_back(scored[k].second);
  return out;
}

std::unique_ptr<DecoderParams> load_model(const RunConfig& cfg, const Dataset& data) {
  auto params = make_model(cfg.decoder, data, cfg.seed);
  load_checkpoint(cfg.checkpoint, *params);
  return params;
}

}  // namespace

fs::path gen_fixtures(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = generate_dataset(cfg);
  const fs::path manifest = write_dataset(data, cfg.fixtures);
  log << "wrote " << data.scenes.size() << " scenes to " << manifest.string() << "\n";
  return manifest;
}

std::unique_ptr<DecoderParams> make_model(const DecoderConfig& decoder, const Dataset& data, std::uint64_t seed) {
  const auto& first = data.scenes.front().scene;
  return std::make_unique<DecoderParams>(decoder, first.clip.full.channels(), first.sam.channels(), data.bank.dim(),
                                         seed);
}

std::vector<LossRecord> train_model(DecoderParams& params, const Dataset& data, const TrainConfig& train,
                                    std::ostream* log) {
  const std::vector<Scene> scenes = data.split_scenes("train");
  if (scenes.empty()) throw DataError("fixture set has no training scenes");
  const TextEmbeddingBank vocabulary = data.bank.seen_subset();
  return frozenseg::train(params, scenes, vocabulary, train, [&](const LossRecord& r) {
    if (log != nullptr && (r.iteration % 100 == 0 || r.iteration + 1 == train.iterations))
      *log << "iteration " << r.iteration << " loss " << r.total << "\n";
    return true;
  });
}

std::vector<LossRecord> train_command(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = load_dataset(cfg.fixtures);
  auto params = make_model(cfg.decoder, data, cfg.seed);
  const auto trace = train_model(*params, data, cfg.train, &log);
  if (fs::path(cfg.checkpoint).has_parent_path()) fs::create_directories(fs::path(cfg.checkpoint).parent_path());
  save_checkpoint(cfg.checkpoint, *params);
  if (!cfg.loss_trace.empty()) write_loss_trace(cfg.loss_trace, trace);
  log << "saved checkpoint to " << cfg.checkpoint << "\n";
  return trace;
}

InferenceOptions inference_options(const RunConfig& cfg) {
  InferenceOptions o;
  o.ensemble = cfg.ensemble;
  o.mask_ensemble = cfg.mask_ensemble;
  o.panoptic = cfg.panoptic;
  o.clip_temperature = cfg.clip_temperature;
  return o;
}

SegQualityReport evaluate(DecoderParams* params, const Dataset& data, const std::string& split,
                          const InferenceOptions& options, const std::string& proposal_file) {
  const auto scenes = data.split(split);
  if (scenes.empty()) throw DataError("fixture set has no scenes in split '" + split + "'");
  std::optional<BinaryMaskSet> shared;
  if (!proposal_file.empty()) shared = load_proposals(proposal_file);
  // Scenes run in parallel; results are reduced in scene order.
  const int count = static_cast<int>(scenes.size());
  std::vector<std::optional<SceneResult>> results(count);
  std::vector<std::exception_ptr> errors(count);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    try {
      const auto* s = scenes[i];
      const BinaryMaskSet& proposals = shared ? *shared : s->proposals;
      results[i] = params != nullptr
                       ? infer_scene(*params, s->scene.clip, s->scene.sam, data.bank, &proposals, options)
                       : infer_proposals_only(s->scene.clip, data.bank, proposals, options);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  Evaluator ev(data.bank.classes(), data.bank.is_seen);
  for (int i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    ev.add(results[i]->semantic, results[i]->panoptic, results[i]->proposals, scenes[i]->scene.gt);
  }
  return ev.report();
}

void write_pgm(const fs::path& path, const std::vector<Real>& values, int height, int width) {
  if (values.size() != static_cast<std::size_t>(height) * width) throw DimensionError("write_pgm: size mismatch");
  const Real peak = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << width << " " << height << "\n255\n";
  for (Real v : values) {
    const Real scaled = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) * 255.0 : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(scaled + 0.5)));
  }
  if (!out) throw DataError("cannot write " + path.string());
}

void infer_command(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = load_dataset(cfg.fixtures);
  auto params = load_model(cfg, data);
  const InferenceOptions options = inference_options(cfg);
  std::optional<BinaryMaskSet> shared;
  if (!cfg.proposals.empty()) shared = load_proposals(cfg.proposals);
  fs::create_directories(cfg.output);
  if (!cfg.dump_attn.empty()) fs::create_directories(cfg.dump_attn);
  const auto scenes = data.split(cfg.split);
  if (scenes.empty()) throw DataError("fixture set has no scenes in split '" + cfg.split + "'");
  for (const auto* s : scenes) {
    const BinaryMaskSet& proposals = shared ? *shared : s->proposals;
    const SceneResult r = infer_scene(*params, s->scene.clip, s->scene.sam, data.bank, &proposals, options);
    write_json(fs::path(cfg.output) / (s->name + ".pred.json"), prediction_to_json(r));
    if (!cfg.dump_attn.empty()) {
      const Matrix& attn = r.decoder.last_attention;
      for (int q : most_confident(r.classes, cfg.dump_top)) {
        std::vector<Real> row(attn.row(q).begin(), attn.row(q).end());
        write_pgm(fs::path(cfg.dump_attn) / (s->name + ".query" + std::to_string(q) + ".pgm"), row,
                  r.decoder.last_attention_height, r.decoder.last_attention_width);
      }
    }
  }
  log << "wrote predictions for " << scenes.size() << " scenes to " << cfg.output << "\n";
}

nlohmann::json eval_command(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = load_dataset(cfg.fixtures);
  auto params = load_model(cfg, data);
  const SegQualityReport report = evaluate(params.get(), data, cfg.split, inference_options(cfg), cfg.proposals);
  nlohmann::json j = report_to_json(report, data.bank.names);
  validate_report_json(j);
  if (!cfg.report.empty()) {
    write_json(cfg.report, j);
    log << "wrote report to " << cfg.report << "\n";
  }
  return j;
}

nlohmann::json ablation_command(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = load_dataset(cfg.fixtures);

  struct Variant {
    bool query;
    bool feature;
    std::unique_ptr<DecoderParams> params;
  };
  std::vector<Variant> variants;
  for (auto [query, feature] : {std::pair{false, false}, std::pair{true, false}, std::pair{true, true}}) {
    DecoderConfig dc = cfg.decoder;
    if (!query) dc.query_inject_layers.clear();
    if (!feature) dc.feature_inject_layers.clear();
    auto params = make_model(dc, data, cfg.seed);
    log << "training variant query_injector=" << query << " feature_injector=" << feature << "\n";
    train_model(*params, data, cfg.train, &log);
    variants.push_back({query, feature, std::move(params)});
  }

  struct Row {
    const char* name;
    int variant;  // -1: proposals only
    bool mask_ensemble;
  };
  const Row rows[] = {{"only SAM", -1, false}, {"baseline", 0, false}, {"+mask ensemble", 0, true},
                      {"+query injector", 1, false}, {"+query+feature injector", 2, false},
                      {"full", 2, true}};
  nlohmann::json out;
  out["rows"] = nlohmann::json::array();
  int index = 1;
  for (const auto& row : rows) {
    InferenceOptions options = inference_options(cfg);
    options.mask_ensemble = row.mask_ensemble;
    DecoderParams* params = row.variant >= 0 ? variants[row.variant].params.get() : nullptr;
    const SegQualityReport report = evaluate(params, data, cfg.split, options, cfg.proposals);
    nlohmann::json metrics = report_to_json(report, data.bank.names);
    validate_report_json(metrics);
    out["rows"].push_back({{"row", index++},
                           {"name", row.name},
                           {"decoder", params != nullptr},
                           {"query_injector", params != nullptr && variants[row.variant].query},
                           {"feature_injector", params != nullptr && variants[row.variant].feature},
                           {"mask_ensemble", row.mask_ensemble},
                           {"metrics", metrics}});
  }
  if (!cfg.report.empty()) {
    write_json(cfg.report, out);
    log << "wrote ablation report to " << cfg.report << "\n";
  }
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Open-vocabulary segmentation on frozen-feature fixtures", "frozenseg"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;
  std::optional<int> scenes, iterations;
  std::optional<std::string> fixtures, checkpoint, proposals, dump_attn, report, output, split;
  std::optional<Real> alpha, beta, epsilon, xi;
  bool no_query = false, no_feature = false, no_injectors = false, no_mask_ensemble = false, ablation = false, print_config = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--set", assignments, "Override one configuration key (key=value)");
    sub->add_option("--seed", seed, "Model initialization seed");
    sub->add_option("--scenes", scenes, "Number of training scenes");
    sub->add_option("--fixtures", fixtures, "Fixture directory");
    sub->add_option("--checkpoint", checkpoint, "Checkpoint path");
    sub->add_flag("--print-config", print_config, "Print the resolved configuration before running");
  };
  auto inference = [&](CLI::App* sub) {
    sub->add_option("--proposals", proposals, "Proposal file used for every scene");
    sub->add_option("--alpha", alpha, "Class-ensemble weight for seen classes");
    sub->add_option("--beta", beta, "Class-ensemble weight for unseen classes");
    sub->add_option("--epsilon", epsilon, "Mask-ensemble weight for unseen classes");
    sub->add_option("--xi", xi, "Proposal score threshold");
    sub->add_flag("--no-query-injector", no_query, "Disable the query injector");
    sub->add_flag("--no-feature-injector", no_feature, "Disable the feature injector");
    sub->add_flag("--no-injectors", no_injectors, "Disable both injectors (baseline decoder)");
    sub->add_flag("--no-mask-ensemble", no_mask_ensemble, "Disable the mask ensemble");
    sub->add_option("--split", split, "Scene split: train, test or all");
  };

  CLI::App* gen = app.add_subcommand("gen-fixtures", "Write synthetic scenes, features, GT and proposals");
  common(gen);
  CLI::App* trn = app.add_subcommand("train", "Train the decoder and injectors; write checkpoint and loss trace");
  common(trn);
  trn->add_option("--iterations", iterations, "Training iterations");
  trn->add_flag("--no-query-injector", no_query, "Disable the query injector");
  trn->add_flag("--no-feature-injector", no_feature, "Disable the feature injector");
  trn->add_flag("--no-injectors", no_injectors, "Disable both injectors (baseline decoder)");
  CLI::App* inf = app.add_subcommand("infer", "Predict semantic and panoptic maps");
  common(inf);
  inference(inf);
  inf->add_option("--output", output, "Prediction directory");
  inf->add_option("--dump-attn", dump_attn, "Directory for attention-map PGMs");
  CLI::App* evl = app.add_subcommand("eval", "Evaluate a checkpoint and write a JSON report");
  common(evl);
  inference(evl);
  evl->add_option("--report", report, "Report path");
  evl->add_option("--iterations", iterations, "Training iterations per variant (with --ablation)");
  evl->add_flag("--ablation", ablation, "Train and evaluate the six module combinations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path, cfg);
    for (const auto& a : assignments) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + a + "'");
      set_config_value(cfg, a.substr(0, eq), a.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (scenes) cfg.scenes = *scenes;
    if (iterations) cfg.train.iterations = *iterations;
    if (fixtures) cfg.fixtures = *fixtures;
    if (checkpoint) cfg.checkpoint = *checkpoint;
    if (proposals) cfg.proposals = *proposals;
    if (dump_attn) cfg.dump_attn = *dump_attn;
    if (report) cfg.report = *report;
    if (output) cfg.output = *output;
    if (split) cfg.split = *split;
    if (alpha) cfg.ensemble.alpha = *alpha;
    if (beta) cfg.ensemble.beta = *beta;
    if (epsilon) cfg.ensemble.epsilon = *epsilon;
    if (xi) cfg.ensemble.xi = *xi;
    if (no_query || no_injectors) cfg.decoder.query_inject_layers.clear();
    if (no_feature || no_injectors) cfg.decoder.feature_inject_layers.clear();
    if (no_mask_ensemble) cfg.mask_ensemble = false;
    cfg.validate();
  } catch (const Error& e) {
    err << "configuration error: " << e.what() << "\n";
    return 1;
  }
  if (print_config) out << serialize_config(cfg);

  try {
    if (gen->parsed()) {
      gen_fixtures(cfg, err);
    } else if (trn->parsed()) {
      const auto trace = train_command(cfg, err);
      if (!trace.empty()) out << "final loss " << trace.back().total << "\n";
    } else if (inf->parsed()) {
      infer_command(cfg, err);
    } else if (evl->parsed()) {
      out << (ablation ? ablation_command(cfg, err) : eval_command(cfg, err)).dump(2) << "\n";
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const TrainingError& e) {
    err << "training failure: " << e.what() << "\n";
    return 3;
  } catch (const GraphError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace frozenseg::cli
