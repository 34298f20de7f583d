#pragma once

// Flat key=value run configuration shared by every command. Files hold one
// `key = value` pair per line with `#` comments; command-line overrides are
// applied afterwards, so the last assignment of a key wins.

#include <cstdint>
#include <string>
#include <vector>

#include "frozenseg/decoder.hpp"
#include "frozenseg/ensemble.hpp"
#include "frozenseg/fixtures.hpp"
#include "frozenseg/training.hpp"

namespace frozenseg {

struct RunConfig {
  /// Model initialization seed; scene seeds derive from scene.seed.
  std::uint64_t seed = 0;
  /// Training scenes written by gen-fixtures.
  int scenes = 4;
  /// Held-out evaluation scenes written by gen-fixtures.
  int test_scenes = 4;
  /// Instances per test scene drawn from unseen classes.
  int test_unseen_instances = 2;
  SceneSpec scene;
  ProposalOptions proposal;
  DecoderConfig decoder;
  TrainConfig train;
  EnsembleConfig ensemble;
  bool mask_ensemble = true;
  PanopticOptions panoptic;
  Real clip_temperature = 100.0;

  std::string fixtures = "fixtures";
  std::string checkpoint = "model.fzck";
  /// Proposal file applied to every evaluated scene; empty uses each scene's own.
  std::string proposals;
  std::string report;
  std::string loss_trace = "loss.csv";
  std::string output = "out";
  /// Directory for attention-map PGMs; empty disables dumping.
  std::string dump_attn;
  /// Number of most confident queries whose attention is dumped per scene.
  int dump_top = 3;
  /// Scene split used by infer and eval.
  std::string split = "test";

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
};

/// Assigns one key. Throws ConfigError for unknown keys or unparsable values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
/// Applies every assignment in `text` on top of `cfg`.
void apply_config_text(RunConfig& cfg, const std::string& text);
RunConfig load_config(const std::string& path, RunConfig base = {});
/// Every key in a fixed order; parsing the result reproduces `cfg` exactly.
std::string serialize_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace frozenseg
