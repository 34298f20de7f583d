#pragma once

// Command implementations behind the frozenseg tool. Each command reads its
// inputs from a RunConfig and reports progress on `log`.

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "frozenseg/config.hpp"
#include "frozenseg/dataset.hpp"
#include "frozenseg/metrics.hpp"
#include "frozenseg/pipeline.hpp"

#include "json.hpp"

namespace frozenseg::cli {

/// Writes the configured fixture set and returns the manifest path.
std::filesystem::path gen_fixtures(const RunConfig& cfg, std::ostream& log);

/// Decoder parameters sized for `data`.
std::unique_ptr<DecoderParams> make_model(const DecoderConfig& decoder, const Dataset& data, std::uint64_t seed);

/// Trains on the train split against the seen vocabulary.
std::vector<LossRecord> train_model(DecoderParams& params, const Dataset& data, const TrainConfig& train,
                                    std::ostream* log = nullptr);

/// Trains, then writes the checkpoint and the loss trace.
std::vector<LossRecord> train_command(const RunConfig& cfg, std::ostream& log);

InferenceOptions inference_options(const RunConfig& cfg);

/// Runs every scene of `split`; a null model evaluates proposals alone. A
/// non-empty `proposal_file` replaces each scene's own proposals.
SegQualityReport evaluate(DecoderParams* params, const Dataset& data, const std::string& split,
                          const InferenceOptions& options, const std::string& proposal_file = {});

/// Writes per-scene prediction JSON and optional attention maps.
void infer_command(const RunConfig& cfg, std::ostream& log);

/// Metrics of the checkpoint on the configured split.
nlohmann::json eval_command(const RunConfig& cfg, std::ostream& log);

/// Trains the three decoder variants and evaluates the six module
/// combinations: proposals only, baseline, +mask ensemble, +query injector,
/// +query and feature injectors, and everything.
nlohmann::json ablation_command(const RunConfig& cfg, std::ostream& log);

/// Binary P5 image of a row-major map scaled so its maximum is 255.
void write_pgm(const std::filesystem::path& path, const std::vector<Real>& values, int height, int width);

/// Full command-line entry point. Returns the process exit code: 0 success,
/// 1 usage or configuration error, 2 data error, 3 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace frozenseg::cli
