#pragma once

// Fixture datasets on disk: a key=value manifest naming per-scene feature
// files ("FZSG"), GT documents (JSON), proposal files ("FZPM") and one shared
// text bank ("FZTB"). All paths in the manifest are relative to its directory.

#include <filesystem>
#include <string>
#include <vector>

#include "frozenseg/config.hpp"
#include "frozenseg/fixtures.hpp"

#include "json.hpp"

namespace frozenseg {

struct DatasetScene {
  std::string name;
  /// "train" or "test".
  std::string split;
  Scene scene;
  BinaryMaskSet proposals;
};

struct Dataset {
  /// Full vocabulary with seen flags from the manifest.
  TextEmbeddingBank bank;
  std::vector<DatasetScene> scenes;

  /// Scenes of one split, or every scene for "all".
  std::vector<const DatasetScene*> split(const std::string& name) const;
  /// Scene objects of one split, copied for training.
  std::vector<Scene> split_scenes(const std::string& name) const;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Generates the configured training and test scenes in memory.
Dataset generate_dataset(const RunConfig& cfg);
/// Writes `data` under `dir` and returns the manifest path.
std::filesystem::path write_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Throws DataError when the manifest or a referenced file is missing or
/// inconsistent, FormatError for malformed binaries.
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json ground_truth_to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

}  // namespace frozenseg
