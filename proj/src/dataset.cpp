#include "frozenseg/dataset.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "frozenseg/ensemble.hpp"
#include "frozenseg/errors.hpp"

namespace frozenseg {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTestSeedOffset = 100000;

struct PyramidFile {
  const char* key;
  FeatureGrid ClipPyramid::*grid;
};

constexpr PyramidFile kPyramidFiles[] = {
    {"clip.full", &ClipPyramid::full},
    {"clip.eighth", &ClipPyramid::eighth},
    {"clip.sixteenth", &ClipPyramid::sixteenth},
    {"clip.thirty_second", &ClipPyramid::thirty_second},
};

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("fixture manifest not found at " + path.string() + " (run gen-fixtures first)");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw DataError("malformed manifest line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

const std::string& lookup(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("manifest lacks key '" + key + "'");
  return it->second;
}

int lookup_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  try {
    return std::stoi(lookup(kv, key));
  } catch (const std::logic_error&) {
    throw DataError("manifest key '" + key + "' is not an integer");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace

std::vector<const DatasetScene*> Dataset::split(const std::string& name) const {
  std::vector<const DatasetScene*> out;
  for (const auto& s : scenes)
    if (name == "all" || s.split == name) out.push_back(&s);
  return out;
}

std::vector<Scene> Dataset::split_scenes(const std::string& name) const {
  std::vector<Scene> out;
  for (const auto* s : split(name)) out.push_back(s->scene);
  return out;
}

Dataset generate_dataset(const RunConfig& cfg) {
  cfg.validate();
  Dataset data;
  auto add = [&](const std::string& split, int index, std::uint64_t seed, int unseen) {
    SceneSpec spec = cfg.scene;
    spec.seed = seed;
    spec.unseen_instances = unseen;
    DatasetScene s;
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03d", split.c_str(), index);
    s.name = name;
    s.split = split;
    s.scene = generate_scene(spec);
    s.proposals = make_fixture_proposals(s.scene.gt, seed * 2 + 1, cfg.proposal);
    data.scenes.push_back(std::move(s));
  };
  for (int i = 0; i < cfg.scenes; ++i) add("train", i, cfg.scene.seed + i, cfg.scene.unseen_instances);
  for (int i = 0; i < cfg.test_scenes; ++i)
    add("test", i, cfg.scene.seed + kTestSeedOffset + i, cfg.test_unseen_instances);
  data.bank = data.scenes.front().scene.bank;
  return data;
}

fs::path write_dataset(const Dataset& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create fixture directory " + dir.string() + ": " + ec.message());
  std::ostringstream m;
  m << "format = frozenseg-fixtures\nversion = 1\n";
  m << "bank = bank.fztb\n";
  save_text_bank(dir / "bank.fztb", data.bank);
  std::string seen;
  for (int c : data.bank.seen_indices()) seen += (seen.empty() ? "" : ",") + std::to_string(c);
  m << "seen = " << seen << "\n";
  m << "scene_count = " << data.scenes.size() << "\n";
  for (std::size_t i = 0; i < data.scenes.size(); ++i) {
    const auto& s = data.scenes[i];
    const std::string p = "scene." + std::to_string(i) + ".";
    m << p << "name = " << s.name << "\n" << p << "split = " << s.split << "\n";
    for (const auto& f : kPyramidFiles) {
      const std::string file = s.name + "." + std::string(f.key).substr(5) + ".fzsg";
      save_feature_file(dir / file, s.scene.clip.*f.grid);
      m << p << f.key << " = " << file << "\n";
    }
    save_feature_file(dir / (s.name + ".sam.fzsg"), s.scene.sam);
    m << p << "sam = " << s.name << ".sam.fzsg\n";
    write_text(dir / (s.name + ".gt.json"), ground_truth_to_json(s.scene.gt).dump() + "\n");
    m << p << "gt = " << s.name << ".gt.json\n";
    save_proposals(dir / (s.name + ".proposals.fzpm"), s.proposals);
    m << p << "proposals = " << s.name << ".proposals.fzpm\n";
  }
  const fs::path manifest = dir / kManifestName;
  write_text(manifest, m.str());
  return manifest;
}

Dataset load_dataset(const fs::path& dir) {
  const auto kv = read_manifest(dir / kManifestName);
  if (lookup(kv, "format") != "frozenseg-fixtures") throw DataError("not a fixture manifest: " + dir.string());
  if (lookup(kv, "version") != "1") throw DataError("unsupported manifest version " + lookup(kv, "version"));
  Dataset data;
  data.bank = load_text_bank(dir / lookup(kv, "bank"));
  data.bank.is_seen.assign(data.bank.classes(), false);
  std::stringstream seen(lookup(kv, "seen"));
  std::string item;
  while (std::getline(seen, item, ',')) {
    int c = -1;
    try {
      c = std::stoi(item);
    } catch (const std::logic_error&) {
    }
    if (c < 0 || c >= data.bank.classes()) throw DataError("manifest seen list has invalid class '" + item + "'");
    data.bank.is_seen[c] = true;
  }
  const int count = lookup_int(kv, "scene_count");
  for (int i = 0; i < count; ++i) {
    const std::string p = "scene." + std::to_string(i) + ".";
    DatasetScene s;
    s.name = lookup(kv, p + "name");
    s.split = lookup(kv, p + "split");
    for (const auto& f : kPyramidFiles) s.scene.clip.*f.grid = load_feature_file(dir / lookup(kv, p + f.key));
    s.scene.sam = load_feature_file(dir / lookup(kv, p + "sam"));
    std::ifstream gt_in(dir / lookup(kv, p + "gt"));
    if (!gt_in) throw DataError("cannot read " + (dir / lookup(kv, p + "gt")).string());
    try {
      s.scene.gt = ground_truth_from_json(nlohmann::json::parse(gt_in));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("invalid GT document for " + s.name + ": " + e.what());
    }
    s.scene.gt.validate(data.bank.classes());
    s.proposals = load_proposals(dir / lookup(kv, p + "proposals"));
    s.scene.bank = data.bank;
    s.scene.spec.height = s.scene.gt.height;
    s.scene.spec.width = s.scene.gt.width;
    s.scene.spec.classes = data.bank.classes();
    s.scene.spec.dim = s.scene.clip.full.channels();
    s.scene.spec.sam_dim = s.scene.sam.channels();
    if (s.scene.clip.full.height != s.scene.gt.height || s.scene.clip.full.width != s.scene.gt.width)
      throw DataError(s.name + ": semantic features do not match the GT size");
    data.scenes.push_back(std::move(s));
  }
  if (data.scenes.empty()) throw DataError("fixture manifest lists no scenes");
  return data;
}

nlohmann::json ground_truth_to_json(const GroundTruth& gt) {
  nlohmann::json j;
  j["height"] = gt.height;
  j["width"] = gt.width;
  j["segments"] = nlohmann::json::array();
  for (int k = 0; k < gt.segment_count(); ++k) j["segments"].push_back({{"id", k}, {"class", gt.segment_class[k]}});
  j["panoptic"] = gt.panoptic;
  return j;
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  gt.height = j.at("height").get<int>();
  gt.width = j.at("width").get<int>();
  gt.panoptic = j.at("panoptic").get<std::vector<int>>();
  const auto& segs = j.at("segments");
  gt.segment_class.assign(segs.size(), 0);
  for (const auto& s : segs) {
    const int id = s.at("id").get<int>();
    if (id < 0 || static_cast<std::size_t>(id) >= segs.size()) throw DataError("GT segment ids must be 0..K-1");
    gt.segment_class[id] = s.at("class").get<int>();
  }
  if (gt.panoptic.size() != static_cast<std::size_t>(gt.height) * gt.width)
    throw DataError("GT panoptic map size does not match height x width");
  return gt;
}

}  // namespace frozenseg
