#include "frozenseg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "frozenseg/errors.hpp"

namespace frozenseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) throw ConfigError("invalid value '" + text + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  return out;
}

std::vector<Scale> parse_scale_list(const std::string& key, const std::string& text) {
  std::vector<Scale> out;
  if (text.empty() || text == "auto") return out;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) out.push_back(parse_scale(trim(item)));
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
  return out;
}

std::string format_real(Real v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string join_ints(const std::vector<int>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join_scales(const std::vector<Scale>& v) {
  if (v.empty()) return "auto";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += std::string(i ? "," : "") + scale_name(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number(std::string key, T RunConfig::*member) {
  return {key, [member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_number<T>(k, v); },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_real(c.*member);
            else
              return std::to_string(c.*member);
          }};
}

template <typename S, typename T>
Field nested(std::string key, S RunConfig::*outer, T S::*member) {
  return {key,
          [outer, member](RunConfig& c, const std::string& k, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>)
              c.*outer.*member = parse_bool(k, v);
            else
              c.*outer.*member = parse_number<T>(k, v);
          },
          [outer, member](const RunConfig& c) -> std::string {
            if constexpr (std::is_same_v<T, bool>)
              return c.*outer.*member ? "true" : "false";
            else if constexpr (std::is_floating_point_v<T>)
              return format_real(c.*outer.*member);
            else
              return std::to_string(c.*outer.*member);
          }};
}

Field text(std::string key, std::string RunConfig::*member) {
  return {key, [member](RunConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(number("seed", &RunConfig::seed));
    f.push_back(number("scenes", &RunConfig::scenes));
    f.push_back(number("test_scenes", &RunConfig::test_scenes));
    f.push_back(number("test_unseen_instances", &RunConfig::test_unseen_instances));
    f.push_back(nested("scene.seed", &RunConfig::scene, &SceneSpec::seed));
    f.push_back(nested("scene.height", &RunConfig::scene, &SceneSpec::height));
    f.push_back(nested("scene.width", &RunConfig::scene, &SceneSpec::width));
    f.push_back(nested("scene.classes", &RunConfig::scene, &SceneSpec::classes));
    f.push_back(nested("scene.seen_classes", &RunConfig::scene, &SceneSpec::seen_classes));
    f.push_back(nested("scene.instances", &RunConfig::scene, &SceneSpec::instances));
    f.push_back(nested("scene.unseen_instances", &RunConfig::scene, &SceneSpec::unseen_instances));
    f.push_back(nested("scene.dim", &RunConfig::scene, &SceneSpec::dim));
    f.push_back(nested("scene.sam_dim", &RunConfig::scene, &SceneSpec::sam_dim));
    f.push_back(nested("scene.noise", &RunConfig::scene, &SceneSpec::noise));
    f.push_back(nested("scene.bank_seed", &RunConfig::scene, &SceneSpec::bank_seed));
    f.push_back(nested("proposal.max_shift", &RunConfig::proposal, &ProposalOptions::max_shift));
    f.push_back(nested("proposal.distractors", &RunConfig::proposal, &ProposalOptions::distractors));
    f.push_back(nested("decoder.layers", &RunConfig::decoder, &DecoderConfig::layers));
    f.push_back(nested("decoder.queries", &RunConfig::decoder, &DecoderConfig::queries));
    f.push_back(nested("decoder.dim", &RunConfig::decoder, &DecoderConfig::dim));
    f.push_back(nested("decoder.heads", &RunConfig::decoder, &DecoderConfig::heads));
    f.push_back(nested("decoder.ffn_dim", &RunConfig::decoder, &DecoderConfig::ffn_dim));
    f.push_back({"decoder.query_inject_layers",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.decoder.query_inject_layers = parse_int_list(k, v);
                 },
                 [](const RunConfig& c) { return join_ints(c.decoder.query_inject_layers); }});
    f.push_back({"decoder.feature_inject_layers",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.decoder.feature_inject_layers = parse_int_list(k, v);
                 },
                 [](const RunConfig& c) { return join_ints(c.decoder.feature_inject_layers); }});
    f.push_back({"decoder.schedule",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.decoder.schedule = parse_scale_list(k, v);
                 },
                 [](const RunConfig& c) { return join_scales(c.decoder.schedule); }});
    f.push_back(nested("decoder.temperature", &RunConfig::decoder, &DecoderConfig::temperature));
    f.push_back(nested("decoder.feature_residual", &RunConfig::decoder, &DecoderConfig::feature_residual));
    f.push_back(nested("train.iterations", &RunConfig::train, &TrainConfig::iterations));
    f.push_back(nested("train.learning_rate", &RunConfig::train, &TrainConfig::learning_rate));
    f.push_back(nested("train.momentum", &RunConfig::train, &TrainConfig::momentum));
    f.push_back(nested("train.clip_norm", &RunConfig::train, &TrainConfig::clip_norm));
    f.push_back(nested("train.loss_divisor", &RunConfig::train, &TrainConfig::loss_divisor));
    f.push_back({"train.class_weight",
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.train.weights.cls = parse_number<Real>(k, v); },
                 [](const RunConfig& c) { return format_real(c.train.weights.cls); }});
    f.push_back({"train.bce_weight",
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.train.weights.bce = parse_number<Real>(k, v); },
                 [](const RunConfig& c) { return format_real(c.train.weights.bce); }});
    f.push_back({"train.dice_weight",
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.train.weights.dice = parse_number<Real>(k, v); },
                 [](const RunConfig& c) { return format_real(c.train.weights.dice); }});
    f.push_back({"train.no_object_weight",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.train.weights.no_object = parse_number<Real>(k, v);
                 },
                 [](const RunConfig& c) { return format_real(c.train.weights.no_object); }});
    f.push_back(nested("ensemble.alpha", &RunConfig::ensemble, &EnsembleConfig::alpha));
    f.push_back(nested("ensemble.beta", &RunConfig::ensemble, &EnsembleConfig::beta));
    f.push_back(nested("ensemble.epsilon", &RunConfig::ensemble, &EnsembleConfig::epsilon));
    f.push_back(nested("ensemble.xi", &RunConfig::ensemble, &EnsembleConfig::xi));
    f.push_back({"ensemble.mask_ensemble",
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.mask_ensemble = parse_bool(k, v); },
                 [](const RunConfig& c) { return std::string(c.mask_ensemble ? "true" : "false"); }});
    f.push_back(nested("panoptic.score_floor", &RunConfig::panoptic, &PanopticOptions::score_floor));
    f.push_back(nested("panoptic.min_area", &RunConfig::panoptic, &PanopticOptions::min_area));
    f.push_back(number("clip_temperature", &RunConfig::clip_temperature));
    f.push_back(text("fixtures", &RunConfig::fixtures));
    f.push_back(text("checkpoint", &RunConfig::checkpoint));
    f.push_back(text("proposals", &RunConfig::proposals));
    f.push_back(text("report", &RunConfig::report));
    f.push_back(text("loss_trace", &RunConfig::loss_trace));
    f.push_back(text("output", &RunConfig::output));
    f.push_back(text("dump_attn", &RunConfig::dump_attn));
    f.push_back(number("dump_top", &RunConfig::dump_top));
    f.push_back(text("split", &RunConfig::split));
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (scenes < 1) throw ConfigError("scenes must be at least 1");
  if (test_scenes < 0) throw ConfigError("test_scenes must be nonnegative");
  if (test_unseen_instances < 0 || test_unseen_instances > scene.instances)
    throw ConfigError("test_unseen_instances must lie in [0, scene.instances]");
  if (dump_top < 0) throw ConfigError("dump_top must be nonnegative");
  if (!(clip_temperature > 0.0)) throw ConfigError("clip_temperature must be positive");
  if (panoptic.min_area < 0) throw ConfigError("panoptic.min_area must be nonnegative");
  if (!(panoptic.score_floor >= 0.0 && panoptic.score_floor <= 1.0))
    throw ConfigError("panoptic.score_floor must lie in [0, 1]");
  if (split != "train" && split != "test" && split != "all") throw ConfigError("split must be train, test or all");
  scene.validate();
  decoder.validate();
  train.validate();
  ensemble.validate();
  if (decoder.queries < scene.instances)
    throw ConfigError("decoder.queries must be at least scene.instances for matching");
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(base, ss.str());
  return base;
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace frozenseg
