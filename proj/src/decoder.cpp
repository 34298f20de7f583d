#include "frozenseg/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "binary_io.hpp"
#include "frozenseg/errors.hpp"

namespace frozenseg {

std::vector<Scale> DecoderConfig::resolved_schedule() const {
  if (!schedule.empty()) return schedule;
  static constexpr Scale kRoundRobin[] = {Scale::thirty_second, Scale::sixteenth, Scale::eighth};
  std::vector<Scale> s;
  for (int l = 0; l < layers; ++l) s.push_back(kRoundRobin[l % 3]);
  return s;
}

bool DecoderConfig::query_inject_at(int layer) const {
  return std::find(query_inject_layers.begin(), query_inject_layers.end(), layer) != query_inject_layers.end();
}

bool DecoderConfig::feature_inject_at(int layer) const {
  return std::find(feature_inject_layers.begin(), feature_inject_layers.end(), layer) !=
         feature_inject_layers.end();
}

void DecoderConfig::validate() const {
  if (layers < 1) throw ConfigError("decoder needs at least one layer");
  if (queries < 1) throw ConfigError("decoder needs at least one query");
  if (dim < 1 || heads < 1 || dim % heads != 0) throw ConfigError("decoder dim must be divisible by head count");
  if (ffn_dim < 1) throw ConfigError("feed-forward width must be positive");
  if (!(temperature > 0.0)) throw ConfigError("classifier temperature must be positive");
  if (!schedule.empty() && static_cast<int>(schedule.size()) != layers) {
    throw ConfigError("scale schedule has " + std::to_string(schedule.size()) + " entries for " +
                      std::to_string(layers) + " layers");
  }
  const auto sched = resolved_schedule();
  for (Scale s : sched)
    if (s == Scale::full) throw ConfigError("decoder layers cannot attend full-resolution features");
  for (int l : query_inject_layers)
    if (l < 1 || l > layers) throw ConfigError("query-inject layer " + std::to_string(l) + " out of range");
  for (int l : feature_inject_layers) {
    if (l < 1 || l > layers) throw ConfigError("feature-inject layer " + std::to_string(l) + " out of range");
    if (sched[l - 1] != Scale::thirty_second) {
      throw ConfigError("feature-inject layer " + std::to_string(l) + " is scheduled at " +
                        scale_name(sched[l - 1]) + ", feature injection needs 1/32");
    }
  }
}

DecoderConfig DecoderConfig::paper_scale() {
  DecoderConfig c;
  c.queries = 250;
  c.dim = 256;
  c.heads = 8;
  c.ffn_dim = 2048;
  return c;
}

DecoderParams::DecoderParams(const DecoderConfig& cfg, int clip_dim, int sam_dim, int text_dim, std::uint64_t seed)
    : cfg_(cfg), clip_dim_(clip_dim), sam_dim_(sam_dim), text_dim_(text_dim) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int d = cfg_.dim;
  query_embed = Parameter("query_embed", Matrix(cfg_.queries, d));
  std::normal_distribution<Real> init(0.0, 0.02);
  for (auto& v : query_embed.value.data()) v = init(rng);

  for (Scale s : cfg_.resolved_schedule()) {
    if (!pixel_proj.contains(s)) {
      pixel_proj.emplace(s, Linear(std::string("pixel_proj.") + scale_name(s), clip_dim, d, rng));
    }
  }
  mask_proj = Linear("mask_proj", clip_dim, d, rng);
  sam_proj = Linear("sam_proj", sam_dim, clip_dim, rng);
  query_injector = Linear("query_injector", clip_dim, d, rng);
  feature_injector = AttentionParams("feature_injector", clip_dim, cfg_.heads, rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l + 1);
    layers.push_back(Layer{AttentionParams(p + ".cross", d, cfg_.heads, rng),
                           AttentionParams(p + ".self", d, cfg_.heads, rng), LayerNorm(p + ".cross_norm", d),
                           LayerNorm(p + ".self_norm", d), LayerNorm(p + ".ffn_norm", d),
                           Linear(p + ".ffn_in", d, cfg_.ffn_dim, rng), Linear(p + ".ffn_out", cfg_.ffn_dim, d, rng)});
  }
  decoder_norm = LayerNorm("decoder_norm", d);
  class_proj = Linear("class_proj", d, text_dim, rng);
  null_logit = Parameter("null_logit", Matrix(1, 1));
  for (int i = 0; i < 3; ++i) mask_mlp.emplace_back("mask_mlp." + std::to_string(i), d, d, rng);
}

ParameterList DecoderParams::parameters() {
  ParameterList out{&query_embed};
  for (auto& [s, lin] : pixel_proj) lin.collect(out);
  mask_proj.collect(out);
  for (auto* p : injector_parameters()) out.push_back(p);
  for (auto& l : layers) {
    l.cross.collect(out);
    l.self.collect(out);
    l.cross_norm.collect(out);
    l.self_norm.collect(out);
    l.ffn_norm.collect(out);
    l.ffn_in.collect(out);
    l.ffn_out.collect(out);
  }
  decoder_norm.collect(out);
  class_proj.collect(out);
  out.push_back(&null_logit);
  for (auto& m : mask_mlp) m.collect(out);
  return out;
}

ParameterList DecoderParams::injector_parameters() {
  ParameterList out;
  sam_proj.collect(out);
  query_injector.collect(out);
  feature_injector.collect(out);
  return out;
}

void DecoderParams::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

Parameter* DecoderParams::find(const std::string& name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

Matrix sinusoidal_positions(int height, int width, int dim) {
  Matrix pos(static_cast<std::size_t>(height) * width, dim);
  const int half = std::max(1, dim / 2);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Real py = (y + 0.5) / height * 2.0 * std::numbers::pi;
      const Real px = (x + 0.5) / width * 2.0 * std::numbers::pi;
      for (int d = 0; d < dim; ++d) {
        const bool along_y = d < half;
        const int j = along_y ? d : d - half;
        const Real freq = std::pow(10000.0, -2.0 * (j / 2) / half);
        const Real arg = (along_y ? py : px) * freq;
        pos(static_cast<std::size_t>(y) * width + x, d) = (j % 2 == 0) ? std::sin(arg) : std::cos(arg);
      }
    }
  return pos;
}

namespace {

Matrix normalized_bank_transposed(const TextEmbeddingBank& bank) {
  Matrix t(bank.embeddings.cols(), bank.embeddings.rows());
  for (std::size_t c = 0; c < bank.embeddings.rows(); ++c) {
    Real n = 0.0;
    for (Real v : bank.embeddings.row(c)) n += v * v;
    n = std::max(std::sqrt(n), 1e-12);
    for (std::size_t d = 0; d < bank.embeddings.cols(); ++d) t(d, c) = bank.embeddings(c, d) / n;
  }
  return t;
}

Matrix positive_logits(const Matrix& logits) {
  Matrix m(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) m.data()[i] = logits.data()[i] > 0.0 ? 1.0 : 0.0;
  return m;
}

}  // namespace

Var classify_query_logits(Tape& tape, Var queries, const TextEmbeddingBank& bank, Real temperature, Linear& proj,
                          Parameter& null_logit) {
  if (proj.out_features() != bank.dim()) {
    throw DimensionError("classifier projects to " + std::to_string(proj.out_features()) + " dims, bank has " +
                         std::to_string(bank.dim()));
  }
  Var projected = ad::l2_normalize_rows(proj(tape, queries));
  Var cosine = ad::matmul(projected, tape.constant(normalized_bank_transposed(bank)));
  Var null_col = ad::repeat_row(tape.parameter(null_logit), queries.rows());
  return ad::concat_cols({ad::scale(cosine, temperature), null_col});
}

ClassScoreSet classify_queries(const QuerySet& queries, const TextEmbeddingBank& bank, Real temperature,
                               Linear& proj, Parameter& null_logit) {
  Tape tape;
  Var logits = classify_query_logits(tape, tape.constant(queries.embeddings), bank, temperature, proj, null_logit);
  return ClassScoreSet{softmax_rows(logits.value())};
}

Matrix pooled_class_probabilities(const Matrix& pooled, const TextEmbeddingBank& bank, Real temperature) {
  if (pooled.cols() != static_cast<std::size_t>(bank.dim())) {
    throw DimensionError("pooled features have " + std::to_string(pooled.cols()) + " dims, bank has " +
                         std::to_string(bank.dim()));
  }
  Matrix unit = pooled;
  for (std::size_t r = 0; r < unit.rows(); ++r) {
    Real n = 0.0;
    for (Real v : unit.row(r)) n += v * v;
    n = std::max(std::sqrt(n), 1e-12);
    for (auto& v : unit.row(r)) v /= n;
  }
  return softmax_rows(matmul(unit, normalized_bank_transposed(bank)), 1.0 / temperature);
}

ClassScoreSet clip_classify_masks(const MaskLogitSet& masks, const FeatureGrid& clip_full,
                                  const TextEmbeddingBank& bank, Real temperature) {
  const MaskLogitSet sized = (masks.height == clip_full.height && masks.width == clip_full.width)
                                 ? masks
                                 : masks.resized(clip_full.height, clip_full.width, clip_full.scale);
  const Matrix probs = pooled_class_probabilities(mask_pool(sized, clip_full), bank, temperature);
  ClassScoreSet out{Matrix(probs.rows(), probs.cols() + 1)};
  for (std::size_t r = 0; r < probs.rows(); ++r)
    std::copy(probs.row(r).begin(), probs.row(r).end(), out.probabilities.row(r).begin());
  return out;
}

DecoderTrace decoder_forward(Tape& tape, DecoderParams& params, const DecoderInputs& in) {
  const DecoderConfig& cfg = params.config();
  cfg.validate();
  const auto schedule = cfg.resolved_schedule();
  if (in.clip.eighth.channels() != params.clip_dim()) {
    throw ConfigError("semantic features have " + std::to_string(in.clip.eighth.channels()) +
                      " channels, decoder expects " + std::to_string(params.clip_dim()));
  }
  if (in.sam.channels() != params.sam_dim()) {
    throw ConfigError("localization features have " + std::to_string(in.sam.channels()) +
                      " channels, decoder expects " + std::to_string(params.sam_dim()));
  }
  if (in.bank.dim() != params.text_dim()) throw ConfigError("text bank dimension does not match the classifier");
  for (Scale s : schedule)
    if (in.clip.at(s).pixels() == 0) throw ConfigError(std::string("feature pyramid lacks scale ") + scale_name(s));

  const FeatureGrid& eighth = in.clip.eighth;
  const int h8 = eighth.height, w8 = eighth.width;

  Var mask_features = params.mask_proj(tape, tape.constant(eighth.tokens));
  Var mask_features_t = ad::transpose(mask_features);

  std::map<Scale, Var> memory;
  std::map<Scale, Var> positions;
  for (Scale s : schedule) {
    if (memory.contains(s)) continue;
    const FeatureGrid& g = in.clip.at(s);
    memory[s] = params.pixel_proj.at(s)(tape, tape.constant(g.tokens));
    positions[s] = tape.constant(sinusoidal_positions(g.height, g.width, cfg.dim));
  }

  Var injected_memory;
  if (!cfg.feature_inject_layers.empty()) {
    const FeatureGrid& g32 = in.clip.thirty_second;
    const FeatureGrid sam32 = resize_grid(in.sam, g32.height, g32.width, Scale::thirty_second);
    Var sam_tokens = params.sam_proj(tape, tape.constant(sam32.tokens));
    Var fused = feature_inject(tape, tape.constant(g32.tokens), sam_tokens, params.feature_injector,
                               cfg.feature_residual);
    injected_memory = params.pixel_proj.at(Scale::thirty_second)(tape, fused);
  }
  FeatureGrid sam8;
  if (!cfg.query_inject_layers.empty()) sam8 = resize_grid(in.sam, h8, w8, Scale::eighth);

  auto heads = [&](Var q) {
    Var qn = params.decoder_norm(tape, q);
    Var logits = classify_query_logits(tape, qn, in.bank, cfg.temperature, params.class_proj, params.null_logit);
    Var e = qn;
    for (std::size_t i = 0; i < params.mask_mlp.size(); ++i) {
      e = params.mask_mlp[i](tape, e);
      if (i + 1 < params.mask_mlp.size()) e = ad::relu(e);
    }
    return DecoderLayerNodes{logits, ad::matmul(e, mask_features_t)};
  };

  DecoderTrace trace;
  Var q = tape.parameter(params.query_embed);
  Var prev_masks = heads(q).mask_logits;

  for (int l = 1; l <= cfg.layers; ++l) {
    const Scale s = schedule[l - 1];
    auto& layer = params.layers[l - 1];
    const FeatureGrid& g = in.clip.at(s);

    if (cfg.query_inject_at(l)) {
      const MaskLogitSet current{h8, w8, Scale::eighth, prev_masks.value()};
      Var pooled = params.sam_proj(tape, tape.constant(mask_pool(current, sam8)));
      q = query_inject(tape, q, pooled, params.query_injector);
    }

    Var values = cfg.feature_inject_at(l) ? injected_memory : memory.at(s);
    Var keys = ad::add(values, positions.at(s));
    const Matrix allow = positive_logits(resize_maps(prev_masks.value(), h8, w8, g.height, g.width));
    const bool last = l == cfg.layers;
    Matrix* weights = last ? &trace.output.last_attention : nullptr;
    q = ad::add(q, multi_head_attention(tape, layer.cross, layer.cross_norm(tape, q), keys, values, &allow, weights));
    if (last) {
      trace.output.last_attention_height = g.height;
      trace.output.last_attention_width = g.width;
    }

    Var x = layer.self_norm(tape, q);
    q = ad::add(q, multi_head_attention(tape, layer.self, x, x, x));
    x = layer.ffn_norm(tape, q);
    q = ad::add(q, layer.ffn_out(tape, ad::relu(layer.ffn_in(tape, x))));

    DecoderLayerNodes nodes = heads(q);
    trace.output.layers.push_back(
        {ClassScoreSet{softmax_rows(nodes.class_logits.value())},
         MaskLogitSet{h8, w8, Scale::eighth, nodes.mask_logits.value()}});
    trace.layers.push_back(nodes);
    prev_masks = nodes.mask_logits;
  }
  trace.output.queries = QuerySet{q.value()};
  return trace;
}

DecoderOutput decoder_forward(DecoderParams& params, const DecoderInputs& in) {
  Tape tape;
  return decoder_forward(tape, params, in).output;
}

std::vector<std::uint8_t> encode_checkpoint(const ParameterList& params) {
  detail::ByteWriter w;
  w.magic("FZCK");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.raw(p->name);
    w.u32(2);
    w.u32(static_cast<std::uint32_t>(p->value.rows()));
    w.u32(static_cast<std::uint32_t>(p->value.cols()));
    for (Real v : p->value.data()) w.f64(v);
  }
  return w.take();
}

void decode_checkpoint(const std::vector<std::uint8_t>& bytes, const ParameterList& params) {
  detail::ByteReader r(bytes, "FZCK");
  r.expect_magic("FZCK");
  const std::size_t version_at = r.offset();
  if (const auto v = r.u32(); v != kCheckpointVersion) r.fail_at("unsupported version " + std::to_string(v), version_at);
  const std::uint32_t count = r.u32();
  std::map<std::string, Matrix> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    std::string name = r.raw(len);
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 2) r.fail_at("tensor '" + name + "' has unsupported rank " + std::to_string(rank), rank_at);
    std::uint32_t rows = 1, cols = r.u32();
    if (rank == 2) {
      rows = cols;
      cols = r.u32();
    }
    r.need(static_cast<std::size_t>(rows) * cols * 8);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = r.f64();
    tensors[name] = std::move(m);
  }
  r.expect_end();
  for (Parameter* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw ConfigError("checkpoint lacks tensor '" + p->name + "'");
    if (!it->second.same_shape(p->value)) {
      throw ConfigError("checkpoint tensor '" + p->name + "' has shape " + shape_string(it->second) + ", expected " +
                        shape_string(p->value));
    }
    p->value = it->second;
  }
}

void save_checkpoint(const std::filesystem::path& path, DecoderParams& params) {
  write_file_bytes(path, encode_checkpoint(params.parameters()));
}

void load_checkpoint(const std::filesystem::path& path, DecoderParams& params) {
  decode_checkpoint(read_file_bytes(path), params.parameters());
}

}  // namespace frozenseg
