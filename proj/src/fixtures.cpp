#include "frozenseg/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "binary_io.hpp"
#include "frozenseg/errors.hpp"

namespace frozenseg {

namespace {

constexpr int kCell = 8;

Real to_f32(Real v) { return static_cast<Real>(static_cast<float>(v)); }

std::vector<Real> random_unit_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<Real> n(0.0, 1.0);
  std::vector<Real> v(dim);
  Real norm = 0.0;
  do {
    for (auto& x : v) x = n(rng);
    norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  } while (norm < 1e-8);
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<Real> background_embedding(int dim, std::uint64_t bank_seed) {
  std::mt19937_64 rng(bank_seed ^ 0x9e3779b97f4a7c15ULL);
  auto v = random_unit_vector(rng, dim);
  for (auto& x : v) x = to_f32(x);
  return v;
}

struct Rect {
  int y0, x0, y1, x1;  // half-open, in pixels
};

}  // namespace

void SceneSpec::validate() const {
  if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0) {
    throw DimensionError("scene size " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not a positive multiple of 32");
  }
  if (classes < 1 || seen_classes < 1 || seen_classes > classes) {
    throw ConfigError("need 1 <= seen classes <= classes");
  }
  if (instances < 1) throw ConfigError("scene needs at least one instance");
  if (unseen_instances < 0 || unseen_instances > instances) {
    throw ConfigError("unseen instance count must lie in [0, instances]");
  }
  if (unseen_instances > 0 && seen_classes == classes) {
    throw ConfigError("unseen instances requested but every class is seen");
  }
  if (instances - unseen_instances > 0 && seen_classes < 1) throw ConfigError("no seen class available");
  if (instances > (height / kCell) * (width / kCell)) throw ConfigError("too many instances for the image size");
  if (dim < 1 || sam_dim < 1) throw ConfigError("feature dimensions must be positive");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be a finite non-negative value");
}

SemanticMap GroundTruth::semantic() const {
  SemanticMap s{height, width, std::vector<int>(panoptic.size(), kVoid)};
  for (std::size_t p = 0; p < panoptic.size(); ++p)
    if (panoptic[p] != kVoid) s.labels[p] = segment_class[panoptic[p]];
  return s;
}

PanopticMap GroundTruth::panoptic_map() const {
  PanopticMap m{height, width, panoptic, {}};
  for (int c : segment_class) m.segments.push_back({c, 1.0});
  return m;
}

Matrix GroundTruth::instance_masks() const {
  Matrix m(segment_class.size(), panoptic.size());
  for (std::size_t p = 0; p < panoptic.size(); ++p)
    if (panoptic[p] != kVoid) m(panoptic[p], p) = 1.0;
  return m;
}

void GroundTruth::validate(int classes) const {
  if (panoptic.size() != static_cast<std::size_t>(height) * width) throw DataError("ground truth map size mismatch");
  for (int id : panoptic)
    if (id != kVoid && (id < 0 || id >= segment_count())) throw DataError("ground truth references unknown segment");
  for (int c : segment_class)
    if (c < 0 || c >= classes) throw DataError("ground truth class " + std::to_string(c) + " out of range");
}

std::vector<int> TextEmbeddingBank::seen_indices() const {
  std::vector<int> idx;
  for (int c = 0; c < classes(); ++c)
    if (is_seen[c]) idx.push_back(c);
  return idx;
}

TextEmbeddingBank TextEmbeddingBank::seen_subset() const {
  const auto idx = seen_indices();
  TextEmbeddingBank out;
  out.embeddings = Matrix(idx.size(), embeddings.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(embeddings.row(idx[k]).begin(), embeddings.cols(), out.embeddings.row(k).begin());
    out.names.push_back(names[idx[k]]);
    out.is_seen.push_back(true);
  }
  return out;
}

void TextEmbeddingBank::validate() const {
  if (names.size() != embeddings.rows() || is_seen.size() != embeddings.rows()) {
    throw DataError("text bank: names/flags do not match embedding rows");
  }
  require_finite(embeddings, "text bank");
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    Real s = 0.0;
    for (Real v : embeddings.row(r)) s += v * v;
    if (std::abs(std::sqrt(s) - 1.0) > 1e-5) throw DataError("text bank row " + std::to_string(r) + " is not unit norm");
  }
  std::set<std::string> unique(names.begin(), names.end());
  if (unique.size() != names.size()) throw DataError("text bank has duplicate class names");
}

TextEmbeddingBank make_text_bank(int classes, int seen_classes, int dim, std::uint64_t bank_seed) {
  std::mt19937_64 rng(bank_seed);
  TextEmbeddingBank bank;
  bank.embeddings = Matrix(classes, dim);
  for (int c = 0; c < classes; ++c) {
    auto v = random_unit_vector(rng, dim);
    for (int d = 0; d < dim; ++d) bank.embeddings(c, d) = to_f32(v[d]);
    bank.names.push_back("class_" + std::to_string(c));
    bank.is_seen.push_back(c < seen_classes);
  }
  return bank;
}

const FeatureGrid& ClipPyramid::at(Scale s) const {
  switch (s) {
    case Scale::full: return full;
    case Scale::eighth: return eighth;
    case Scale::sixteenth: return sixteenth;
    case Scale::thirty_second: return thirty_second;
  }
  throw ConfigError("unknown scale");
}

ClipPyramid build_pyramid(const FeatureGrid& full) {
  auto pool = [](const FeatureGrid& g, int times, Scale s) {
    FeatureGrid out = g;
    for (int i = 0; i < times; ++i) out = avg_pool2(out);
    for (auto& v : out.tokens.data()) v = to_f32(v);
    out.scale = s;
    return out;
  };
  ClipPyramid p;
  p.full = full;
  p.eighth = pool(full, 3, Scale::eighth);
  p.sixteenth = pool(p.eighth, 1, Scale::sixteenth);
  p.thirty_second = pool(p.sixteenth, 1, Scale::thirty_second);
  return p;
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  scene.spec = spec;
  scene.bank = make_text_bank(spec.classes, spec.seen_classes, spec.dim, spec.bank_seed);
  std::mt19937_64 rng(spec.seed);

  const int cy = spec.height / kCell, cx = spec.width / kCell;
  std::vector<char> occupied(static_cast<std::size_t>(cy) * cx, 0);
  auto free_at = [&](int y0, int x0, int h, int w) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x)
        if (occupied[y * cx + x]) return false;
    return true;
  };
  std::vector<Rect> rects;
  for (int k = 0; k < spec.instances; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
      const int max_side = attempt < 200 ? 3 : 2;
      const int min_side = attempt < 300 ? 2 : 1;
      std::uniform_int_distribution<int> side(min_side, std::min(max_side, std::min(cy, cx)));
      const int h = side(rng), w = side(rng);
      std::uniform_int_distribution<int> py(0, cy - h), px(0, cx - w);
      const int y0 = py(rng), x0 = px(rng);
      if (!free_at(y0, x0, h, w)) continue;
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) occupied[y * cx + x] = 1;
      rects.push_back({y0 * kCell, x0 * kCell, (y0 + h) * kCell, (x0 + w) * kCell});
      placed = true;
    }
    if (!placed) {
      // deterministic fallback: first free cell
      for (int c = 0; c < cy * cx && !placed; ++c) {
        if (occupied[c]) continue;
        occupied[c] = 1;
        rects.push_back({(c / cx) * kCell, (c % cx) * kCell, (c / cx + 1) * kCell, (c % cx + 1) * kCell});
        placed = true;
      }
    }
  }

  auto draw_classes = [&](std::vector<int> pool, int count) {
    std::vector<int> out;
    while (static_cast<int>(out.size()) < count) {
      std::shuffle(pool.begin(), pool.end(), rng);
      for (int c : pool) {
        if (static_cast<int>(out.size()) == count) break;
        out.push_back(c);
      }
    }
    return out;
  };
  std::vector<int> seen_pool, unseen_pool;
  for (int c = 0; c < spec.classes; ++c) (c < spec.seen_classes ? seen_pool : unseen_pool).push_back(c);
  const int n_seen = spec.instances - spec.unseen_instances;
  auto classes = draw_classes(seen_pool, n_seen);
  auto unseen = draw_classes(unseen_pool, spec.unseen_instances);
  classes.insert(classes.end(), unseen.begin(), unseen.end());

  GroundTruth& gt = scene.gt;
  gt.height = spec.height;
  gt.width = spec.width;
  gt.panoptic.assign(static_cast<std::size_t>(spec.height) * spec.width, kVoid);
  gt.segment_class = classes;
  for (std::size_t k = 0; k < rects.size(); ++k)
    for (int y = rects[k].y0; y < rects[k].y1; ++y)
      for (int x = rects[k].x0; x < rects[k].x1; ++x) gt.panoptic[y * spec.width + x] = static_cast<int>(k);

  std::vector<std::vector<Real>> instance_codes;
  for (int k = 0; k <= spec.instances; ++k) instance_codes.push_back(random_unit_vector(rng, spec.sam_dim));
  const auto bg = background_embedding(spec.dim, spec.bank_seed);

  std::normal_distribution<Real> noise(0.0, 1.0);
  FeatureGrid clip(spec.height, spec.width, spec.dim, Scale::full);
  for (int p = 0; p < clip.pixels(); ++p) {
    const int seg = gt.panoptic[p];
    for (int d = 0; d < spec.dim; ++d) {
      const Real base = seg == kVoid ? bg[d] : scene.bank.embeddings(gt.segment_class[seg], d);
      const Real eps = spec.noise > 0.0 ? spec.noise * noise(rng) : 0.0;
      clip.tokens(p, d) = to_f32(base + eps);
    }
  }
  FeatureGrid sam_full(spec.height, spec.width, spec.sam_dim, Scale::full);
  for (int p = 0; p < sam_full.pixels(); ++p) {
    const int seg = gt.panoptic[p];
    const auto& code = instance_codes[seg == kVoid ? spec.instances : seg];
    for (int d = 0; d < spec.sam_dim; ++d) {
      const Real eps = spec.noise > 0.0 ? spec.noise * noise(rng) : 0.0;
      sam_full.tokens(p, d) = code[d] + eps;
    }
  }
  FeatureGrid sam = sam_full;
  for (int i = 0; i < 4; ++i) sam = avg_pool2(sam);
  for (auto& v : sam.tokens.data()) v = to_f32(v);
  sam.scale = Scale::sixteenth;

  scene.clip = build_pyramid(clip);
  scene.sam = std::move(sam);
  return scene;
}

BinaryMaskSet make_fixture_proposals(const GroundTruth& gt, std::uint64_t seed, const ProposalOptions& options) {
  std::mt19937_64 rng(seed);
  const int h = gt.height, w = gt.width;
  const Matrix inst = gt.instance_masks();
  std::vector<std::vector<Real>> rows;
  std::uniform_int_distribution<int> shift(-options.max_shift, options.max_shift);
  for (std::size_t k = 0; k < inst.rows(); ++k) {
    const int dy = shift(rng), dx = shift(rng);
    std::vector<Real> m(static_cast<std::size_t>(h) * w, 0.0);
    bool any = false;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (inst(k, y * w + x) == 0.0) continue;
        const int ty = y + dy, tx = x + dx;
        if (ty < 0 || ty >= h || tx < 0 || tx >= w) continue;
        m[ty * w + tx] = 1.0;
        any = true;
      }
    if (!any) std::copy(inst.row(k).begin(), inst.row(k).end(), m.begin());
    rows.push_back(std::move(m));
  }
  for (int d = 0; d < options.distractors; ++d) {
    std::uniform_int_distribution<int> side(8, std::max(8, std::min(h, w) / 3));
    const int rh = side(rng), rw = side(rng);
    std::uniform_int_distribution<int> py(0, h - rh), px(0, w - rw);
    const int y0 = py(rng), x0 = px(rng);
    std::vector<Real> m(static_cast<std::size_t>(h) * w, 0.0);
    for (int y = y0; y < y0 + rh; ++y)
      for (int x = x0; x < x0 + rw; ++x) m[y * w + x] = 1.0;
    rows.push_back(std::move(m));
  }
  BinaryMaskSet out{h, w, Matrix(rows.size(), static_cast<std::size_t>(h) * w)};
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), out.masks.row(r).begin());
  return out;
}

std::vector<std::uint8_t> encode_feature_grid(const FeatureGrid& grid) {
  require_finite(grid.tokens, "feature grid");
  detail::ByteWriter w;
  w.magic("FZSG");
  w.u32(kFeatureFileVersion);
  w.u32(static_cast<std::uint32_t>(grid.height));
  w.u32(static_cast<std::uint32_t>(grid.width));
  w.u32(static_cast<std::uint32_t>(grid.channels()));
  w.u8(static_cast<std::uint8_t>(grid.scale));
  for (Real v : grid.tokens.data()) w.f32(static_cast<float>(v));
  return w.take();
}

FeatureGrid decode_feature_grid(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "FZSG");
  r.expect_magic("FZSG");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kFeatureFileVersion) r.fail_at("unsupported version " + std::to_string(version), version_at);
  const std::uint32_t h = r.u32(), w = r.u32(), d = r.u32();
  const std::size_t scale_at = r.offset();
  const std::uint8_t code = r.u8();
  if (!valid_scale_code(code)) r.fail_at("unknown scale code " + std::to_string(code), scale_at);
  const std::uint64_t count = static_cast<std::uint64_t>(h) * w * d;
  if (count > r.remaining() / 4) {
    throw FormatError("FZSG: truncated payload, header declares " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                          std::to_string(d) + " values but only " + std::to_string(r.remaining() / 4) + " present",
                      bytes.size());
  }
  FeatureGrid g(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d), static_cast<Scale>(code));
  for (auto& v : g.tokens.data()) {
    const std::size_t at = r.offset();
    v = r.f32();
    if (!std::isfinite(v)) r.fail_at("non-finite value", at);
  }
  r.expect_end();
  return g;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

void save_feature_file(const std::filesystem::path& path, const FeatureGrid& grid) {
  write_file_bytes(path, encode_feature_grid(grid));
}

FeatureGrid load_feature_file(const std::filesystem::path& path) { return decode_feature_grid(read_file_bytes(path)); }

std::vector<std::uint8_t> encode_text_bank(const TextEmbeddingBank& bank) {
  detail::ByteWriter w;
  w.magic("FZTB");
  w.u32(static_cast<std::uint32_t>(bank.classes()));
  w.u32(static_cast<std::uint32_t>(bank.dim()));
  for (const auto& n : bank.names) {
    w.u32(static_cast<std::uint32_t>(n.size()));
    w.raw(n);
  }
  for (Real v : bank.embeddings.data()) w.f32(static_cast<float>(v));
  return w.take();
}

TextEmbeddingBank decode_text_bank(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "FZTB");
  r.expect_magic("FZTB");
  const std::uint32_t c = r.u32(), d = r.u32();
  TextEmbeddingBank bank;
  std::set<std::string> seen_names;
  for (std::uint32_t i = 0; i < c; ++i) {
    const std::size_t at = r.offset();
    const std::uint32_t len = r.u32();
    std::string name = r.raw(len);
    if (!seen_names.insert(name).second) r.fail_at("duplicate class name '" + name + "'", at);
    bank.names.push_back(std::move(name));
  }
  r.need(static_cast<std::size_t>(c) * d * 4);
  bank.embeddings = Matrix(c, d);
  for (auto& v : bank.embeddings.data()) {
    const std::size_t at = r.offset();
    v = r.f32();
    if (!std::isfinite(v)) r.fail_at("non-finite value", at);
  }
  r.expect_end();
  bank.is_seen.assign(c, true);
  return bank;
}

void save_text_bank(const std::filesystem::path& path, const TextEmbeddingBank& bank) {
  write_file_bytes(path, encode_text_bank(bank));
}

TextEmbeddingBank load_text_bank(const std::filesystem::path& path) { return decode_text_bank(read_file_bytes(path)); }

}  // namespace frozenseg
