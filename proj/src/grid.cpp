#include "frozenseg/grid.hpp"

#include <algorithm>
#include <cmath>

#include "frozenseg/errors.hpp"

namespace frozenseg {

int scale_divisor(Scale s) { return 1 << static_cast<int>(s); }

const char* scale_name(Scale s) {
  switch (s) {
    case Scale::full: return "full";
    case Scale::eighth: return "1/8";
    case Scale::sixteenth: return "1/16";
    case Scale::thirty_second: return "1/32";
  }
  return "?";
}

Scale parse_scale(const std::string& text) {
  if (text == "full") return Scale::full;
  if (text == "1/8") return Scale::eighth;
  if (text == "1/16") return Scale::sixteenth;
  if (text == "1/32") return Scale::thirty_second;
  throw ConfigError("unknown scale '" + text + "'");
}

bool valid_scale_code(std::uint8_t code) { return code == 0 || code == 3 || code == 4 || code == 5; }

FeatureGrid::FeatureGrid(int h, int w, int channels, Scale s)
    : height(h), width(w), scale(s), tokens(static_cast<std::size_t>(h) * w, channels) {}

FeatureGrid::FeatureGrid(int h, int w, Scale s, Matrix t)
    : height(h), width(w), scale(s), tokens(std::move(t)) {
  if (tokens.rows() != static_cast<std::size_t>(h) * w) {
    throw DimensionError("feature grid " + std::to_string(h) + "x" + std::to_string(w) +
                         " given " + std::to_string(tokens.rows()) + " tokens");
  }
}

FeatureGrid avg_pool2(const FeatureGrid& g) {
  if (g.height % 2 != 0 || g.width % 2 != 0) throw DimensionError("avg_pool2: odd spatial size");
  FeatureGrid out(g.height / 2, g.width / 2, g.channels(), g.scale);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int d = 0; d < g.channels(); ++d) {
        const Real s = g.at(2 * y, 2 * x, d) + g.at(2 * y, 2 * x + 1, d) + g.at(2 * y + 1, 2 * x, d) +
                       g.at(2 * y + 1, 2 * x + 1, d);
        out.at(y, x, d) = s / 4.0;
      }
  return out;
}

namespace {

struct Tap {
  int lo, hi;
  Real w_hi;
};

Tap source_tap(int out_index, int in_size, int out_size) {
  const Real ratio = static_cast<Real>(in_size) / out_size;
  Real src = (out_index + 0.5) * ratio - 0.5;
  src = std::max(src, 0.0);
  int lo = static_cast<int>(std::floor(src));
  lo = std::min(lo, in_size - 1);
  const int hi = std::min(lo + 1, in_size - 1);
  return {lo, hi, src - lo};
}

}  // namespace

Matrix bilinear_operator(int in_h, int in_w, int out_h, int out_w) {
  if (in_h <= 0 || in_w <= 0 || out_h <= 0 || out_w <= 0) throw DimensionError("bilinear_operator: empty size");
  Matrix op(static_cast<std::size_t>(out_h) * out_w, static_cast<std::size_t>(in_h) * in_w);
  for (int oy = 0; oy < out_h; ++oy) {
    const Tap ty = source_tap(oy, in_h, out_h);
    for (int ox = 0; ox < out_w; ++ox) {
      const Tap tx = source_tap(ox, in_w, out_w);
      const std::size_t row = static_cast<std::size_t>(oy) * out_w + ox;
      op(row, static_cast<std::size_t>(ty.lo) * in_w + tx.lo) += (1 - ty.w_hi) * (1 - tx.w_hi);
      op(row, static_cast<std::size_t>(ty.lo) * in_w + tx.hi) += (1 - ty.w_hi) * tx.w_hi;
      op(row, static_cast<std::size_t>(ty.hi) * in_w + tx.lo) += ty.w_hi * (1 - tx.w_hi);
      op(row, static_cast<std::size_t>(ty.hi) * in_w + tx.hi) += ty.w_hi * tx.w_hi;
    }
  }
  return op;
}

Matrix resize_maps(const Matrix& maps, int in_h, int in_w, int out_h, int out_w) {
  if (maps.cols() != static_cast<std::size_t>(in_h) * in_w) {
    throw DimensionError("resize_maps: rows are not " + std::to_string(in_h) + "x" + std::to_string(in_w));
  }
  if (in_h == out_h && in_w == out_w) return maps;
  std::vector<Tap> ty(out_h), tx(out_w);
  for (int y = 0; y < out_h; ++y) ty[y] = source_tap(y, in_h, out_h);
  for (int x = 0; x < out_w; ++x) tx[x] = source_tap(x, in_w, out_w);
  Matrix out(maps.rows(), static_cast<std::size_t>(out_h) * out_w);
  for (std::size_t r = 0; r < maps.rows(); ++r) {
    auto in = maps.row(r);
    auto o = out.row(r);
    for (int y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const Tap& b = tx[x];
        const Real v00 = in[a.lo * in_w + b.lo], v01 = in[a.lo * in_w + b.hi];
        const Real v10 = in[a.hi * in_w + b.lo], v11 = in[a.hi * in_w + b.hi];
        o[y * out_w + x] = (1 - a.w_hi) * ((1 - b.w_hi) * v00 + b.w_hi * v01) +
                           a.w_hi * ((1 - b.w_hi) * v10 + b.w_hi * v11);
      }
    }
  }
  return out;
}

FeatureGrid resize_grid(const FeatureGrid& g, int out_h, int out_w, Scale out_scale) {
  if (g.height == out_h && g.width == out_w) {
    FeatureGrid same = g;
    same.scale = out_scale;
    return same;
  }
  // tokens are pixels x channels; resample the transposed channel maps
  Matrix maps = resize_maps(g.tokens.transposed(), g.height, g.width, out_h, out_w);
  return FeatureGrid(out_h, out_w, out_scale, maps.transposed());
}

}  // namespace frozenseg
