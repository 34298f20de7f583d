#pragma once

#include <cstdint>
#include <vector>

#include "frozenseg/matrix.hpp"

namespace frozenseg {

/// Resolution of a feature map relative to the input image. The numeric
/// value is the base-2 log of the downsampling factor and doubles as the
/// scale code stored in feature files.
enum class Scale : std::uint8_t { full = 0, eighth = 3, sixteenth = 4, thirty_second = 5 };

int scale_divisor(Scale s);
const char* scale_name(Scale s);
/// Parses "full", "1/8", "1/16" or "1/32". Throws ConfigError otherwise.
Scale parse_scale(const std::string& text);
bool valid_scale_code(std::uint8_t code);

/// Dense H x W x D feature map. `tokens` holds one row per pixel in
/// row-major pixel order, which is also the H x W x D row-major layout.
struct FeatureGrid {
  int height = 0;
  int width = 0;
  Scale scale = Scale::full;
  Matrix tokens;

  FeatureGrid() = default;
  FeatureGrid(int h, int w, int channels, Scale s);
  FeatureGrid(int h, int w, Scale s, Matrix tokens);

  int channels() const noexcept { return static_cast<int>(tokens.cols()); }
  int pixels() const noexcept { return height * width; }
  Real& at(int y, int x, int d) { return tokens(static_cast<std::size_t>(y * width + x), d); }
  Real at(int y, int x, int d) const { return tokens(static_cast<std::size_t>(y * width + x), d); }

  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;
};

/// Mean over 2x2 blocks; halves each spatial side.
FeatureGrid avg_pool2(const FeatureGrid& g);

/// (out_h*out_w) x (in_h*in_w) operator performing bilinear resampling with
/// half-pixel centres and edge clamping (align_corners = false).
Matrix bilinear_operator(int in_h, int in_w, int out_h, int out_w);

/// Bilinearly resamples every row of `maps`, each row an in_h x in_w image.
Matrix resize_maps(const Matrix& maps, int in_h, int in_w, int out_h, int out_w);

FeatureGrid resize_grid(const FeatureGrid& g, int out_h, int out_w, Scale out_scale);

}  // namespace frozenseg
