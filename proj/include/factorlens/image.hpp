#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "factorlens/error.hpp"

namespace factorlens {

using Rgb = std::array<std::uint8_t, 3>;

// Row-major 8-bit RGB image, at least 8x8.
class ImageRGB {
 public:
  static constexpr std::size_t kMinSide = 8;

  ImageRGB() = default;

  ImageRGB(std::size_t width, std::size_t height, Rgb fill = {0, 0, 0}) : width_(width), height_(height) {
    check_size(width, height);
    pixels_.resize(width * height * 3);
    for (std::size_t i = 0; i < width * height; ++i) std::copy(fill.begin(), fill.end(), pixels_.begin() + 3 * i);
  }

  ImageRGB(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    check_size(width, height);
    if (pixels_.size() != width * height * 3) throw ShapeError("pixel buffer does not match image size");
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }

  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels_[(y * width_ + x) * 3 + c]; }

  void set(std::size_t x, std::size_t y, Rgb color) {
    std::copy(color.begin(), color.end(), pixels_.begin() + (y * width_ + x) * 3);
  }

  // Fills the half-open pixel rectangle [x0, x1) x [y0, y1), clipped to the image.
  void fill_rect(std::ptrdiff_t x0, std::ptrdiff_t y0, std::ptrdiff_t x1, std::ptrdiff_t y1, Rgb color) {
    const auto w = static_cast<std::ptrdiff_t>(width_);
    const auto h = static_cast<std::ptrdiff_t>(height_);
    x0 = std::clamp<std::ptrdiff_t>(x0, 0, w);
    x1 = std::clamp<std::ptrdiff_t>(x1, 0, w);
    y0 = std::clamp<std::ptrdiff_t>(y0, 0, h);
    y1 = std::clamp<std::ptrdiff_t>(y1, 0, h);
    for (auto y = y0; y < y1; ++y)
      for (auto x = x0; x < x1; ++x) set(static_cast<std::size_t>(x), static_cast<std::size_t>(y), color);
  }

  friend bool operator==(const ImageRGB&, const ImageRGB&) = default;

 private:
  static void check_size(std::size_t width, std::size_t height) {
    if (width < kMinSide || height < kMinSide)
      throw ParamError("image must be at least 8x8, got " + std::to_string(width) + "x" + std::to_string(height));
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Planar float image, channel-major: data[(c * height + y) * width + x].
struct PlanarImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
};

// Bilinear resize with half-pixel centers and edge clamping; channel values
// scaled from [0,255] to [0,1]. Same-size resizes reproduce pixels exactly.
inline PlanarImage resize_bilinear(const ImageRGB& img, std::size_t out_w, std::size_t out_h) {
  PlanarImage out{out_w, out_h, std::vector<double>(3 * out_w * out_h)};
  const double sx = static_cast<double>(img.width()) / static_cast<double>(out_w);
  const double sy = static_cast<double>(img.height()) / static_cast<double>(out_h);
  const double max_x = static_cast<double>(img.width() - 1);
  const double max_y = static_cast<double>(img.height() - 1);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - wx) + img.at(x1, y0, c) * wx;
        const double bottom = img.at(x0, y1, c) * (1.0 - wx) + img.at(x1, y1, c) * wx;
        out.data[(c * out_h + y) * out_w + x] = (top * (1.0 - wy) + bottom * wy) / 255.0;
      }
    }
  }
  return out;
}

}  // namespace factorlens
