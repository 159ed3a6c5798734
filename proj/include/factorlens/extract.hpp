#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factorlens/error.hpp"
#include "factorlens/factor_grid.hpp"
#include "factorlens/feature_set.hpp"
#include "factorlens/image.hpp"
#include "factorlens/parallel.hpp"

namespace factorlens {

// SplitMix64 (Steele, Lea & Flood). The state starts at the seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Standard normals from a SplitMix64 stream via Box-Muller. Each pair of
// draws consumes two outputs, u1 = (hi53(x1) + 1) / 2^53 in (0, 1] and
// u2 = hi53(x2) / 2^53 in [0, 1), and yields r*cos(2*pi*u2) then r*sin(2*pi*u2)
// with r = sqrt(-2 ln u1).
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    constexpr double kInv53 = 1.0 / 9007199254740992.0;
    const double u1 = static_cast<double>((rng_.next() >> 11) + 1) * kInv53;
    const double u2 = static_cast<double>(rng_.next() >> 11) * kInv53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual const std::string& id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::optional<std::uint64_t> seed() const { return std::nullopt; }
  virtual std::vector<double> evaluate(const ImageRGB& image) const = 0;
};

// Seeded random convolution layer used as a stand-in for a CNN layer:
//   bilinear resize to 64x64 in [0,1]
//   -> 32 filters 7x7x3, stride 2, valid padding (29x29 responses), no bias
//   -> ReLU -> max over a 3x3 grid of cells -> 288 values.
// Weights are N(0, 1/147) drawn from NormalStream(seed) in filter, kernel
// row, kernel column, channel order. Pool cell boundaries along each axis are
// floor(i * 29 / 3) = {0, 9, 19, 29}. With pooled = false the extractor
// returns the 32x29x29 ReLU responses instead.
class RandConvExtractor final : public Extractor {
 public:
  static constexpr std::size_t kInput = 64;
  static constexpr std::size_t kFilters = 32;
  static constexpr std::size_t kKernel = 7;
  static constexpr std::size_t kChannels = 3;
  static constexpr std::size_t kStride = 2;
  static constexpr std::size_t kOut = (kInput - kKernel) / kStride + 1;
  static constexpr std::size_t kCells = 3;
  static constexpr std::size_t kWeightsPerFilter = kKernel * kKernel * kChannels;

  explicit RandConvExtractor(std::uint64_t seed, bool pooled = true)
      : seed_(seed),
        pooled_(pooled),
        id_((pooled ? "randconv:" : "randconv-unpooled:") + std::to_string(seed)),
        weights_(kFilters * kWeightsPerFilter) {
    NormalStream normals(seed);
    const double scale = std::sqrt(1.0 / static_cast<double>(kWeightsPerFilter));
    for (auto& w : weights_) w = normals.next() * scale;
  }

  const std::string& id() const override { return id_; }
  std::size_t dim() const override { return pooled_ ? kFilters * kCells * kCells : kFilters * kOut * kOut; }
  std::optional<std::uint64_t> seed() const override { return seed_; }
  bool pooled() const noexcept { return pooled_; }

  // weights()[((f * 7 + ky) * 7 + kx) * 3 + c]
  std::span<const double> weights() const noexcept { return weights_; }

  // ReLU conv responses, layout [filter][y][x].
  std::vector<double> responses(const ImageRGB& image) const {
    const auto in = resize_bilinear(image, kInput, kInput);
    std::vector<double> out(kFilters * kOut * kOut);
    for (std::size_t f = 0; f < kFilters; ++f) {
      const double* w = weights_.data() + f * kWeightsPerFilter;
      for (std::size_t oy = 0; oy < kOut; ++oy)
        for (std::size_t ox = 0; ox < kOut; ++ox) {
          double acc = 0.0;
          for (std::size_t ky = 0; ky < kKernel; ++ky)
            for (std::size_t kx = 0; kx < kKernel; ++kx)
              for (std::size_t c = 0; c < kChannels; ++c)
                acc += w[(ky * kKernel + kx) * kChannels + c] * in.at(c, oy * kStride + ky, ox * kStride + kx);
          out[(f * kOut + oy) * kOut + ox] = std::max(acc, 0.0);
        }
    }
    return out;
  }

  static constexpr std::array<std::size_t, kCells + 1> cell_bounds() {
    std::array<std::size_t, kCells + 1> b{};
    for (std::size_t i = 0; i <= kCells; ++i) b[i] = i * kOut / kCells;
    return b;
  }

  std::vector<double> evaluate(const ImageRGB& image) const override {
    auto resp = responses(image);
    if (!pooled_) return resp;
    constexpr auto bounds = cell_bounds();
    std::vector<double> out(kFilters * kCells * kCells);
    for (std::size_t f = 0; f < kFilters; ++f)
      for (std::size_t cy = 0; cy < kCells; ++cy)
        for (std::size_t cx = 0; cx < kCells; ++cx) {
          double m = 0.0;  // responses are post-ReLU
          for (std::size_t y = bounds[cy]; y < bounds[cy + 1]; ++y)
            for (std::size_t x = bounds[cx]; x < bounds[cx + 1]; ++x) m = std::max(m, resp[(f * kOut + y) * kOut + x]);
          out[(f * kCells + cy) * kCells + cx] = m;
        }
    return out;
  }

 private:
  std::uint64_t seed_;
  bool pooled_;
  std::string id_;
  std::vector<double> weights_;
};

// Raw pixels: bilinear resize to side x side, RGB interleaved in [0,1], row-major.
class PixelExtractor final : public Extractor {
 public:
  explicit PixelExtractor(std::size_t side) : side_(side), id_("pixels:" + std::to_string(side)) {
    if (side < 2) throw ParamError("pixel extractor side must be >= 2, got " + std::to_string(side));
  }

  const std::string& id() const override { return id_; }
  std::size_t dim() const override { return 3 * side_ * side_; }

  std::vector<double> evaluate(const ImageRGB& image) const override {
    const auto p = resize_bilinear(image, side_, side_);
    std::vector<double> out(dim());
    for (std::size_t y = 0; y < side_; ++y)
      for (std::size_t x = 0; x < side_; ++x)
        for (std::size_t c = 0; c < 3; ++c) out[(y * side_ + x) * 3 + c] = p.at(c, y, x);
    return out;
  }

 private:
  std::size_t side_;
  std::string id_;
};

// Parses "randconv:<seed>", "randconv-unpooled:<seed>" or "pixels:<side>".
inline std::unique_ptr<Extractor> make_extractor(std::string_view id) {
  const auto colon = id.find(':');
  if (colon == std::string_view::npos) throw ParamError("extractor id must look like kind:arg, got '" + std::string(id) + "'");
  const auto kind = id.substr(0, colon);
  const auto arg = id.substr(colon + 1);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), value);
  if (ec != std::errc() || ptr != arg.data() + arg.size() || arg.empty())
    throw ParamError("invalid extractor argument '" + std::string(arg) + "'");
  if (kind == "randconv") return std::make_unique<RandConvExtractor>(value, true);
  if (kind == "randconv-unpooled") return std::make_unique<RandConvExtractor>(value, false);
  if (kind == "pixels") return std::make_unique<PixelExtractor>(static_cast<std::size_t>(value));
  throw ParamError("unknown extractor kind '" + std::string(kind) + "'");
}

// Evaluates the extractor on every image; row i of the result is image i.
inline FeatureSet extract_set(const std::vector<ImageRGB>& images, const FactorGrid& grid, const Extractor& extractor,
                              const nlohmann::json& recipe = nullptr) {
  if (images.empty() || images.size() != grid.size())
    throw ShapeError("got " + std::to_string(images.size()) + " images for a grid of " + std::to_string(grid.size()) +
                     " cells");
  const std::size_t d = extractor.dim();
  std::vector<float> data(images.size() * d);
  parallel_for(0, images.size(), 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto v = extractor.evaluate(images[i]);
      std::transform(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(i * d),
                     [](double x) { return static_cast<float>(x); });
    }
  });
  Manifest m;
  m.extractor = extractor.id();
  m.seed = extractor.seed();
  m.recipe = recipe;
  m.notes = "features stored as produced by the extractor; no post-normalization";
  return FeatureSet(grid, extractor.id(), d, std::move(data), std::move(m));
}

}  // namespace factorlens
