#pragma once

// Minimal PNG codec on top of zlib: writes 8-bit RGB, reads 8-bit
// non-interlaced grayscale / gray+alpha / RGB / RGBA.

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "factorlens/error.hpp"
#include "factorlens/image.hpp"

namespace factorlens::png {

namespace detail {

inline constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char type[4], std::span<const std::uint8_t> body) {
  put_be32(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const ImageRGB& img) {
  using namespace detail;
  std::vector<std::uint8_t> out(std::begin(kSignature), std::end(kSignature));

  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width()));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height()));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // depth 8, truecolor, deflate, no filter, no interlace
  put_chunk(out, "IHDR", ihdr);

  const std::size_t stride = img.width() * 3;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * img.height());
  for (std::size_t y = 0; y < img.height(); ++y) {
    raw.push_back(0);
    const auto* row = img.pixels().data() + y * stride;
    raw.insert(raw.end(), row, row + stride);
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_len);
  if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("deflate failed");
  packed.resize(packed_len);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

inline ImageRGB decode(std::span<const std::uint8_t> bytes) {
  using namespace detail;
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0) throw FormatError("png", "bad signature");
  std::size_t pos = 8;
  std::uint32_t width = 0, height = 0;
  int color_type = -1;
  std::vector<std::uint8_t> idat;
  bool seen_end = false;
  while (pos + 12 <= bytes.size() && !seen_end) {
    const std::uint32_t len = get_be32(bytes.data() + pos);
    if (len > bytes.size() - pos - 12) throw FormatError("png", "truncated chunk");
    const std::uint8_t* type = bytes.data() + pos + 4;
    const std::uint8_t* body = type + 4;
    const auto crc = crc32(0L, type, len + 4);
    if (static_cast<std::uint32_t>(crc) != get_be32(body + len)) throw FormatError("png", "chunk CRC mismatch");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw FormatError("png", "bad IHDR");
      width = get_be32(body);
      height = get_be32(body + 4);
      if (body[8] != 8) throw FormatError("png", "only 8-bit channels are supported");
      color_type = body[9];
      if (body[12] != 0) throw FormatError("png", "interlaced images are not supported");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), body, body + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_end = true;
    }
    pos += 12 + len;
  }
  if (color_type < 0 || !seen_end) throw FormatError("png", "missing IHDR or IEND");

  std::size_t channels = 0;
  switch (color_type) {
    case 0: channels = 1; break;
    case 2: channels = 3; break;
    case 4: channels = 2; break;
    case 6: channels = 4; break;
    default: throw FormatError("png", "unsupported color type " + std::to_string(color_type));
  }
  const std::size_t stride = std::size_t{width} * channels;
  uLongf raw_len = static_cast<uLongf>((stride + 1) * height);
  std::vector<std::uint8_t> raw(raw_len);
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw FormatError("png", "corrupt image data");

  std::vector<std::uint8_t> plane(stride * height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
    std::uint8_t* dst = plane.data() + y * stride;
    const std::uint8_t* prev = y > 0 ? dst - stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= channels ? dst[i - channels] : 0;
      const int b = prev ? prev[i] : 0;
      const int c = (prev && i >= channels) ? prev[i - channels] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw FormatError("png", "unknown filter type");
      }
      dst[i] = static_cast<std::uint8_t>(v);
    }
  }

  std::vector<std::uint8_t> rgb(std::size_t{width} * height * 3);
  for (std::size_t p = 0; p < std::size_t{width} * height; ++p) {
    const std::uint8_t* s = plane.data() + p * channels;
    if (channels <= 2) {
      rgb[3 * p] = rgb[3 * p + 1] = rgb[3 * p + 2] = s[0];
    } else {
      rgb[3 * p] = s[0];
      rgb[3 * p + 1] = s[1];
      rgb[3 * p + 2] = s[2];
    }
  }
  return ImageRGB(width, height, std::move(rgb));
}

inline void write(const ImageRGB& img, const std::filesystem::path& path) {
  const auto bytes = encode(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline ImageRGB read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace factorlens::png
