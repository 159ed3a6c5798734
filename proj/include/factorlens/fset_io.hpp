#pragma once

// .fset container (all integers little-endian):
//   "FSET" | u32 version (=1) | u64 manifest length | manifest JSON (UTF-8)
//   | rows*dim float32 payload | u32 CRC32 of the payload bytes

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "factorlens/error.hpp"
#include "factorlens/feature_set.hpp"

namespace factorlens {

inline constexpr std::uint32_t kFsetVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "fset I/O assumes a little-endian host");

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for payloads above 4 GiB.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

inline const char* kKnownKeys[] = {"grid", "layer", "dim", "extractor", "seed", "recipe", "notes"};

}  // namespace detail

inline nlohmann::json manifest_json(const FeatureSet& set) {
  nlohmann::json j = set.manifest().extra.is_object() ? set.manifest().extra : nlohmann::json::object();
  j["grid"] = grid_to_json(set.grid());
  j["layer"] = set.layer();
  j["dim"] = set.dim();
  j["extractor"] = set.manifest().extractor;
  j["seed"] = set.manifest().seed ? nlohmann::json(*set.manifest().seed) : nlohmann::json(nullptr);
  j["recipe"] = set.manifest().recipe;
  j["notes"] = set.manifest().notes;
  return j;
}

inline std::vector<std::uint8_t> encode_fset(const FeatureSet& set) {
  const std::string manifest = manifest_json(set).dump();
  const auto payload = std::as_bytes(set.data());
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 + 8 + manifest.size() + payload.size() + 4);
  out.insert(out.end(), {'F', 'S', 'E', 'T'});
  detail::put_le<std::uint32_t>(out, kFsetVersion);
  detail::put_le<std::uint64_t>(out, manifest.size());
  out.insert(out.end(), manifest.begin(), manifest.end());
  const auto* p = reinterpret_cast<const std::uint8_t*>(payload.data());
  out.insert(out.end(), p, p + payload.size());
  detail::put_le<std::uint32_t>(out, detail::crc32_of({p, payload.size()}));
  return out;
}

inline FeatureSet decode_fset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError("magic", "file too short for header");
  if (std::memcmp(bytes.data(), "FSET", 4) != 0) throw FormatError("magic", "expected 'FSET'");
  const auto version = detail::get_le<std::uint32_t>(bytes, 4);
  if (version != kFsetVersion) throw FormatError("version", "unsupported version " + std::to_string(version));
  const auto manifest_len = detail::get_le<std::uint64_t>(bytes, 8);
  if (manifest_len > bytes.size() - 16) throw FormatError("manifest", "manifest length exceeds file size");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", e.what());
  }
  if (!j.is_object()) throw FormatError("manifest", "manifest is not a JSON object");

  FactorGrid grid;
  try {
    grid = grid_from_json(j.at("grid"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("grid", e.what());
  } catch (const Error& e) {
    throw FormatError("grid", e.what());
  }
  if (!j.contains("layer") || !j["layer"].is_string()) throw FormatError("layer", "missing layer label");
  if (!j.contains("dim") || !j["dim"].is_number_unsigned()) throw FormatError("dim", "missing or invalid dim");
  const std::uint64_t dim = j["dim"].get<std::uint64_t>();
  if (dim == 0) throw FormatError("dim", "dimension must be positive");

  Manifest m;
  try {
    if (j.contains("extractor") && !j["extractor"].is_null()) m.extractor = j["extractor"].get<std::string>();
    if (j.contains("seed") && !j["seed"].is_null()) m.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("recipe")) m.recipe = j["recipe"];
    if (j.contains("notes") && !j["notes"].is_null()) m.notes = j["notes"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", e.what());
  }
  m.extra = j;
  for (const char* key : detail::kKnownKeys) m.extra.erase(key);

  const std::uint64_t rows = grid.size();
  if (rows > 0 && dim > (std::numeric_limits<std::uint64_t>::max() / 4) / rows)
    throw FormatError("dim", "payload size overflows");
  const std::uint64_t payload_len = rows * dim * 4;
  const std::uint64_t remaining = bytes.size() - 16 - manifest_len;
  if (remaining != payload_len + 4)
    throw FormatError("payload", "expected " + std::to_string(payload_len) + " payload bytes + CRC, found " +
                                     std::to_string(remaining) + " bytes");

  const auto payload = bytes.subspan(16 + manifest_len, payload_len);
  const auto stored_crc = detail::get_le<std::uint32_t>(bytes, 16 + manifest_len + payload_len);
  if (detail::crc32_of(payload) != stored_crc) throw FormatError("crc", "payload checksum mismatch");

  std::vector<float> data(rows * dim);
  std::memcpy(data.data(), payload.data(), payload_len);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!std::isfinite(data[i])) throw FormatError("payload", "non-finite value at index " + std::to_string(i));

  return FeatureSet(std::move(grid), j["layer"].get<std::string>(), dim, std::move(data), std::move(m));
}

inline void save(const FeatureSet& set, const std::filesystem::path& path) {
  const auto bytes = encode_fset(set);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline FeatureSet load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_fset(bytes);
}

}  // namespace factorlens
