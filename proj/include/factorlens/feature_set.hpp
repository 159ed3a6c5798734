#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "factorlens/error.hpp"
#include "factorlens/factor_grid.hpp"

namespace factorlens {

// Provenance record stored alongside a feature matrix. Keys not modelled
// here are kept in `extra` and written back unchanged.
struct Manifest {
  std::string extractor;
  std::optional<std::uint64_t> seed;
  nlohmann::json recipe;  // stimulus recipe, null when unknown
  std::string notes;
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// Immutable |grid| x dim float32 matrix aligned to a factor grid.
class FeatureSet {
 public:
  FeatureSet() = default;

  FeatureSet(FactorGrid grid, std::string layer, std::size_t dim, std::vector<float> data, Manifest manifest = {})
      : grid_(std::move(grid)),
        layer_(std::move(layer)),
        dim_(dim),
        data_(std::move(data)),
        manifest_(std::move(manifest)) {
    if (dim_ == 0) throw ShapeError("feature dimension must be positive");
    if (data_.size() / dim_ != grid_.size() || data_.size() % dim_ != 0)
      throw ShapeError("feature matrix has " + std::to_string(data_.size()) + " values, expected " +
                       std::to_string(grid_.size()) + " x " + std::to_string(dim_));
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i]))
        throw ShapeError("non-finite feature value at row " + std::to_string(i / dim_) + ", column " +
                         std::to_string(i % dim_));
  }

  const FactorGrid& grid() const noexcept { return grid_; }
  const std::string& layer() const noexcept { return layer_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return static_cast<std::size_t>(grid_.size()); }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t i) const { return std::span<const float>(data_).subspan(i * dim_, dim_); }
  const Manifest& manifest() const noexcept { return manifest_; }

  std::vector<std::uint64_t> slice(const std::string& factor, std::size_t level) const {
    return grid_.slice(factor, level);
  }

 private:
  FactorGrid grid_;
  std::string layer_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  Manifest manifest_;
};

// JSON form of a grid: {factors:[{name, levels:[{label, value?, units?}]}]}.
inline nlohmann::json grid_to_json(const FactorGrid& grid) {
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& f : grid.factors()) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : f.levels) {
      nlohmann::json lj = {{"label", l.label}};
      if (l.value) lj["value"] = *l.value;
      if (!l.units.empty()) lj["units"] = l.units;
      levels.push_back(std::move(lj));
    }
    factors.push_back({{"name", f.name}, {"levels", std::move(levels)}});
  }
  return {{"factors", std::move(factors)}};
}

inline FactorGrid grid_from_json(const nlohmann::json& j) {
  std::vector<Factor> factors;
  for (const auto& fj : j.at("factors")) {
    Factor f;
    f.name = fj.at("name").get<std::string>();
    for (const auto& lj : fj.at("levels")) {
      Level l;
      l.label = lj.at("label").get<std::string>();
      if (lj.contains("value") && !lj["value"].is_null()) l.value = lj["value"].get<double>();
      if (lj.contains("units")) l.units = lj["units"].get<std::string>();
      f.levels.push_back(std::move(l));
    }
    factors.push_back(std::move(f));
  }
  return FactorGrid(std::move(factors));
}

}  // namespace factorlens
