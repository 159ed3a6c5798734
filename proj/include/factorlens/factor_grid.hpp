#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "factorlens/error.hpp"

namespace factorlens {

// A level label. `value` and `units` are optional; e.g. an azimuth level is
// {"30", 30.0, "degrees"} and a color level is {"255,0,128", nullopt, ""}.
struct Level {
  std::string label;
  std::optional<double> value;
  std::string units;

  friend bool operator==(const Level&, const Level&) = default;
};

struct Factor {
  std::string name;
  std::vector<Level> levels;

  std::size_t size() const noexcept { return levels.size(); }
  friend bool operator==(const Factor&, const Factor&) = default;
};

// Cartesian product of factor level sets. Rows of a feature matrix aligned
// to a grid are ordered lexicographically over multi-indices with the last
// factor varying fastest.
class FactorGrid {
 public:
  FactorGrid() = default;

  explicit FactorGrid(std::vector<Factor> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw ParamError("factor grid needs at least one factor");
    std::unordered_set<std::string> names;
    for (const auto& f : factors_) {
      if (f.levels.empty()) throw ParamError("factor '" + f.name + "' has no levels");
      if (!names.insert(f.name).second) throw ParamError("duplicate factor name '" + f.name + "'");
    }
    strides_.assign(factors_.size(), 1);
    std::uint64_t total = 1;
    for (std::size_t k = factors_.size(); k-- > 0;) {
      strides_[k] = total;
      const std::uint64_t n = factors_[k].size();
      if (total > std::numeric_limits<std::uint64_t>::max() / n)
        throw ParamError("factor grid size overflows 64-bit count");
      total *= n;
    }
    size_ = total;
  }

  const std::vector<Factor>& factors() const noexcept { return factors_; }
  std::size_t num_factors() const noexcept { return factors_.size(); }
  const Factor& factor(std::size_t k) const { return factors_.at(k); }
  std::size_t levels(std::size_t k) const { return factors_.at(k).size(); }
  std::uint64_t size() const noexcept { return size_; }
  std::uint64_t stride(std::size_t k) const { return strides_.at(k); }

  std::size_t factor_index(const std::string& name) const {
    for (std::size_t k = 0; k < factors_.size(); ++k)
      if (factors_[k].name == name) return k;
    throw KeyError("unknown factor '" + name + "'");
  }

  std::uint64_t row_index(std::span<const std::size_t> multi_index) const {
    if (multi_index.size() != factors_.size())
      throw IndexError("multi-index has " + std::to_string(multi_index.size()) + " entries, grid has " +
                       std::to_string(factors_.size()) + " factors");
    std::uint64_t row = 0;
    for (std::size_t k = 0; k < factors_.size(); ++k) {
      if (multi_index[k] >= factors_[k].size())
        throw IndexError("level index " + std::to_string(multi_index[k]) + " out of range for factor '" +
                         factors_[k].name + "' (" + std::to_string(factors_[k].size()) + " levels)");
      row += multi_index[k] * strides_[k];
    }
    return row;
  }

  std::uint64_t row_index(std::initializer_list<std::size_t> multi_index) const {
    return row_index(std::span<const std::size_t>(multi_index.begin(), multi_index.size()));
  }

  std::vector<std::size_t> multi_index(std::uint64_t row) const {
    if (row >= size_) throw IndexError("row " + std::to_string(row) + " out of range");
    std::vector<std::size_t> idx(factors_.size());
    for (std::size_t k = 0; k < factors_.size(); ++k) {
      idx[k] = static_cast<std::size_t>(row / strides_[k]);
      row %= strides_[k];
    }
    return idx;
  }

  // Level of factor k at a given row.
  std::size_t level_of(std::uint64_t row, std::size_t k) const {
    return static_cast<std::size_t>((row / strides_[k]) % factors_[k].size());
  }

  // Rows with factor k at `level`, in increasing order.
  std::vector<std::uint64_t> slice(std::size_t k, std::size_t level) const {
    if (k >= factors_.size()) throw KeyError("factor index " + std::to_string(k) + " out of range");
    if (level >= factors_[k].size())
      throw IndexError("level " + std::to_string(level) + " out of range for factor '" + factors_[k].name + "'");
    const std::uint64_t stride = strides_[k];
    const std::uint64_t block = stride * factors_[k].size();
    std::vector<std::uint64_t> rows;
    rows.reserve(static_cast<std::size_t>(size_ / factors_[k].size()));
    for (std::uint64_t outer = 0; outer < size_; outer += block) {
      const std::uint64_t start = outer + level * stride;
      for (std::uint64_t j = 0; j < stride; ++j) rows.push_back(start + j);
    }
    return rows;
  }

  std::vector<std::uint64_t> slice(const std::string& factor, std::size_t level) const {
    return slice(factor_index(factor), level);
  }

  friend bool operator==(const FactorGrid& a, const FactorGrid& b) { return a.factors_ == b.factors_; }

 private:
  std::vector<Factor> factors_;
  std::vector<std::uint64_t> strides_;
  std::uint64_t size_ = 0;
};

}  // namespace factorlens
