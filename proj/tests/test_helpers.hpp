#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "factorlens/factorlens.hpp"

namespace factorlens::testing {

inline FactorGrid make_grid(const std::vector<std::size_t>& sizes) {
  std::vector<Factor> factors;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    Factor f{"f" + std::to_string(k), {}};
    for (std::size_t t = 0; t < sizes[k]; ++t) f.levels.push_back({"l" + std::to_string(t), double(t), "unitless"});
    factors.push_back(std::move(f));
  }
  return FactorGrid(std::move(factors));
}

inline FeatureSet random_set(const std::vector<std::size_t>& sizes, std::size_t d, std::uint64_t seed,
                             double offset = 0.0) {
  auto grid = make_grid(sizes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> data(grid.size() * d);
  for (auto& v : data) v = static_cast<float>(offset + normal(rng));
  return FeatureSet(grid, "random", d, std::move(data));
}

inline FeatureSet from_values(const std::vector<std::size_t>& sizes, std::size_t d, std::vector<float> values) {
  return FeatureSet(make_grid(sizes), "toy", d, std::move(values));
}

// New set in which factor k has every level repeated `times` times; cell
// (.., t, ..) of the result copies cell (.., t mod L_k, ..) of the input.
inline FeatureSet replicate_levels(const FeatureSet& set, std::size_t k, std::size_t times) {
  auto factors = set.grid().factors();
  const std::size_t L = factors[k].levels.size();
  std::vector<Level> levels;
  for (std::size_t r = 0; r < times; ++r)
    for (const auto& l : factors[k].levels) {
      Level copy = l;
      copy.label += "#" + std::to_string(r);
      levels.push_back(copy);
    }
  factors[k].levels = levels;
  FactorGrid grid(factors);
  std::vector<float> data;
  data.reserve(grid.size() * set.dim());
  for (std::uint64_t row = 0; row < grid.size(); ++row) {
    auto idx = grid.multi_index(row);
    idx[k] %= L;
    const auto src = set.row(set.grid().row_index(idx));
    data.insert(data.end(), src.begin(), src.end());
  }
  return FeatureSet(grid, set.layer(), set.dim(), std::move(data));
}

}  // namespace factorlens::testing
