#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace factorlens {

// Pairwise (cascade) summation of a scalar sequence. The reduction tree
// depends only on the length, so results are reproducible.
inline double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 8;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

// Vector-valued pairwise summation over rows [0, n_rows).
//
// add_row(i, acc) must add row i's contribution into acc[0..width). Rows are
// folded sequentially in leaf blocks of kRowBlock; block sums are merged with
// a binary-counter stack, which realises a balanced tree whose shape depends
// only on n_rows.
template <typename AddRow>
std::vector<double> pairwise_row_sum(std::size_t n_rows, std::size_t width, AddRow&& add_row) {
  constexpr std::size_t kRowBlock = 16;
  struct Partial {
    std::vector<double> sum;
    unsigned level;
  };
  std::vector<Partial> stack;
  for (std::size_t lo = 0; lo < n_rows; lo += kRowBlock) {
    const std::size_t hi = std::min(n_rows, lo + kRowBlock);
    Partial p{std::vector<double>(width, 0.0), 0};
    for (std::size_t i = lo; i < hi; ++i) add_row(i, p.sum.data());
    stack.push_back(std::move(p));
    while (stack.size() >= 2 && stack[stack.size() - 1].level == stack[stack.size() - 2].level) {
      Partial top = std::move(stack.back());
      stack.pop_back();
      auto& below = stack.back();
      for (std::size_t j = 0; j < width; ++j) below.sum[j] += top.sum[j];
      ++below.level;
    }
  }
  if (stack.empty()) return std::vector<double>(width, 0.0);
  std::vector<double> acc = std::move(stack.back().sum);
  for (std::size_t s = stack.size() - 1; s-- > 0;) {
    const auto& part = stack[s].sum;
    for (std::size_t j = 0; j < width; ++j) acc[j] = part[j] + acc[j];
  }
  return acc;
}

}  // namespace factorlens
