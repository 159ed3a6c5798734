#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factorlens/embed.hpp"
#include "factorlens/error.hpp"
#include "factorlens/factor_grid.hpp"
#include "factorlens/feature_set.hpp"
#include "factorlens/linalg.hpp"

namespace factorlens {

// Features minus their column means, in double precision.
struct CenteredFeatures {
  FactorGrid grid;
  std::string layer;
  VectorXd mean;
  RowMatrix data;  // |grid| x d

  std::size_t rows() const noexcept { return static_cast<std::size_t>(data.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(data.cols()); }
};

inline CenteredFeatures center(const FeatureSet& set) {
  const auto n = static_cast<Eigen::Index>(set.rows());
  const auto d = static_cast<Eigen::Index>(set.dim());
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> raw(set.data().data(), n, d);
  CenteredFeatures cf{set.grid(), set.layer(), {}, {}};
  cf.mean = column_reduce(set.rows(), set.dim(),
                          [&](std::size_t i, std::size_t j0, std::size_t j1, double* acc) {
                            const float* r = set.data().data() + i * set.dim();
                            for (std::size_t j = j0; j < j1; ++j) acc[j - j0] += static_cast<double>(r[j]);
                          }) /
            static_cast<double>(n);
  cf.data = raw.cast<double>();
  cf.data.rowwise() -= cf.mean.transpose();
  return cf;
}

// Level of every factor at every row, row-major (rows x factors).
inline std::vector<std::uint32_t> level_table(const FactorGrid& grid) {
  const auto n = static_cast<std::size_t>(grid.size());
  const auto N = grid.num_factors();
  std::vector<std::uint32_t> t(n * N);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < N; ++k) t[i * N + k] = static_cast<std::uint32_t>(grid.level_of(i, k));
  return t;
}

// Marginal feature of factor k: row t is the mean of the centered features
// over all grid cells whose k-th level is t, i.e. (|levels_k| / |grid|)
// times their sum.
inline RowMatrix marginal(const CenteredFeatures& cf, std::size_t k) {
  if (k >= cf.grid.num_factors()) throw KeyError("factor index " + std::to_string(k) + " out of range");
  const std::size_t levels = cf.grid.levels(k);
  const double scale = static_cast<double>(levels) / static_cast<double>(cf.rows());
  RowMatrix m(static_cast<Eigen::Index>(levels), cf.data.cols());
  for (std::size_t t = 0; t < levels; ++t) {
    const auto rows = cf.grid.slice(k, t);
    VectorXd sum = column_reduce(rows.size(), cf.dim(), [&](std::size_t i, std::size_t j0, std::size_t j1, double* acc) {
      const double* r = cf.data.data() + rows[i] * cf.dim();
      for (std::size_t j = j0; j < j1; ++j) acc[j - j0] += r[j];
    });
    m.row(static_cast<Eigen::Index>(t)) = scale * sum.transpose();
  }
  return m;
}

inline RowMatrix marginal(const CenteredFeatures& cf, const std::string& factor) {
  return marginal(cf, cf.grid.factor_index(factor));
}

struct Decomposition {
  FactorGrid grid;
  std::vector<RowMatrix> marginals;  // one |levels_k| x d matrix per factor
  RowMatrix residual;                // |grid| x d

  std::size_t dim() const noexcept { return static_cast<std::size_t>(residual.cols()); }
};

namespace detail {

// sum_k M_k(level_k) accumulated in factor order into out[0..d).
inline void expand_into(const std::vector<RowMatrix>& marginals, const std::uint32_t* levels, std::size_t j0,
                        std::size_t j1, double* out) {
  for (std::size_t j = j0; j < j1; ++j) out[j - j0] = 0.0;
  for (std::size_t k = 0; k < marginals.size(); ++k) {
    const double* m = marginals[k].data() + levels[k] * static_cast<std::size_t>(marginals[k].cols());
    for (std::size_t j = j0; j < j1; ++j) out[j - j0] += m[j];
  }
}

}  // namespace detail

// Linear-approximation feature sum_k M_k(theta_k) for a grid cell.
inline VectorXd expand(const Decomposition& dec, std::span<const std::size_t> multi_index) {
  const auto row = dec.grid.row_index(multi_index);
  std::vector<std::uint32_t> levels(dec.grid.num_factors());
  for (std::size_t k = 0; k < levels.size(); ++k) levels[k] = static_cast<std::uint32_t>(dec.grid.level_of(row, k));
  VectorXd out(static_cast<Eigen::Index>(dec.dim()));
  detail::expand_into(dec.marginals, levels.data(), 0, dec.dim(), out.data());
  return out;
}

inline VectorXd expand(const Decomposition& dec, std::initializer_list<std::size_t> multi_index) {
  return expand(dec, std::span<const std::size_t>(multi_index.begin(), multi_index.size()));
}

namespace detail {

inline std::vector<RowMatrix> all_marginals(const CenteredFeatures& cf) {
  std::vector<RowMatrix> m;
  for (std::size_t k = 0; k < cf.grid.num_factors(); ++k) m.push_back(marginal(cf, k));
  return m;
}

// Residual rows [lo, hi) into block: data - expand.
inline void residual_rows(const CenteredFeatures& cf, const std::vector<RowMatrix>& marginals,
                          const std::vector<std::uint32_t>& levels, std::size_t lo, std::size_t hi, RowMatrix& block) {
  const std::size_t d = cf.dim(), N = marginals.size();
  parallel_for(lo, hi, 64, [&](std::size_t a, std::size_t b) {
    std::vector<double> approx(d);
    for (std::size_t i = a; i < b; ++i) {
      expand_into(marginals, levels.data() + i * N, 0, d, approx.data());
      const double* src = cf.data.data() + i * d;
      double* dst = block.data() + (i - lo) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] - approx[j];
    }
  });
}

}  // namespace detail

inline Decomposition decompose(const CenteredFeatures& cf) {
  Decomposition dec{cf.grid, detail::all_marginals(cf), RowMatrix(cf.data.rows(), cf.data.cols())};
  detail::residual_rows(cf, dec.marginals, level_table(cf.grid), 0, cf.rows(), dec.residual);
  return dec;
}

struct ComponentVariance {
  std::string name;
  std::size_t n_levels = 0;
  double variance = 0.0;
  double relative_variance = 0.0;
  std::size_t intrinsic_dim = 0;  // 0 when the component has no variance or was not computed
  VectorXd per_dim;                // variance of each feature dimension
};

struct VarianceReport {
  std::string layer;
  std::uint64_t n_samples = 0;
  std::size_t dim = 0;
  double pca_threshold = 0.95;
  double total_variance = 0.0;
  std::size_t total_intrinsic_dim = 0;
  VectorXd total_per_dim;
  std::vector<ComponentVariance> factors;
  ComponentVariance residual;
  bool intrinsic_dims_computed = true;

  double relative_sum() const {
    double s = residual.relative_variance;
    for (const auto& f : factors) s += f.relative_variance;
    return s;
  }
};

struct ReportOptions {
  double pca_threshold = 0.95;
  bool intrinsic_dims = true;
};

namespace detail {

inline std::size_t dim_or_zero(const VectorXd& spectrum, double threshold) {
  if (spectrum.size() == 0 || spectrum.sum() <= 0.0) return 0;
  return intrinsic_dim(spectrum, threshold);
}

inline void fill_component(ComponentVariance& c, VectorXd per_dim, double total) {
  c.per_dim = per_dim.cwiseMax(0.0);
  c.variance = pairwise_total(c.per_dim);
  c.relative_variance = c.variance / total;
}

template <typename ResidualPerDim, typename ResidualSpectrum>
VarianceReport build_report(const CenteredFeatures& cf, const std::vector<RowMatrix>& marginals,
                            ResidualPerDim&& residual_per_dim, ResidualSpectrum&& residual_spectrum,
                            const ReportOptions& opt) {
  if (!(opt.pca_threshold > 0.0 && opt.pca_threshold <= 1.0))
    throw ParamError("PCA threshold must lie in (0, 1]");
  VarianceReport r;
  r.layer = cf.layer;
  r.n_samples = cf.grid.size();
  r.dim = cf.dim();
  r.pca_threshold = opt.pca_threshold;
  r.intrinsic_dims_computed = opt.intrinsic_dims;
  r.total_per_dim = column_mean_squares(cf.data).cwiseMax(0.0);
  r.total_variance = pairwise_total(r.total_per_dim);
  if (r.total_variance == 0.0 || negligible_variance(r.total_variance, cf.mean))
    throw DegenerateError("total variance is zero: all feature vectors are identical");

  for (std::size_t k = 0; k < marginals.size(); ++k) {
    ComponentVariance c;
    c.name = cf.grid.factor(k).name;
    c.n_levels = cf.grid.levels(k);
    // Every level carries the same multiplicity |grid|/|levels|, so the
    // weighted variance over expanded cells equals the plain level mean.
    fill_component(c, column_mean_squares(marginals[k]), r.total_variance);
    if (opt.intrinsic_dims) c.intrinsic_dim = dim_or_zero(second_moment_spectrum(marginals[k]), opt.pca_threshold);
    r.factors.push_back(std::move(c));
  }
  r.residual.name = "residual";
  r.residual.n_levels = static_cast<std::size_t>(r.n_samples);
  fill_component(r.residual, residual_per_dim(), r.total_variance);
  if (opt.intrinsic_dims) {
    r.total_intrinsic_dim = dim_or_zero(second_moment_spectrum(cf.data), opt.pca_threshold);
    r.residual.intrinsic_dim = dim_or_zero(residual_spectrum(), opt.pca_threshold);
  }
  return r;
}

}  // namespace detail

inline VarianceReport variance_report(const CenteredFeatures& cf, const Decomposition& dec,
                                      const ReportOptions& opt = {}) {
  if (dec.residual.rows() != cf.data.rows() || dec.residual.cols() != cf.data.cols() ||
      dec.marginals.size() != cf.grid.num_factors())
    throw ShapeError("decomposition does not match the centered features");
  return detail::build_report(
      cf, dec.marginals, [&] { return column_mean_squares(dec.residual); },
      [&] { return second_moment_spectrum(dec.residual); }, opt);
}

// Same report as variance_report(cf, decompose(cf)) without materializing the
// residual matrix; residual rows are regenerated on the fly.
inline VarianceReport analyze(const CenteredFeatures& cf, const ReportOptions& opt = {}) {
  const auto marginals = detail::all_marginals(cf);
  const auto levels = level_table(cf.grid);
  const std::size_t N = marginals.size(), d = cf.dim();
  auto per_dim = [&] {
    VectorXd s = column_reduce(cf.rows(), d, [&](std::size_t i, std::size_t j0, std::size_t j1, double* acc) {
      double approx[kColumnChunk];
      detail::expand_into(marginals, levels.data() + i * N, j0, j1, approx);
      const double* src = cf.data.data() + i * d;
      for (std::size_t j = j0; j < j1; ++j) {
        const double v = src[j] - approx[j - j0];
        acc[j - j0] += v * v;
      }
    });
    return VectorXd(s / static_cast<double>(cf.rows()));
  };
  auto spectrum = [&] {
    return second_moment_spectrum_streamed(cf.rows(), d, [&](std::size_t lo, std::size_t hi, RowMatrix& block) {
      detail::residual_rows(cf, marginals, levels, lo, hi, block);
    });
  };
  return detail::build_report(cf, marginals, per_dim, spectrum, opt);
}

inline nlohmann::json to_json(const VarianceReport& r) {
  auto component = [&](const ComponentVariance& c) {
    nlohmann::json j = {{"variance", c.variance}, {"relative_variance", c.relative_variance}};
    if (r.intrinsic_dims_computed) j["intrinsic_dim"] = c.intrinsic_dim;
    return j;
  };
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& f : r.factors) {
    auto j = component(f);
    j["name"] = f.name;
    j["n_levels"] = f.n_levels;
    factors.push_back(std::move(j));
  }
  nlohmann::json out = {{"layer", r.layer},
                        {"factors", std::move(factors)},
                        {"residual", component(r.residual)},
                        {"total_variance", r.total_variance},
                        {"n_samples", r.n_samples},
                        {"dim", r.dim},
                        {"pca_threshold", r.pca_threshold},
                        {"marginal_pca_weighting", "multiplicity"}};
  if (r.intrinsic_dims_computed) out["total_intrinsic_dim"] = r.total_intrinsic_dim;
  return out;
}

}  // namespace factorlens
