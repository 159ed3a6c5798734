#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "factorlens/embed.hpp"
#include "factorlens/error.hpp"
#include "factorlens/feature_set.hpp"
#include "factorlens/linalg.hpp"

namespace factorlens {

struct ViewMeta {
  std::string model_id;
  std::optional<double> azimuth_deg;
  std::optional<double> elevation_deg;

  friend bool operator==(const ViewMeta&, const ViewMeta&) = default;
};

struct Match {
  std::size_t row = 0;
  double score = 0.0;
  ViewMeta meta;
};

struct IndexOptions {
  std::size_t target_dim = 1000;
  bool normalize = false;        // L2-normalize reduced vectors (index rows and queries)
  bool require_azimuth = false;  // orientation evaluation will be requested
};

// PCA-reduced feature index searched exhaustively by dot product.
struct RetrievalIndex {
  PcaModel pca;
  RowMatrix reduced;  // n x D
  std::vector<ViewMeta> meta;
  bool normalized = false;

  std::size_t size() const noexcept { return static_cast<std::size_t>(reduced.rows()); }
  std::size_t reduced_dim() const noexcept { return static_cast<std::size_t>(reduced.cols()); }
  std::size_t input_dim() const noexcept { return pca.dim(); }
};

inline RowMatrix to_matrix(const FeatureSet& set) {
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> raw(
      set.data().data(), static_cast<Eigen::Index>(set.rows()), static_cast<Eigen::Index>(set.dim()));
  return raw.cast<double>();
}

namespace detail {

inline void normalize_rows(RowMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm > 0.0) m.row(i) /= norm;
  }
}

}  // namespace detail

inline RetrievalIndex build_index(const RowMatrix& features, std::vector<ViewMeta> meta, const IndexOptions& opt = {}) {
  const auto n = static_cast<std::size_t>(features.rows());
  const auto d = static_cast<std::size_t>(features.cols());
  if (n < 2) throw ParamError("retrieval index needs at least 2 rows");
  if (meta.size() != n)
    throw ShapeError("metadata has " + std::to_string(meta.size()) + " rows, features have " + std::to_string(n));
  if (opt.require_azimuth)
    for (std::size_t i = 0; i < n; ++i)
      if (!meta[i].azimuth_deg) throw MetaError("row " + std::to_string(i) + " has no azimuth");
  if (opt.target_dim < 1) throw ParamError("target dimension must be >= 1");
  RetrievalIndex index;
  index.pca = fit_pca(features, std::min({opt.target_dim, n, d}));
  index.reduced = project(index.pca, features).coords;
  index.normalized = opt.normalize;
  if (opt.normalize) detail::normalize_rows(index.reduced);
  index.meta = std::move(meta);
  return index;
}

inline RetrievalIndex build_index(const FeatureSet& set, std::vector<ViewMeta> meta, const IndexOptions& opt = {}) {
  return build_index(to_matrix(set), std::move(meta), opt);
}

// Exact top-k by dot product in the reduced space; ties go to the lower row.
inline std::vector<Match> query(const RetrievalIndex& index, std::span<const double> feature, std::size_t k) {
  if (k < 1) throw ParamError("k must be >= 1");
  if (feature.size() != index.input_dim())
    throw ShapeError("query has dimension " + std::to_string(feature.size()) + ", index expects " +
                     std::to_string(index.input_dim()));
  Eigen::Map<const VectorXd> f(feature.data(), static_cast<Eigen::Index>(feature.size()));
  VectorXd z = index.pca.components * (f - index.pca.mean);
  if (index.normalized && z.norm() > 0.0) z /= z.norm();
  const VectorXd scores = index.reduced * z;

  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t top = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = scores[static_cast<Eigen::Index>(a)], sb = scores[static_cast<Eigen::Index>(b)];
                      return sa > sb || (sa == sb && a < b);
                    });
  std::vector<Match> out;
  out.reserve(top);
  for (std::size_t i = 0; i < top; ++i)
    out.push_back({order[i], scores[static_cast<Eigen::Index>(order[i])], index.meta[order[i]]});
  return out;
}

inline std::vector<Match> query(const RetrievalIndex& index, const VectorXd& feature, std::size_t k) {
  return query(index, std::span<const double>(feature.data(), static_cast<std::size_t>(feature.size())), k);
}

// Circular azimuth difference in [0, 180].
inline double orientation_error(double a_deg, double b_deg) {
  const double diff = std::fmod(std::abs(a_deg - b_deg), 360.0);
  return std::min(diff, 360.0 - diff);
}

// Fraction of queries whose predicted azimuth is strictly within threshold.
inline double eval_orientation(std::span<const double> predicted_deg, std::span<const double> truth_deg,
                               double threshold_deg = 20.0) {
  if (predicted_deg.empty()) throw ParamError("no queries to evaluate");
  if (predicted_deg.size() != truth_deg.size()) throw ShapeError("prediction and truth counts differ");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted_deg.size(); ++i)
    if (orientation_error(predicted_deg[i], truth_deg[i]) < threshold_deg) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted_deg.size());
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

inline std::string exact_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::optional<double> parse_optional_double(const std::string& s, std::size_t line_no) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw MetaError("line " + std::to_string(line_no) + ": invalid number '" + s + "'");
  }
}

}  // namespace detail

// CSV with header "row,model_id,azimuth_deg,elevation_deg". Every row
// 0..n-1 must appear exactly once; empty angle fields are allowed.
inline std::vector<ViewMeta> parse_metadata_csv(std::istream& in, std::size_t expected_rows) {
  std::string line;
  if (!std::getline(in, line)) throw MetaError("metadata CSV is empty");
  const auto header = detail::split_csv_line(line);
  const std::vector<std::string> want = {"row", "model_id", "azimuth_deg", "elevation_deg"};
  if (header != want) throw MetaError("metadata header must be row,model_id,azimuth_deg,elevation_deg");
  std::vector<ViewMeta> meta(expected_rows);
  std::vector<bool> seen(expected_rows, false);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4) throw MetaError("line " + std::to_string(line_no) + ": expected 4 fields");
    std::size_t row = 0;
    try {
      std::size_t used = 0;
      row = static_cast<std::size_t>(std::stoull(f[0], &used));
      if (used != f[0].size()) throw std::invalid_argument(f[0]);
    } catch (const std::exception&) {
      throw MetaError("line " + std::to_string(line_no) + ": invalid row '" + f[0] + "'");
    }
    if (row >= expected_rows) throw MetaError("line " + std::to_string(line_no) + ": row out of range");
    if (seen[row]) throw MetaError("line " + std::to_string(line_no) + ": duplicate row " + f[0]);
    seen[row] = true;
    meta[row] = {f[1], detail::parse_optional_double(f[2], line_no), detail::parse_optional_double(f[3], line_no)};
  }
  for (std::size_t i = 0; i < expected_rows; ++i)
    if (!seen[i]) throw MetaError("metadata is missing row " + std::to_string(i));
  return meta;
}

inline std::vector<ViewMeta> read_metadata_csv(const std::filesystem::path& path, std::size_t expected_rows) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metadata '" + path.string() + "'");
  return parse_metadata_csv(in, expected_rows);
}

inline void write_metadata_csv(std::ostream& out, const std::vector<ViewMeta>& meta) {
  out << "row,model_id,azimuth_deg,elevation_deg\n";
  for (std::size_t i = 0; i < meta.size(); ++i) {
    out << i << ',' << detail::csv_field(meta[i].model_id) << ',';
    if (meta[i].azimuth_deg) out << detail::exact_double(*meta[i].azimuth_deg);
    out << ',';
    if (meta[i].elevation_deg) out << detail::exact_double(*meta[i].elevation_deg);
    out << '\n';
  }
}

}  // namespace factorlens
