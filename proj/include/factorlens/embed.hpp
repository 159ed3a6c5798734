#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "factorlens/error.hpp"
#include "factorlens/linalg.hpp"

namespace factorlens {

struct PcaModel {
  VectorXd mean;
  RowMatrix components;  // D x d, orthonormal rows, by eigenvalue descending
  VectorXd eigenvalues;  // D leading eigenvalues
  VectorXd spectrum;     // all min(n, d) eigenvalues
  double total_variance = 0.0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(components.cols()); }
  std::size_t num_components() const noexcept { return static_cast<std::size_t>(components.rows()); }
};

enum class PcaRoute { Auto, Covariance, Gram };

// Smallest D whose leading eigenvalues reach `threshold` of the total. The
// comparison is inclusive, with a 1e-12 relative allowance for rounding in
// the cumulative sum.
inline std::size_t intrinsic_dim(std::span<const double> eigenvalues, double threshold = 0.95) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ParamError("variance threshold must lie in (0, 1]");
  for (double v : eigenvalues)
    if (v < 0.0) throw ParamError("eigenvalues must be non-negative");
  const double total = pairwise_sum(eigenvalues);
  if (total <= 0.0) throw DegenerateError("all-zero spectrum has no intrinsic dimension");
  const double target = threshold * total * (1.0 - 1e-12);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    cumulative += eigenvalues[i];
    if (cumulative >= target) return i + 1;
  }
  return eigenvalues.size();
}

inline std::size_t intrinsic_dim(const VectorXd& eigenvalues, double threshold = 0.95) {
  return intrinsic_dim(std::span<const double>(eigenvalues.data(), static_cast<std::size_t>(eigenvalues.size())),
                       threshold);
}

namespace detail {

// Flip so the largest-magnitude entry (first one on ties) is positive.
inline void canonical_sign(Eigen::RowVectorXd& row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (std::abs(row[j]) > std::abs(row[best])) best = j;
  if (row[best] < 0.0) row = -row;
}

// Extends the first `have` orthonormal rows of `basis` to `want` rows using
// standard basis vectors (two rounds of Gram-Schmidt each).
inline void complete_basis(RowMatrix& basis, Eigen::Index have, Eigen::Index want) {
  const Eigen::Index d = basis.cols();
  for (Eigen::Index e = 0; e < d && have < want; ++e) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Unit(d, e);
    for (int round = 0; round < 2; ++round)
      for (Eigen::Index r = 0; r < have; ++r) v -= v.dot(basis.row(r)) * basis.row(r);
    const double norm = v.norm();
    if (norm < 1e-6) continue;
    basis.row(have++) = v / norm;
  }
}

}  // namespace detail

// PCA with population normalization 1/n. When n < d the n x n Gram matrix
// of the centered data is decomposed and components are mapped back through
// the data; otherwise the d x d covariance is decomposed directly.
inline PcaModel fit_pca(const RowMatrix& data, std::size_t n_components, PcaRoute route = PcaRoute::Auto) {
  const Eigen::Index n = data.rows(), d = data.cols();
  if (n < 2) throw ParamError("PCA needs at least 2 samples");
  const auto rank_bound = static_cast<std::size_t>(std::min(n, d));
  if (n_components < 1 || n_components > rank_bound)
    throw ParamError("requested " + std::to_string(n_components) + " components, at most " +
                     std::to_string(rank_bound) + " available");
  const auto D = static_cast<Eigen::Index>(n_components);

  PcaModel model;
  model.mean = column_means(data);
  RowMatrix centered = data.rowwise() - model.mean.transpose();
  model.total_variance = pairwise_total(column_mean_squares(centered));
  if (model.total_variance == 0.0 || negligible_variance(model.total_variance, model.mean))
    throw DegenerateError("data has zero variance");

  const bool gram = route == PcaRoute::Gram || (route == PcaRoute::Auto && n < d);
  model.components.resize(D, d);
  if (gram) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    add_xxt(g, centered, 1.0 / static_cast<double>(n));
    auto eig = symmetric_eigen(g, true);
    model.spectrum = eig.values.head(std::min(n, d)).cwiseMax(0.0);
    const double floor = 1e-12 * model.spectrum[0];
    Eigen::Index have = 0;
    for (; have < D && model.spectrum[have] > floor; ++have) {
      Eigen::RowVectorXd v = eig.vectors.col(have).transpose() * centered;
      model.components.row(have) = v / v.norm();
    }
    detail::complete_basis(model.components, have, D);
  } else {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
    add_xtx(c, centered, 1.0 / static_cast<double>(n));
    auto eig = symmetric_eigen(c, true);
    model.spectrum = eig.values.head(std::min(n, d)).cwiseMax(0.0);
    model.components = eig.vectors.leftCols(D).transpose();
  }
  for (Eigen::Index r = 0; r < D; ++r) {
    Eigen::RowVectorXd row = model.components.row(r);
    detail::canonical_sign(row);
    model.components.row(r) = row;
  }
  model.eigenvalues = model.spectrum.head(D);
  return model;
}

struct Embedding {
  RowMatrix coords;                              // n x D
  std::vector<std::string> axes;                 // "PC1".."PCD"
  std::vector<std::string> label_names;          // e.g. factor names
  std::vector<std::vector<std::string>> labels;  // per point, aligned with label_names
  std::vector<double> color_key;                 // optional, per point
};

inline Embedding project(const PcaModel& model, const RowMatrix& data) {
  if (static_cast<std::size_t>(data.cols()) != model.dim())
    throw ShapeError("data has " + std::to_string(data.cols()) + " columns, model expects " +
                     std::to_string(model.dim()));
  Embedding e;
  e.coords = (data.rowwise() - model.mean.transpose()) * model.components.transpose();
  for (std::size_t i = 1; i <= model.num_components(); ++i) e.axes.push_back("PC" + std::to_string(i));
  return e;
}

inline RowMatrix reconstruct(const PcaModel& model, const Embedding& embedding) {
  if (static_cast<std::size_t>(embedding.coords.cols()) != model.num_components())
    throw ShapeError("embedding has " + std::to_string(embedding.coords.cols()) + " coordinates, model has " +
                     std::to_string(model.num_components()) + " components");
  RowMatrix out = embedding.coords * model.components;
  out.rowwise() += model.mean.transpose();
  return out;
}

namespace detail {

inline void check_dims(const Embedding& e, std::pair<std::size_t, std::size_t> dims) {
  const auto D = static_cast<std::size_t>(e.coords.cols());
  if (dims.first < 1 || dims.first > D || dims.second < 1 || dims.second > D)
    throw ParamError("dims (" + std::to_string(dims.first) + "," + std::to_string(dims.second) +
                     ") outside 1.." + std::to_string(D));
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// HSV (h in [0,1), s = 0.85, v = 0.9) to #rrggbb.
inline std::string hue_color(double h) {
  const double s = 0.85, v = 0.9;
  h = (h - std::floor(h)) * 6.0;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    case 5: r = v; g = p; b = q; break;
    default: break;
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(r * 255)),
                static_cast<int>(std::lround(g * 255)), static_cast<int>(std::lround(b * 255)));
  return buf;
}

}  // namespace detail

// CSV: label columns, x, y (the chosen 1-based PCs), then every PC.
inline void export_scatter_csv(const Embedding& e, std::pair<std::size_t, std::size_t> dims, std::ostream& out) {
  detail::check_dims(e, dims);
  for (const auto& name : e.label_names) out << detail::csv_field(name) << ',';
  out << "x,y";
  for (const auto& a : e.axes) out << ',' << a;
  out << '\n';
  for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
    for (std::size_t l = 0; l < e.label_names.size(); ++l)
      out << detail::csv_field(l < e.labels[static_cast<std::size_t>(i)].size() ? e.labels[static_cast<std::size_t>(i)][l] : "")
          << ',';
    out << detail::fmt_double(e.coords(i, static_cast<Eigen::Index>(dims.first - 1))) << ','
        << detail::fmt_double(e.coords(i, static_cast<Eigen::Index>(dims.second - 1)));
    for (Eigen::Index j = 0; j < e.coords.cols(); ++j) out << ',' << detail::fmt_double(e.coords(i, j));
    out << '\n';
  }
}

struct SvgOptions {
  int width = 640;
  int height = 640;
  double radius = 3.0;
  double margin = 24.0;
};

// One <circle> per point; fill hue follows color_key (normalized to its
// range) when present.
inline void export_scatter_svg(const Embedding& e, std::pair<std::size_t, std::size_t> dims, std::ostream& out,
                               const SvgOptions& opt = {}) {
  detail::check_dims(e, dims);
  const auto cx = e.coords.col(static_cast<Eigen::Index>(dims.first - 1));
  const auto cy = e.coords.col(static_cast<Eigen::Index>(dims.second - 1));
  const auto span_of = [](const auto& col) {
    double lo = col.size() ? col.minCoeff() : 0.0, hi = col.size() ? col.maxCoeff() : 1.0;
    if (hi - lo <= 0.0) {
      lo -= 1.0;
      hi += 1.0;
    }
    return std::pair{lo, hi};
  };
  const auto [x_lo, x_hi] = span_of(cx);
  const auto [y_lo, y_hi] = span_of(cy);
  double k_lo = 0.0, k_hi = 1.0;
  const bool colored = e.color_key.size() == static_cast<std::size_t>(e.coords.rows()) && !e.color_key.empty();
  if (colored) {
    k_lo = *std::min_element(e.color_key.begin(), e.color_key.end());
    k_hi = *std::max_element(e.color_key.begin(), e.color_key.end());
    if (k_hi <= k_lo) k_hi = k_lo + 1.0;
  }
  const double plot_w = opt.width - 2 * opt.margin, plot_h = opt.height - 2 * opt.margin;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << opt.width << "\" height=\"" << opt.height << "\" fill=\"white\"/>\n"
      << "<text x=\"" << opt.width / 2 << "\" y=\"" << opt.height - 6 << "\" font-size=\"12\" text-anchor=\"middle\">"
      << e.axes[dims.first - 1] << "</text>\n"
      << "<text x=\"12\" y=\"" << opt.height / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 "
      << opt.height / 2 << ")\">" << e.axes[dims.second - 1] << "</text>\n";
  for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
    const double px = opt.margin + (cx[i] - x_lo) / (x_hi - x_lo) * plot_w;
    const double py = opt.margin + (1.0 - (cy[i] - y_lo) / (y_hi - y_lo)) * plot_h;
    // Hue limited to 5/6 of the wheel so the two ends stay distinguishable.
    const std::string fill =
        colored ? detail::hue_color(5.0 / 6.0 * (e.color_key[static_cast<std::size_t>(i)] - k_lo) / (k_hi - k_lo))
                : std::string("#1f77b4");
    out << "<circle cx=\"" << detail::fmt_double(px) << "\" cy=\"" << detail::fmt_double(py) << "\" r=\""
        << opt.radius << "\" fill=\"" << fill << "\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace factorlens
