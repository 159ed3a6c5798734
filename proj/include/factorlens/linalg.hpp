#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "factorlens/error.hpp"
#include "factorlens/parallel.hpp"
#include "factorlens/summation.hpp"

namespace factorlens {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::VectorXd;

struct SymmetricEigen {
  VectorXd values;         // descending
  Eigen::MatrixXd vectors;  // column i pairs with values[i]; empty when not requested
};

inline constexpr std::size_t kJacobiMaxSize = 64;

// Cyclic Jacobi rotations. Converges when the off-diagonal Frobenius norm
// falls below 1e-15 * ||A||_F; more than 100 sweeps is reported as failure.
inline SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, bool want_vectors = true) {
  const auto n = input.rows();
  if (input.cols() != n) throw ShapeError("eigen-solve needs a square matrix");
  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double norm = a.norm();
  bool converged = norm == 0.0;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(2.0 * off) <= 1e-15 * norm) {
      converged = true;
      break;
    }
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  if (!converged) throw Error("Jacobi eigen-solve did not converge in 100 sweeps");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  if (want_vectors) out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    if (want_vectors) out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

// Symmetric eigendecomposition, eigenvalues descending. Matrices up to 64x64
// use Jacobi; larger ones use Eigen's Householder tridiagonalization followed
// by implicit symmetric QR, whose non-convergence is raised as an error.
// Only the lower triangle of `m` is read on the large path.
inline SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& m, bool want_vectors = true) {
  if (m.rows() != m.cols()) throw ShapeError("eigen-solve needs a square matrix");
  if (static_cast<std::size_t>(m.rows()) <= kJacobiMaxSize) {
    Eigen::MatrixXd full = m.selfadjointView<Eigen::Lower>();
    return jacobi_eigen(full, want_vectors);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, want_vectors ? Eigen::ComputeEigenvectors
                                                                        : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("symmetric eigen-solve did not converge");
  // Eigen returns ascending order.
  SymmetricEigen out;
  out.values = solver.eigenvalues().reverse();
  if (want_vectors) out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

inline constexpr std::size_t kColumnChunk = 512;

// Per-column pairwise reduction over rows. add(i, j0, j1, acc) adds the
// contribution of row i, columns [j0, j1), into acc[0 .. j1 - j0). Columns
// are processed in fixed chunks, so results do not depend on the thread count.
template <typename AddRow>
VectorXd column_reduce(std::size_t n_rows, std::size_t n_cols, AddRow&& add) {
  VectorXd out(static_cast<Eigen::Index>(n_cols));
  const std::size_t chunks = (n_cols + kColumnChunk - 1) / kColumnChunk;
  parallel_for(0, chunks, 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const std::size_t j0 = c * kColumnChunk;
      const std::size_t j1 = std::min(n_cols, j0 + kColumnChunk);
      auto sum = pairwise_row_sum(n_rows, j1 - j0, [&](std::size_t i, double* acc) { add(i, j0, j1, acc); });
      for (std::size_t j = j0; j < j1; ++j) out[static_cast<Eigen::Index>(j)] = sum[j - j0];
    }
  });
  return out;
}

template <typename Derived>
VectorXd column_means(const Eigen::MatrixBase<Derived>& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  VectorXd s = column_reduce(n, static_cast<std::size_t>(x.cols()), [&](std::size_t i, std::size_t j0, std::size_t j1, double* acc) {
    for (std::size_t j = j0; j < j1; ++j) acc[j - j0] += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  });
  return s / static_cast<double>(n);
}

// (1/n) sum_i x(i,j)^2 per column.
template <typename Derived>
VectorXd column_mean_squares(const Eigen::MatrixBase<Derived>& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  VectorXd s = column_reduce(n, static_cast<std::size_t>(x.cols()), [&](std::size_t i, std::size_t j0, std::size_t j1, double* acc) {
    for (std::size_t j = j0; j < j1; ++j) {
      const double v = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      acc[j - j0] += v * v;
    }
  });
  return s / static_cast<double>(n);
}

inline double pairwise_total(const VectorXd& v) { return pairwise_sum({v.data(), static_cast<std::size_t>(v.size())}); }

// True when a variance is indistinguishable from rounding noise on data
// whose column means are `mean`.
inline bool negligible_variance(double total_variance, const VectorXd& mean) {
  constexpr double kRel = 64.0 * 2.220446049250313e-16;
  return total_variance <= kRel * kRel * mean.squaredNorm();
}

// m += alpha * x^T x, lower triangle only. m is d x d.
inline void add_xtx(Eigen::MatrixXd& m, const RowMatrix& x, double alpha) {
  m.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), alpha);
}

// m += alpha * x x^T, lower triangle only. m is n x n.
inline void add_xxt(Eigen::MatrixXd& m, const RowMatrix& x, double alpha) {
  m.selfadjointView<Eigen::Lower>().rankUpdate(x, alpha);
}

// Eigenvalues (descending, clamped at 0) of the second-moment matrix
// (1/n) X^T X of the rows of x, without centering. Uses the n x n Gram
// matrix when n < d; the non-zero spectrum is identical. Length min(n, d).
inline VectorXd second_moment_spectrum(const RowMatrix& x) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::MatrixXd m;
  if (n < d) {
    m = Eigen::MatrixXd::Zero(n, n);
    add_xxt(m, x, 1.0 / static_cast<double>(n));
  } else {
    m = Eigen::MatrixXd::Zero(d, d);
    add_xtx(m, x, 1.0 / static_cast<double>(n));
  }
  VectorXd values = symmetric_eigen(m, false).values;
  return values.cwiseMax(0.0);
}

// Same as above, with rows produced in blocks by fill(lo, hi, block) so
// that the full matrix never needs to exist (used when n >= d).
template <typename FillBlock>
VectorXd second_moment_spectrum_streamed(std::size_t n, std::size_t d, FillBlock&& fill) {
  constexpr std::size_t kBlock = 1024;
  if (n < d) {
    RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    fill(0, n, x);
    return second_moment_spectrum(x);
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  RowMatrix block;
  for (std::size_t lo = 0; lo < n; lo += kBlock) {
    const std::size_t hi = std::min(n, lo + kBlock);
    block.resize(static_cast<Eigen::Index>(hi - lo), static_cast<Eigen::Index>(d));
    fill(lo, hi, block);
    add_xtx(m, block, 1.0 / static_cast<double>(n));
  }
  VectorXd values = symmetric_eigen(m, false).values;
  return values.cwiseMax(0.0);
}

}  // namespace factorlens
