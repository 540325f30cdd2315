#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "dmaps/dataset.hpp"
#include "dmaps/diffusion.hpp"
#include "dmaps/error.hpp"

namespace dmaps {

// Out-of-sample extension of a fitted model. Only the stored degrees,
// training points, leading eigenvectors and eigenvalues are used; kernel
// rows are evaluated in blocks of new points against the M training points.

enum class NystromScaling {
  asymptotic,     // N/M -> 0 form: lambda unchanged, no prefactor
  finite_sample,  // sqrt(M/(N+M)) eigenvector prefactor, (N+M)/M eigenvalue factor
};

// Smallest |lambda| accepted as a divisor.
inline constexpr double kEigenvalueFloor = 1e-12;

namespace detail {

inline Eigen::RowVectorXd kernel_row(const DiffusionModel& model,
                                     const Eigen::Ref<const Eigen::RowVectorXd>& a) {
  const auto& points = model.train_points.points;
  if (a.size() != points.cols()) throw DataError("point dimension does not match the model");
  const double scale = 1.0 / (2.0 * model.config.sigma * model.config.sigma);
  Eigen::RowVectorXd row(points.rows());
  for (Eigen::Index k = 0; k < points.rows(); ++k) {
    row(k) = std::exp(-squared_distance(a, points.row(k)) * scale);
  }
  return row;
}

inline double sum_of(const Eigen::RowVectorXd& v) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k) s += v(k);
  return s;
}

// Row of K~^(alpha)(a, x_k) over the training sample, plus its sum. The
// empirical means of the defining formula appear here as sums: the 1/M
// factors cancel against the M^(2 alpha) normalization.
struct AlphaRow {
  Eigen::RowVectorXd values;
  double degree = 0.0;  // sum_k K~^(alpha)(a, x_k)
};

inline AlphaRow alpha_row(const DiffusionModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& a) {
  AlphaRow out;
  out.values = kernel_row(model, a);
  const double alpha = model.config.alpha;
  if (alpha != 0.0) {
    const double deg_a = sum_of(out.values);
    if (!(deg_a > 0.0)) throw NumericalError("new point has zero kernel mass on the training sample");
    const double scale_a = std::pow(deg_a, -alpha);
    for (Eigen::Index k = 0; k < out.values.size(); ++k) {
      out.values(k) *= scale_a * std::pow(model.deg_kernel(k), -alpha);
    }
  }
  out.degree = sum_of(out.values);
  return out;
}

inline double kernel_alpha_at(const DiffusionModel& model,
                              const Eigen::Ref<const Eigen::RowVectorXd>& a,
                              const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double scale = 1.0 / (2.0 * model.config.sigma * model.config.sigma);
  const double k_ab = std::exp(-squared_distance(a, b) * scale);
  const double alpha = model.config.alpha;
  if (alpha == 0.0) return k_ab;
  const double mean_a = sum_of(kernel_row(model, a)) / static_cast<double>(model.size());
  const double mean_b = sum_of(kernel_row(model, b)) / static_cast<double>(model.size());
  const double m = static_cast<double>(model.size());
  return k_ab / (std::pow(m, 2.0 * alpha) * std::pow(mean_a, alpha) * std::pow(mean_b, alpha));
}

}  // namespace detail

/// Approximates K^(alpha)(a, b) with degrees estimated on the training sample.
inline double kernel_alpha_approx(const DiffusionModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& a,
                                  const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  return detail::kernel_alpha_at(model, a, b);
}

/// Approximates A(a, b); equals A_ij for training points a = x_i, b = x_j.
inline double a_approx(const DiffusionModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& a,
                       const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double m = static_cast<double>(model.size());
  const double mean_a = detail::alpha_row(model, a).degree / m;
  const double mean_b = detail::alpha_row(model, b).degree / m;
  return kernel_alpha_approx(model, a, b) / (m * std::sqrt(mean_a * mean_b));
}

/// Rows of A~(x, x_k) for every new point x (N x M). Memory is N x M.
inline Eigen::MatrixXd a_approx_rows(const DiffusionModel& model, const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  const Eigen::Index m = model.size();
  const Eigen::VectorXd inv_sqrt_deg = model.deg_weight.array().sqrt().inverse();
  Eigen::MatrixXd rows(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto alpha = detail::alpha_row(model, points.row(i));
    if (!(alpha.degree > 0.0)) {
      throw NumericalError("new point " + std::to_string(i) + " has zero kernel mass on the training sample");
    }
    const double inv_sqrt_a = 1.0 / std::sqrt(alpha.degree);
    for (Eigen::Index k = 0; k < m; ++k) rows(i, k) = alpha.values(k) * (inv_sqrt_a * inv_sqrt_deg(k));
  }
  return rows;
}

/// Extended phi_1 .. phi_{d+1} at the new points (N x (d+1)).
inline Eigen::MatrixXd extend_eigenvectors(const DiffusionModel& model, const DataMatrix& new_points,
                                           NystromScaling scaling = NystromScaling::asymptotic) {
  const auto cols = static_cast<Eigen::Index>(model.d) + 1;
  if (model.eigen.vectors.cols() < cols) throw UsageError("model holds too few eigenvectors");
  if (new_points.rows() == 0) return Eigen::MatrixXd(0, cols);
  if (new_points.dims() != model.train_points.dims()) {
    throw DataError("new points have " + std::to_string(new_points.dims()) +
                    " columns, model expects " + std::to_string(model.train_points.dims()));
  }
  require_finite(new_points, "new points");
  for (Eigen::Index l = 0; l < cols; ++l) {
    if (std::abs(model.eigen.values(l)) < kEigenvalueFloor) {
      throw NumericalError("ill-conditioned extension: |lambda_" + std::to_string(l + 1) +
                           "| < 1e-12");
    }
  }

  const Eigen::VectorXd inv_lambda = model.eigen.values.head(cols).array().inverse();
  const Eigen::MatrixXd basis = model.eigen.vectors.leftCols(cols);
  Eigen::MatrixXd out(new_points.rows(), cols);
  constexpr Eigen::Index block = 256;
  for (Eigen::Index start = 0; start < new_points.rows(); start += block) {
    const Eigen::Index len = std::min(block, new_points.rows() - start);
    const Eigen::MatrixXd rows = a_approx_rows(model, new_points.points.middleRows(start, len));
    out.middleRows(start, len) = (rows * basis) * inv_lambda.asDiagonal();
  }
  if (scaling == NystromScaling::finite_sample) {
    const double m = static_cast<double>(model.size());
    out *= std::sqrt(m / (m + static_cast<double>(new_points.rows())));
  }
  return out;
}

/// Eigenvalue estimates for the sample extended by n_new points.
inline Eigen::VectorXd extend_eigenvalues(const DiffusionModel& model, Eigen::Index n_new,
                                          NystromScaling scaling = NystromScaling::asymptotic) {
  const auto cols = static_cast<Eigen::Index>(model.d) + 1;
  Eigen::VectorXd values = model.eigen.values.head(cols);
  if (scaling == NystromScaling::finite_sample) {
    const double m = static_cast<double>(model.size());
    values *= (m + static_cast<double>(n_new)) / m;
  }
  return values;
}

/// Diffusion coordinates of new points, with pi at the new points taken
/// from the extended phi_1 (pi = phi_1^2).
inline Embedding extend_embedding(const DiffusionModel& model, const DataMatrix& new_points) {
  const auto d = static_cast<Eigen::Index>(model.d);
  const int t = model.config.t;
  Embedding out;
  out.t = t;
  out.eigenvalues_used = model.eigen.values.segment(1, d);
  const Eigen::MatrixXd phi = extend_eigenvectors(model, new_points);
  out.coords.resize(phi.rows(), d);
  for (Eigen::Index k = 0; k < phi.rows(); ++k) {
    if (!(phi(k, 0) > 0.0)) {
      throw NumericalError("extension-domain error: extended phi_1 <= 0 at new point " +
                           std::to_string(k) + " (too far from the training sample)");
    }
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    const double scale = std::pow(model.eigen.values(j + 1), t);
    for (Eigen::Index k = 0; k < phi.rows(); ++k) out.coords(k, j) = scale * phi(k, j + 1) / phi(k, 0);
  }
  return out;
}

}  // namespace dmaps
