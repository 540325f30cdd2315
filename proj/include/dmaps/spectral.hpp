#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dmaps/error.hpp"

// Lets translation units assert that they do not depend on the eigensolver.
#define DMAPS_SPECTRAL_INCLUDED 1

namespace dmaps {

/// Eigenpairs of a symmetric matrix, values descending, unit-norm columns.
/// Each column is signed so that its largest-magnitude entry (first one on
/// ties) is positive. `vectors` may hold fewer columns than `values` when
/// loaded from a truncated model file.
struct EigenSystem {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

inline double symmetry_defect(const Eigen::MatrixXd& a) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
      worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
    }
  }
  return worst;
}

inline void apply_sign_convention(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      const double v = std::abs(vectors(r, c));
      if (v > best_abs) {
        best_abs = v;
        best = r;
      }
    }
    if (vectors(best, c) < 0.0) vectors.col(c) = -vectors.col(c);
  }
}

inline EigenSystem eig_symmetric(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw NumericalError("eigendecomposition needs a square matrix");
  if (a.rows() == 0) return {};
  if (!a.allFinite()) throw NumericalError("eigendecomposition input is not finite");
  const double defect = symmetry_defect(a);
  if (defect > 1e-10) {
    std::ostringstream msg;
    msg << "matrix is not symmetric (max |a_ij - a_ji| = " << defect << ")";
    throw NumericalError(msg.str());
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "symmetric eigensolver did not converge within "
        << Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>::m_maxIterations * a.rows()
        << " iterations";
    throw ConvergenceError(msg.str());
  }

  // The solver returns ascending order.
  const Eigen::Index n = a.rows();
  EigenSystem out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  for (Eigen::Index c = 0; c < n; ++c) out.vectors.col(c).normalize();
  apply_sign_convention(out.vectors);
  return out;
}

/// A^two_t by binary exponentiation; two_t must be even and >= 2.
inline Eigen::MatrixXd matrix_power_even(const Eigen::MatrixXd& a, long two_t) {
  if (two_t < 2 || two_t % 2 != 0) throw UsageError("exponent must be even and >= 2");
  if (a.rows() != a.cols()) throw NumericalError("matrix power needs a square matrix");

  Eigen::MatrixXd base = a;
  Eigen::MatrixXd result;
  bool have_result = false;
  for (long e = two_t; e > 0; e >>= 1) {
    if (e & 1) {
      if (have_result) {
        result = (result * base).eval();
      } else {
        result = base;
        have_result = true;
      }
    }
    if (e > 1) base = (base * base).eval();
  }
  // Powers of a symmetric matrix are symmetric; drop rounding asymmetry.
  return 0.5 * (result + result.transpose());
}

struct DimensionSelection {
  std::size_t d = 1;
  std::vector<double> curve;  // curve[k] is the log-likelihood for d = k + 1
};

// Floor on the pooled variance of the likelihood fit.
inline constexpr double kVarianceFloor = 1e-30;

/// Profile log-likelihood of splitting x (already powered and sorted) after
/// its first d entries, as two Gaussians with separate means and one pooled
/// maximum-likelihood variance. d == size leaves the second group empty.
inline double split_log_likelihood(const std::vector<double>& x, std::size_t d) {
  const std::size_t n = x.size();
  auto mean_of = [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += x[i];
    return hi > lo ? s / static_cast<double>(hi - lo) : 0.0;
  };
  const double mean1 = mean_of(0, d);
  const double mean2 = mean_of(d, n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = x[i] - (i < d ? mean1 : mean2);
    ss += diff * diff;
  }
  const double variance = std::max(ss / static_cast<double>(n), kVarianceFloor);
  const double nn = static_cast<double>(n);
  return -0.5 * nn * std::log(2.0 * std::numbers::pi * variance) - 0.5 * ss / variance;
}

/// Chooses the embedding dimension from the non-trivial eigenvalues
/// (descending, lambda_1 = 1 already removed), each raised to t. Ties go to
/// the smallest d.
inline DimensionSelection select_dimension(const Eigen::VectorXd& values, int t,
                                           std::size_t max_d) {
  if (values.size() < 3) throw NumericalError("dimension selection needs >= 3 eigenvalues");
  if (t < 1) throw UsageError("diffusion time t must be >= 1");
  if (max_d < 1 || max_d > static_cast<std::size_t>(values.size())) {
    throw UsageError("max_d must lie in [1, number of eigenvalues]");
  }
  std::vector<double> powered(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    powered[static_cast<std::size_t>(i)] = std::pow(values(i), t);
  }

  DimensionSelection out;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t d = 1; d <= max_d; ++d) {
    const double ll = split_log_likelihood(powered, d);
    out.curve.push_back(ll);
    if (ll > best) {
      best = ll;
      out.d = d;
    }
  }
  return out;
}

}  // namespace dmaps
