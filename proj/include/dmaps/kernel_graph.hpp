#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dmaps/dataset.hpp"
#include "dmaps/error.hpp"

namespace dmaps {

struct KernelConfig {
  double quantile = 0.05;  // bandwidth selector, used when sigma is unset
  double sigma = 0.0;      // Gaussian bandwidth; <= 0 means "derive from quantile"
  double alpha = 1.0;      // density-normalization exponent
  int t = 1;               // diffusion time (random-walk steps)
};

inline void validate(const KernelConfig& config) {
  if (!(config.quantile >= 0.0 && config.quantile <= 1.0)) {
    throw UsageError("quantile must lie in [0, 1]");
  }
  if (config.t < 1) throw UsageError("diffusion time t must be >= 1");
  if (!std::isfinite(config.alpha)) throw UsageError("alpha must be finite");
  if (!std::isfinite(config.sigma)) throw UsageError("sigma must be finite");
}

/// Linear interpolation between order statistics (R's type 7).
/// `values` is reordered in place.
inline double quantile_type7(std::vector<double>& values, double q) {
  if (values.empty()) throw DataError("quantile of an empty list");
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double lo_value = values[lo];
  if (hi == lo) return lo_value;
  const double hi_value =
      *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return lo_value + (h - static_cast<double>(lo)) * (hi_value - lo_value);
}

inline double squared_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                               const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  double sum = 0.0;
  for (Eigen::Index c = 0; c < a.size(); ++c) {
    const double diff = a(c) - b(c);
    sum += diff * diff;
  }
  return sum;
}

/// The N(N-1)/2 Euclidean distances for i < j, row-major over i.
inline std::vector<double> pairwise_distances(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      out.push_back(std::sqrt(squared_distance(points.row(i), points.row(j))));
    }
  }
  return out;
}

/// Empirical q-quantile of the pairwise Euclidean distances.
inline double bandwidth_from_quantile(const DataMatrix& data, double q) {
  if (data.rows() < 2) throw DataError("bandwidth needs at least 2 points");
  if (!(q > 0.0 && q <= 1.0)) throw UsageError("bandwidth quantile must lie in (0, 1]");
  require_finite(data);
  auto distances = pairwise_distances(data.points);
  const double sigma = quantile_type7(distances, q);
  if (!(sigma > 0.0)) {
    std::ostringstream msg;
    msg << "zero bandwidth: the " << q << "-quantile of pairwise distances is 0";
    throw NumericalError(msg.str());
  }
  return sigma;
}

/// Returns `config` with sigma filled in from the quantile when unset.
inline KernelConfig resolve_bandwidth(const DataMatrix& data, KernelConfig config) {
  validate(config);
  if (config.sigma <= 0.0) config.sigma = bandwidth_from_quantile(data, config.quantile);
  return config;
}

/// K_ij = exp(-|x_i - x_j|^2 / (2 sigma^2)).
inline Eigen::MatrixXd gaussian_kernel(const Eigen::MatrixXd& points, double sigma) {
  if (!(sigma > 0.0)) throw UsageError("kernel bandwidth must be positive");
  const Eigen::Index n = points.rows();
  const double scale = 1.0 / (2.0 * sigma * sigma);
  Eigen::MatrixXd kernel(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    kernel(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double value = std::exp(-squared_distance(points.row(i), points.row(j)) * scale);
      kernel(i, j) = value;
      kernel(j, i) = value;
    }
  }
  return kernel;
}

inline Eigen::VectorXd row_sums(const Eigen::MatrixXd& m) {
  Eigen::VectorXd sums(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) s += m(i, j);
    sums(i) = s;
  }
  return sums;
}

/// K^(alpha) = D_K^-alpha K D_K^-alpha, with D_K the diagonal of row sums.
inline Eigen::MatrixXd alpha_normalize(const Eigen::MatrixXd& kernel, double alpha) {
  if (alpha == 0.0) return kernel;
  const Eigen::VectorXd degrees = row_sums(kernel);
  if (!(degrees.minCoeff() > 0.0)) throw NumericalError("kernel has a non-positive degree");
  const Eigen::VectorXd scale = degrees.array().pow(-alpha);
  const Eigen::Index n = kernel.rows();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double value = kernel(i, j) * (scale(i) * scale(j));
      out(i, j) = value;
      out(j, i) = value;
    }
  }
  return out;
}

struct KernelGraph {
  Eigen::MatrixXd kernel;        // K
  Eigen::MatrixXd kernel_alpha;  // W = K^(alpha)
  Eigen::VectorXd deg_kernel;    // d_i(K)
  Eigen::VectorXd deg_weight;    // d_i(W)
  Eigen::MatrixXd markov;        // P = D_W^-1 W
  Eigen::VectorXd pi;            // stationary distribution
  Eigen::MatrixXd symmetric;     // A = D_W^-1/2 W D_W^-1/2
  std::vector<std::string> warnings;

  Eigen::Index size() const { return kernel.rows(); }
};

// Degree spread below which the graph is treated as numerically disconnected.
inline constexpr double kConditioningRatio = 1e-14;

inline KernelGraph build_graph(const DataMatrix& data, const KernelConfig& config) {
  if (data.rows() < 2) throw DataError("graph needs at least 2 points");
  require_finite(data);
  validate(config);
  if (!(config.sigma > 0.0)) throw UsageError("graph needs a resolved positive sigma");

  KernelGraph g;
  g.kernel = gaussian_kernel(data.points, config.sigma);
  g.deg_kernel = row_sums(g.kernel);
  g.kernel_alpha = alpha_normalize(g.kernel, config.alpha);
  g.deg_weight = row_sums(g.kernel_alpha);

  const double min_deg = g.deg_weight.minCoeff();
  const double max_deg = g.deg_weight.maxCoeff();
  if (!(min_deg > std::numeric_limits<double>::min()) || min_deg / max_deg < kConditioningRatio) {
    std::ostringstream msg;
    msg << "ill-conditioned graph: degree ratio min/max = " << min_deg / max_deg
        << " (threshold " << kConditioningRatio << "); results may be meaningless";
    g.warnings.push_back(msg.str());
  }

  const Eigen::Index n = g.size();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += g.deg_weight(i);
  g.pi = g.deg_weight / total;

  const Eigen::VectorXd inv_sqrt = g.deg_weight.array().sqrt().inverse();
  g.markov.resize(n, n);
  g.symmetric.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double inv = 1.0 / g.deg_weight(i);
    for (Eigen::Index j = 0; j < n; ++j) g.markov(i, j) = g.kernel_alpha(i, j) * inv;
    for (Eigen::Index j = i; j < n; ++j) {
      const double value = g.kernel_alpha(i, j) * (inv_sqrt(i) * inv_sqrt(j));
      g.symmetric(i, j) = value;
      g.symmetric(j, i) = value;
    }
  }
  return g;
}

}  // namespace dmaps
