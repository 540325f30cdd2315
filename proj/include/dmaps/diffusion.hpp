#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dmaps/csv.hpp"
#include "dmaps/dataset.hpp"
#include "dmaps/embedding.hpp"
#include "dmaps/error.hpp"
#include "dmaps/gram_target.hpp"
#include "dmaps/kernel_graph.hpp"
#include "dmaps/random.hpp"
#include "dmaps/spectral.hpp"
#include "dmaps/text_format.hpp"

namespace dmaps {

// Number of non-trivial eigenvalues fed to the dimension selector.
inline constexpr std::size_t kLikelihoodEigenvalues = 25;

/// Everything fit from a training sample. Immutable after fit().
struct DiffusionModel {
  KernelConfig config;  // sigma always resolved
  DataMatrix train_points;
  Eigen::VectorXd deg_kernel;
  Eigen::VectorXd deg_weight;
  Eigen::VectorXd pi;
  EigenSystem eigen;  // of A
  std::size_t d = 1;
  std::vector<double> likelihood_curve;  // log-likelihood for d = 1, 2, ...
  std::size_t suggested_d = 1;           // argmax of likelihood_curve
  std::vector<std::string> warnings;

  Eigen::Index size() const { return train_points.rows(); }

  /// psi_l = Pi^-1/2 phi_l for every stored eigenvector column.
  Eigen::MatrixXd right_vectors() const {
    return pi.array().sqrt().inverse().matrix().asDiagonal() * eigen.vectors;
  }
};

/// Fits the model from an already-built graph. `dimension` empty means
/// "use the likelihood-curve suggestion".
inline DiffusionModel fit(const KernelGraph& graph, const DataMatrix& data,
                          const KernelConfig& config, std::optional<std::size_t> dimension) {
  const Eigen::Index m = data.rows();
  if (m < 3) throw DataError("fit needs at least 3 points");
  if (graph.size() != m) throw DataError("graph and data sizes differ");

  DiffusionModel model;
  model.config = config;
  model.train_points = data;
  model.deg_kernel = graph.deg_kernel;
  model.deg_weight = graph.deg_weight;
  model.pi = graph.pi;
  model.warnings = graph.warnings;
  model.eigen = eig_symmetric(graph.symmetric);

  const Eigen::Index nontrivial = m - 1;
  const auto used = std::min<std::size_t>(kLikelihoodEigenvalues, static_cast<std::size_t>(nontrivial));
  if (used >= 3) {
    const Eigen::VectorXd tail = model.eigen.values.segment(1, static_cast<Eigen::Index>(used));
    auto selection = select_dimension(tail, config.t, used);
    model.likelihood_curve = std::move(selection.curve);
    model.suggested_d = selection.d;
  } else if (!dimension) {
    throw DataError("automatic dimension needs at least 4 points");
  }

  model.d = dimension ? *dimension : model.suggested_d;
  if (model.d < 1 || model.d > static_cast<std::size_t>(nontrivial)) {
    throw UsageError("embedding dimension must lie in [1, " + std::to_string(nontrivial) + "]");
  }
  return model;
}

inline DiffusionModel fit(const DataMatrix& data, KernelConfig config,
                          std::optional<std::size_t> dimension) {
  if (data.rows() < 3) throw DataError("fit needs at least 3 points");
  config = resolve_bandwidth(data, config);
  const auto graph = build_graph(data, config);
  return fit(graph, data, config, dimension);
}

inline KernelGraph rebuild_graph(const DiffusionModel& model) {
  return build_graph(model.train_points, model.config);
}

/// Psi^(t)(x_k)_j = lambda_{j+1}^t (phi_{j+1})_k / sqrt(pi_k).
inline Embedding embed(const DiffusionModel& model) {
  const auto d = static_cast<Eigen::Index>(model.d);
  if (model.d < 1 || model.eigen.vectors.cols() < d + 1) {
    throw UsageError("model does not hold enough eigenvectors for d = " + std::to_string(d));
  }
  const int t = model.config.t;
  Embedding out;
  out.t = t;
  out.eigenvalues_used = model.eigen.values.segment(1, d);
  const Eigen::Index m = model.size();
  out.coords.resize(m, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double scale = std::pow(model.eigen.values(j + 1), t);
    for (Eigen::Index k = 0; k < m; ++k) {
      out.coords(k, j) = scale * model.eigen.vectors(k, j + 1) / std::sqrt(model.pi(k));
    }
  }
  return out;
}

/// P^t by t - 1 successive multiplications (no spectral shortcut).
inline Eigen::MatrixXd markov_power(const KernelGraph& graph, int t) {
  if (t < 1) throw UsageError("diffusion time t must be >= 1");
  Eigen::MatrixXd power = graph.markov;
  for (int step = 1; step < t; ++step) power = (power * graph.markov).eval();
  return power;
}

inline double diffusion_distance_from_power(const Eigen::MatrixXd& markov_t,
                                            const Eigen::VectorXd& pi, Eigen::Index i,
                                            Eigen::Index j) {
  double sum = 0.0;
  for (Eigen::Index k = 0; k < markov_t.cols(); ++k) {
    const double diff = markov_t(i, k) - markov_t(j, k);
    sum += diff * diff / pi(k);
  }
  return std::sqrt(sum);
}

/// d_t(x_i, x_j)^2 = sum_k (P^t_ik - P^t_jk)^2 / pi_k, summed directly.
inline double diffusion_distance(const KernelGraph& graph, Eigen::Index i, Eigen::Index j, int t) {
  const Eigen::Index n = graph.size();
  if (i < 0 || j < 0 || i >= n || j >= n) throw UsageError("diffusion distance index out of range");
  if (t < 1) throw UsageError("diffusion time t must be >= 1");
  // Two rows of P^t via row-vector products.
  Eigen::RowVectorXd row_i = graph.markov.row(i);
  Eigen::RowVectorXd row_j = graph.markov.row(j);
  for (int step = 1; step < t; ++step) {
    row_i = (row_i * graph.markov).eval();
    row_j = (row_j * graph.markov).eval();
  }
  double sum = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double diff = row_i(k) - row_j(k);
    sum += diff * diff / graph.pi(k);
  }
  return std::sqrt(sum);
}

inline double diffusion_distance(const DiffusionModel& model, Eigen::Index i, Eigen::Index j, int t) {
  return diffusion_distance(rebuild_graph(model), i, j, t);
}

/// All pairwise diffusion distances at time t.
inline Eigen::MatrixXd diffusion_distances(const KernelGraph& graph, int t) {
  const Eigen::MatrixXd power = markov_power(graph, t);
  const Eigen::Index n = graph.size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double value = diffusion_distance_from_power(power, graph.pi, i, j);
      out(i, j) = value;
      out(j, i) = value;
    }
  }
  return out;
}

/// Built with repeated squaring; never touches an eigendecomposition.
/// sqrt(pi) is a unit eigenvector of A for eigenvalue 1, so
/// (A - sqrt(pi) sqrt(pi)^T)^{2t} = A^{2t} - sqrt(pi) sqrt(pi)^T; powering the
/// deflated matrix avoids cancelling against the constant part at large t.
inline GramTarget gram_target(const KernelGraph& graph, int t) {
  if (t < 1) throw UsageError("diffusion time t must be >= 1");
  GramTarget target;
  target.t = t;
  target.pi = graph.pi;
  target.sqrt_pi = graph.pi.array().sqrt();
  Eigen::MatrixXd deflated = graph.symmetric;
  deflated.noalias() -= target.sqrt_pi * target.sqrt_pi.transpose();
  target.b = matrix_power_even(deflated, 2L * t);
  return target;
}

inline GramTarget gram_target(const DiffusionModel& model) {
  return gram_target(rebuild_graph(model), model.config.t);
}

struct DirectFitResult {
  Eigen::MatrixXd embedding;  // M x d, rows are the optimal Gamma columns
  double objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  int restarts = 0;
};

/// Direct minimization of the unconstrained objective by plain gradient
/// descent. Small-M test fixture. The descent runs on H = Pi^1/2 Gamma^T / sqrt(s),
/// with s = ||B||_F, so a single fixed step suits every instance; the
/// minimizers map one to one onto those of the original objective.
inline DirectFitResult theorem1_oracle(const GramTarget& target, std::size_t d, int iterations,
                                      std::uint64_t seed, double gradient_tolerance = 1e-13,
                                      int restarts = 10) {
  const Eigen::Index m = target.size();
  if (m > 64) throw UsageError("direct Gram minimizer is limited to M <= 64");
  if (d < 1 || static_cast<Eigen::Index>(d) > m - 1) throw UsageError("oracle needs 1 <= d <= M-1");

  const double scale = std::max(target.b.norm(), std::numeric_limits<double>::min());
  const Eigen::MatrixXd b = target.b / scale;
  constexpr double step = 0.05;
  const auto cols = static_cast<Eigen::Index>(d);

  DirectFitResult best;
  best.gradient_norm = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best_h;
  for (int attempt = 0; attempt < restarts; ++attempt) {
    Rng rng(seed + static_cast<std::uint64_t>(attempt));
    Eigen::MatrixXd h(m, cols);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) h(i, j) = 0.1 * rng.normal();
    }
    double grad_norm = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < iterations; ++it) {
      const Eigen::MatrixXd residual = h * h.transpose() - b;
      const Eigen::MatrixXd grad = 4.0 * residual * h;
      grad_norm = grad.norm();
      if (!std::isfinite(grad_norm)) break;
      if (grad_norm <= gradient_tolerance) break;
      h -= step * grad;
    }
    if (grad_norm < best.gradient_norm) {
      best.gradient_norm = grad_norm;
      best.iterations = it;
      best.restarts = attempt;
      best_h = h;
    }
    if (grad_norm <= gradient_tolerance) break;
  }
  if (!(best.gradient_norm <= gradient_tolerance)) {
    std::ostringstream msg;
    msg << "direct Gram minimizer did not converge after " << iterations << " iterations x "
        << restarts << " restarts (final gradient norm " << best.gradient_norm << ")";
    throw ConvergenceError(msg.str());
  }
  best.embedding = target.sqrt_pi.array().inverse().matrix().asDiagonal() * best_h * std::sqrt(scale);
  best.objective = gram_objective(target, best.embedding);
  return best;
}

// ---------------------------------------------------------------------------
// Model file format (plain text, one record per line, numbers in shortest
// round-trip decimal form, matrices row-major):
//
//   dmaps-diffusion-model 1
//   quantile <q>
//   sigma <sigma>
//   alpha <alpha>
//   t <t>
//   d <d>
//   suggested_d <d>
//   points <M> <D>
//   <M lines of D values>
//   labels <0|1> [<name>]
//   [<M label values on one line>]
//   deg_kernel <M values>
//   deg_weight <M values>
//   pi <M values>
//   eigenvalues <M values>
//   eigenvectors <M> <k>
//   <M lines of k values>
//   likelihood <n> [<n values>]
//   warnings <n>
//   <n lines of text>
// ---------------------------------------------------------------------------

/// Writes the model. `vectors_kept` limits the stored eigenvector columns
/// (all by default); eigenvalues are always stored in full.
inline void save_model(std::ostream& out, const DiffusionModel& model,
                       std::optional<Eigen::Index> vectors_kept = std::nullopt) {
  const Eigen::Index m = model.size();
  const Eigen::Index k = std::min(model.eigen.vectors.cols(), vectors_kept.value_or(m));
  out << "dmaps-diffusion-model 1\n";
  out << "quantile " << format_double(model.config.quantile) << '\n';
  out << "sigma " << format_double(model.config.sigma) << '\n';
  out << "alpha " << format_double(model.config.alpha) << '\n';
  out << "t " << model.config.t << '\n';
  out << "d " << model.d << '\n';
  out << "suggested_d " << model.suggested_d << '\n';
  out << "points " << m << ' ' << model.train_points.dims() << '\n';
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < model.train_points.dims(); ++c) {
      out << (c ? " " : "") << format_double(model.train_points.points(r, c));
    }
    out << '\n';
  }
  if (model.train_points.labels) {
    out << "labels 1 " << model.train_points.label_name << '\n';
    detail::write_values(out, *model.train_points.labels);
    out << '\n';
  } else {
    out << "labels 0\n";
  }
  out << "deg_kernel";
  detail::write_values(out, model.deg_kernel);
  out << "\ndeg_weight";
  detail::write_values(out, model.deg_weight);
  out << "\npi";
  detail::write_values(out, model.pi);
  out << "\neigenvalues";
  detail::write_values(out, model.eigen.values);
  out << "\neigenvectors " << m << ' ' << k << '\n';
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) {
      out << (c ? " " : "") << format_double(model.eigen.vectors(r, c));
    }
    out << '\n';
  }
  out << "likelihood " << model.likelihood_curve.size();
  for (double v : model.likelihood_curve) out << ' ' << format_double(v);
  out << "\nwarnings " << model.warnings.size() << '\n';
  for (const auto& w : model.warnings) out << w << '\n';
}

inline DiffusionModel load_model(std::istream& in, const std::string& source = "model") {
  detail::TokenReader r(in, source);
  r.expect("dmaps-diffusion-model");
  if (r.integer() != 1) r.fail("unsupported model version");
  DiffusionModel model;
  r.expect("quantile");
  model.config.quantile = r.number();
  r.expect("sigma");
  model.config.sigma = r.number();
  r.expect("alpha");
  model.config.alpha = r.number();
  r.expect("t");
  model.config.t = static_cast<int>(r.integer());
  r.expect("d");
  model.d = static_cast<std::size_t>(r.integer());
  r.expect("suggested_d");
  model.suggested_d = static_cast<std::size_t>(r.integer());
  r.expect("points");
  const Eigen::Index m = r.integer();
  const Eigen::Index dims = r.integer();
  if (m < 1 || dims < 1) r.fail("bad point dimensions");
  model.train_points.points = r.matrix(m, dims);
  r.expect("labels");
  if (r.integer() == 1) {
    model.train_points.label_name = r.word();
    model.train_points.labels = r.vector(m);
  }
  r.expect("deg_kernel");
  model.deg_kernel = r.vector(m);
  r.expect("deg_weight");
  model.deg_weight = r.vector(m);
  r.expect("pi");
  model.pi = r.vector(m);
  r.expect("eigenvalues");
  model.eigen.values = r.vector(m);
  r.expect("eigenvectors");
  if (r.integer() != m) r.fail("eigenvector row count mismatch");
  const Eigen::Index k = r.integer();
  if (k < 0 || k > m) r.fail("bad eigenvector column count");
  model.eigen.vectors = r.matrix(m, k);
  r.expect("likelihood");
  const long curve = r.integer();
  for (long i = 0; i < curve; ++i) model.likelihood_curve.push_back(r.number());
  r.expect("warnings");
  const long warnings = r.integer();
  for (long i = 0; i < warnings; ++i) model.warnings.push_back(r.line());
  return model;
}

inline void save_model(const std::filesystem::path& path, const DiffusionModel& model,
                       std::optional<Eigen::Index> vectors_kept = std::nullopt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  save_model(out, model, vectors_kept);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline DiffusionModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model '" + path.string() + "'");
  return load_model(in, path.string());
}

}  // namespace dmaps
