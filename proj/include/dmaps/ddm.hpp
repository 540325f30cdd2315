#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dmaps/csv.hpp"
#include "dmaps/dataset.hpp"
#include "dmaps/embedding.hpp"
#include "dmaps/gram_target.hpp"
#include "dmaps/error.hpp"
#include "dmaps/random.hpp"
#include "dmaps/text_format.hpp"

// Deep Diffusion Maps: a dense ReLU network f(x) trained so that
// sqrt(pi_i pi_j) <f(x_i), f(x_j)> matches A^{2t} - sqrt(pi) sqrt(pi)^T.
// This header consumes only a GramTarget and never decomposes a matrix.

namespace dmaps {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense network. weights[l] is (layer_sizes[l] x layer_sizes[l+1]), so a
/// layer maps a row x to x * W + b. Hidden layers use ReLU, the output
/// layer is linear. Inputs are first mapped to (x - input_shift) .*
/// input_scale; empty vectors mean the identity.
struct MlpModel {
  std::vector<std::size_t> layer_sizes;
  std::vector<RowMatrix> weights;
  std::vector<Eigen::RowVectorXd> biases;
  Eigen::RowVectorXd input_shift;
  Eigen::RowVectorXd input_scale;
  int diffusion_time = 0;  // t of the target the network was trained on

  std::size_t layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
};

/// Uniform fan-in initialization: W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)),
/// drawn row-major layer by layer; biases start at zero.
inline MlpModel make_mlp(const std::vector<std::size_t>& layer_sizes, Rng& rng) {
  if (layer_sizes.size() < 2) throw UsageError("network needs at least input and output sizes");
  for (auto s : layer_sizes) {
    if (s == 0) throw UsageError("layer sizes must be positive");
  }
  MlpModel model;
  model.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(layer_sizes[l]);
    const auto out = static_cast<Eigen::Index>(layer_sizes[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    RowMatrix w(in, out);
    for (Eigen::Index i = 0; i < in; ++i) {
      for (Eigen::Index j = 0; j < out; ++j) w(i, j) = rng.uniform(-limit, limit);
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::RowVectorXd::Zero(out));
  }
  return model;
}

inline MlpModel make_mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  Rng rng(seed);
  return make_mlp(layer_sizes, rng);
}

namespace detail {

// One dense layer; each output row depends only on its input row and the
// accumulation order is fixed, so results do not depend on batch makeup.
inline RowMatrix dense_layer(const RowMatrix& x, const RowMatrix& w, const Eigen::RowVectorXd& b) {
  RowMatrix out(x.rows(), w.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    out.row(r) = b;
    for (Eigen::Index i = 0; i < x.cols(); ++i) out.row(r).noalias() += x(r, i) * w.row(i);
  }
  return out;
}

struct ForwardTrace {
  std::vector<RowMatrix> inputs;  // inputs[l] feeds layer l
  std::vector<RowMatrix> pre;     // pre-activation of layer l
  RowMatrix output;
};

inline ForwardTrace forward_trace(const MlpModel& model, const RowMatrix& batch) {
  if (static_cast<std::size_t>(batch.cols()) != model.input_dim()) {
    throw DataError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                    std::to_string(model.input_dim()));
  }
  ForwardTrace trace;
  RowMatrix x = batch;
  if (model.input_shift.size() > 0) {
    x.rowwise() -= model.input_shift;
    x.array().rowwise() *= model.input_scale.array();
  }
  for (std::size_t l = 0; l < model.layers(); ++l) {
    RowMatrix z = dense_layer(x, model.weights[l], model.biases[l]);
    trace.inputs.push_back(std::move(x));
    if (l + 1 < model.layers()) {
      x = z.cwiseMax(0.0);
    } else {
      x = z;
    }
    trace.pre.push_back(std::move(z));
  }
  trace.output = std::move(x);
  return trace;
}

}  // namespace detail

inline RowMatrix forward(const MlpModel& model, const RowMatrix& batch) {
  return detail::forward_trace(model, batch).output;
}

namespace detail {

inline void check_indices(const std::vector<std::size_t>& indices, const GramTarget& target,
                          Eigen::Index rows) {
  if (static_cast<Eigen::Index>(indices.size()) != rows) {
    throw UsageError("output rows and batch indices differ in count");
  }
  for (auto i : indices) {
    if (static_cast<Eigen::Index>(i) >= target.size()) throw UsageError("batch index out of range");
  }
}

// Residual R_ij = sqrt(pi_i pi_j) <f_i, f_j> - B_ij over the batch, and the
// weighted outputs G = diag(sqrt pi) F.
struct PairResidual {
  RowMatrix weighted;
  Eigen::MatrixXd residual;
};

inline PairResidual pair_residual(const RowMatrix& outputs, const std::vector<std::size_t>& indices,
                                  const GramTarget& target) {
  check_indices(indices, target, outputs.rows());
  const auto n = static_cast<Eigen::Index>(indices.size());
  PairResidual out;
  out.weighted = outputs;
  for (Eigen::Index i = 0; i < n; ++i) out.weighted.row(i) *= target.sqrt_pi(static_cast<Eigen::Index>(indices[i]));
  out.residual = out.weighted * out.weighted.transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto tj = static_cast<Eigen::Index>(indices[j]);
    for (Eigen::Index i = 0; i < n; ++i) out.residual(i, j) -= target.b(static_cast<Eigen::Index>(indices[i]), tj);
  }
  return out;
}

}  // namespace detail

/// (1/B^2) sum_{i,j in batch} (sqrt(pi_i pi_j) <f_i, f_j> - B_ij)^2,
/// diagonal terms included.
inline double pairwise_loss(const RowMatrix& outputs, const std::vector<std::size_t>& indices,
                            const GramTarget& target) {
  if (indices.empty()) return 0.0;
  const auto r = detail::pair_residual(outputs, indices, target);
  const double n = static_cast<double>(indices.size());
  return r.residual.squaredNorm() / (n * n);
}

/// d loss / d outputs = (4/B^2) diag(sqrt pi) R G.
inline RowMatrix pairwise_loss_gradient(const RowMatrix& outputs, const std::vector<std::size_t>& indices,
                                        const GramTarget& target, double* loss = nullptr) {
  const auto r = detail::pair_residual(outputs, indices, target);
  const double n = static_cast<double>(indices.size());
  if (loss) *loss = r.residual.squaredNorm() / (n * n);
  RowMatrix grad = (4.0 / (n * n)) * (r.residual * r.weighted);
  for (Eigen::Index i = 0; i < grad.rows(); ++i) grad.row(i) *= target.sqrt_pi(static_cast<Eigen::Index>(indices[i]));
  return grad;
}

struct Gradients {
  std::vector<RowMatrix> weights;
  std::vector<Eigen::RowVectorXd> biases;
  double loss = 0.0;
};

/// Exact gradient of pairwise_loss with respect to every parameter.
inline Gradients backward(const MlpModel& model, const RowMatrix& batch,
                          const std::vector<std::size_t>& indices, const GramTarget& target) {
  const auto trace = detail::forward_trace(model, batch);
  Gradients g;
  RowMatrix delta = pairwise_loss_gradient(trace.output, indices, target, &g.loss);
  if (!std::isfinite(g.loss)) throw NumericalError("non-finite loss at output layer " + std::to_string(model.layers() - 1));

  const std::size_t layers = model.layers();
  g.weights.resize(layers);
  g.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    if (!delta.allFinite()) throw NumericalError("non-finite gradient at layer " + std::to_string(l));
    g.weights[l] = trace.inputs[l].transpose() * delta;
    g.biases[l] = delta.colwise().sum();
    if (l == 0) break;
    RowMatrix upstream = delta * model.weights[l].transpose();
    const RowMatrix& z = trace.pre[l - 1];
    for (Eigen::Index r = 0; r < upstream.rows(); ++r) {
      for (Eigen::Index c = 0; c < upstream.cols(); ++c) {
        if (!(z(r, c) > 0.0)) upstream(r, c) = 0.0;
      }
    }
    delta = std::move(upstream);
  }
  return g;
}

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t batch_size = 512;
  std::size_t epochs = 200;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::vector<std::size_t> hidden = {128, 64, 32};
  std::size_t output_dim = 2;
  // Center each input feature and divide by its standard deviation, both
  // measured on the training rows and stored in the model.
  bool standardize_inputs = true;
};

inline void validate(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (config.batch_size < 2) throw UsageError("batch size must be >= 2");
  if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0)) {
    throw UsageError("validation fraction must lie in (0, 1)");
  }
  if (config.output_dim < 1) throw UsageError("output dimension must be >= 1");
}

struct TrainReport {
  std::vector<double> train_loss;       // mean batch loss per epoch
  std::vector<double> validation_loss;  // loss over all validation pairs per epoch
  std::size_t best_epoch = 0;           // 1-based; 0 when no epoch ran
  double seconds = 0.0;
  std::uint64_t checksum = 0;           // of the returned parameters
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
};

/// FNV-1a over the raw bytes of every parameter, layer by layer.
inline std::uint64_t parameter_checksum(const MlpModel& model) {
  std::uint64_t hash = 1469598103934665603ULL;
  auto mix = [&](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char byte : bytes) {
      hash ^= byte;
      hash *= 1099511628211ULL;
    }
  };
  for (std::size_t l = 0; l < model.layers(); ++l) {
    for (Eigen::Index i = 0; i < model.weights[l].size(); ++i) mix(model.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) mix(model.biases[l](i));
  }
  for (Eigen::Index i = 0; i < model.input_shift.size(); ++i) mix(model.input_shift(i));
  for (Eigen::Index i = 0; i < model.input_scale.size(); ++i) mix(model.input_scale(i));
  return hash;
}

namespace detail {

class Adam {
 public:
  Adam(const MlpModel& model, const TrainConfig& config) : config_(config) {
    for (std::size_t l = 0; l < model.layers(); ++l) {
      m_w_.push_back(RowMatrix::Zero(model.weights[l].rows(), model.weights[l].cols()));
      v_w_.push_back(m_w_.back());
      m_b_.push_back(Eigen::RowVectorXd::Zero(model.biases[l].size()));
      v_b_.push_back(m_b_.back());
    }
  }

  void step(MlpModel& model, const Gradients& g) {
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.adam_beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.adam_beta2, static_cast<double>(steps_));
    for (std::size_t l = 0; l < model.layers(); ++l) {
      update(model.weights[l].array(), g.weights[l].array(), m_w_[l].array(), v_w_[l].array(), c1, c2);
      update(model.biases[l].array(), g.biases[l].array(), m_b_[l].array(), v_b_[l].array(), c1, c2);
    }
  }

 private:
  template <typename P, typename G, typename S>
  void update(P&& param, const G& grad, S&& m, S&& v, double c1, double c2) {
    const double b1 = config_.adam_beta1;
    const double b2 = config_.adam_beta2;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.square();
    param -= config_.learning_rate * (m / c1) / ((v / c2).sqrt() + config_.adam_epsilon);
  }

  TrainConfig config_;
  std::vector<RowMatrix> m_w_, v_w_;
  std::vector<Eigen::RowVectorXd> m_b_, v_b_;
  long steps_ = 0;
};

inline RowMatrix gather_rows(const Eigen::MatrixXd& points, const std::vector<std::size_t>& rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), points.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = points.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

// Per-feature mean and 1/std over the given rows; constant features keep
// scale 1.
inline void fit_standardization(MlpModel& model, const Eigen::MatrixXd& points,
                                const std::vector<std::size_t>& rows) {
  const RowMatrix x = gather_rows(points, rows);
  const double n = static_cast<double>(rows.size());
  model.input_shift = x.colwise().sum() / n;
  model.input_scale.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - model.input_shift(c)).square().sum() / n;
    model.input_scale(c) = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }
}

}  // namespace detail

struct TrainResult {
  MlpModel model;
  TrainReport report;
};

/// Mini-batch Adam on the pairwise loss. The run is a pure function of the
/// inputs and config.seed: one Rng draws, in order, the initial weights, the
/// validation split, and each epoch's shuffle. Returns the parameters with
/// the lowest validation loss.
inline TrainResult train(const DataMatrix& data, const GramTarget& target, const TrainConfig& config) {
  validate(config);
  const auto m = static_cast<std::size_t>(data.rows());
  if (data.rows() != target.size()) {
    throw DataError("training data has " + std::to_string(m) + " rows, target has " +
                    std::to_string(target.size()));
  }
  require_finite(data, "training data");
  const auto start = std::chrono::steady_clock::now();

  Rng rng(config.seed);
  std::vector<std::size_t> sizes{static_cast<std::size_t>(data.dims())};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.output_dim);
  TrainResult result;
  result.model = make_mlp(sizes, rng);
  result.model.diffusion_time = target.t;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(m)));
  n_val = std::max<std::size_t>(n_val, 1);
  if (m < n_val + 2) throw DataError("too few points for a validation split");
  auto& report = result.report;
  report.validation_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  report.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(report.validation_rows.begin(), report.validation_rows.end());
  std::sort(report.train_rows.begin(), report.train_rows.end());
  if (config.standardize_inputs) detail::fit_standardization(result.model, data.points, report.train_rows);

  const RowMatrix val_batch = detail::gather_rows(data.points, report.validation_rows);
  MlpModel model = result.model;
  detail::Adam adam(model, config);
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> shuffled = report.train_rows;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(shuffled));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < shuffled.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, shuffled.size());
      const std::vector<std::size_t> idx(shuffled.begin() + static_cast<std::ptrdiff_t>(begin),
                                         shuffled.begin() + static_cast<std::ptrdiff_t>(end));
      Gradients g;
      try {
        g = backward(model, detail::gather_rows(data.points, idx), idx, target);
      } catch (const NumericalError& e) {
        throw ConvergenceError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      adam.step(model, g);
      loss_sum += g.loss;
      ++batches;
    }
    const double val = pairwise_loss(forward(model, val_batch), report.validation_rows, target);
    const double train_loss = loss_sum / static_cast<double>(batches);
    if (!std::isfinite(val) || !std::isfinite(train_loss)) {
      throw ConvergenceError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
    }
    report.train_loss.push_back(train_loss);
    report.validation_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      report.best_epoch = epoch;
      result.model = model;
    }
  }

  report.checksum = parameter_checksum(result.model);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

/// f(x) for every row; consults nothing but the network.
inline Embedding predict(const MlpModel& model, const DataMatrix& points) {
  Embedding out;
  out.t = model.diffusion_time;
  if (points.rows() == 0) {
    out.coords.resize(0, static_cast<Eigen::Index>(model.output_dim()));
    return out;
  }
  require_finite(points, "points");
  out.coords = forward(model, RowMatrix(points.points));
  return out;
}

// ---------------------------------------------------------------------------
// Network file format (plain text, shortest round-trip decimals):
//
//   dmaps-mlp 1
//   diffusion_time <t>
//   sizes <L+1> <n_0> ... <n_L>
//   activations <L> relu ... linear
//   input none | input <n_0>, then "shift <n_0 values>" and "scale <n_0 values>"
//   layer <l> <n_l> <n_{l+1}>
//   <n_l lines of n_{l+1} weights>
//   bias <n_{l+1} values>
// ---------------------------------------------------------------------------

inline void save_network(std::ostream& out, const MlpModel& model) {
  out << "dmaps-mlp 1\n";
  out << "diffusion_time " << model.diffusion_time << '\n';
  out << "sizes " << model.layer_sizes.size();
  for (auto s : model.layer_sizes) out << ' ' << s;
  out << "\nactivations " << model.layers();
  for (std::size_t l = 0; l < model.layers(); ++l) out << (l + 1 < model.layers() ? " relu" : " linear");
  out << '\n';
  if (model.input_shift.size() == 0) {
    out << "input none\n";
  } else {
    out << "input " << model.input_shift.size() << "\nshift";
    for (Eigen::Index j = 0; j < model.input_shift.size(); ++j) out << ' ' << format_double(model.input_shift(j));
    out << "\nscale";
    for (Eigen::Index j = 0; j < model.input_scale.size(); ++j) out << ' ' << format_double(model.input_scale(j));
    out << '\n';
  }
  for (std::size_t l = 0; l < model.layers(); ++l) {
    const auto& w = model.weights[l];
    out << "layer " << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) out << (j ? " " : "") << format_double(w(i, j));
      out << '\n';
    }
    out << "bias";
    for (Eigen::Index j = 0; j < model.biases[l].size(); ++j) out << ' ' << format_double(model.biases[l](j));
    out << '\n';
  }
}

inline MlpModel load_network(std::istream& in, const std::string& source = "network") {
  detail::TokenReader r(in, source);
  r.expect("dmaps-mlp");
  if (r.integer() != 1) r.fail("unsupported network version");
  MlpModel model;
  r.expect("diffusion_time");
  model.diffusion_time = static_cast<int>(r.integer());
  r.expect("sizes");
  const long count = r.integer();
  if (count < 2) r.fail("network needs at least two layer sizes");
  for (long i = 0; i < count; ++i) {
    const long s = r.integer();
    if (s < 1) r.fail("layer sizes must be positive");
    model.layer_sizes.push_back(static_cast<std::size_t>(s));
  }
  r.expect("activations");
  const long layers = r.integer();
  if (layers != count - 1) r.fail("activation count mismatch");
  for (long l = 0; l < layers; ++l) {
    const auto act = r.word();
    if (act != (l + 1 < layers ? "relu" : "linear")) r.fail("unsupported activation '" + act + "'");
  }
  r.expect("input");
  const auto input = r.word();
  if (input != "none") {
    long dims = 0;
    try {
      dims = std::stol(input);
    } catch (const std::exception&) {
      r.fail("expected 'none' or a count after 'input'");
    }
    if (dims != static_cast<long>(model.layer_sizes.front())) r.fail("input transform size mismatch");
    r.expect("shift");
    model.input_shift = r.vector(dims).transpose();
    r.expect("scale");
    model.input_scale = r.vector(dims).transpose();
  }
  for (long l = 0; l < layers; ++l) {
    r.expect("layer");
    if (r.integer() != l) r.fail("layers out of order");
    const Eigen::Index rows = r.integer();
    const Eigen::Index cols = r.integer();
    if (rows != static_cast<Eigen::Index>(model.layer_sizes[static_cast<std::size_t>(l)]) ||
        cols != static_cast<Eigen::Index>(model.layer_sizes[static_cast<std::size_t>(l) + 1])) {
      r.fail("layer shape does not chain");
    }
    model.weights.push_back(r.matrix(rows, cols));
    r.expect("bias");
    model.biases.push_back(r.vector(cols).transpose());
  }
  return model;
}

inline void save_network(const std::filesystem::path& path, const MlpModel& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  save_network(out, model);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline MlpModel load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open network '" + path.string() + "'");
  return load_network(in, path.string());
}

}  // namespace dmaps
