#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dmaps/csv.hpp"
#include "dmaps/error.hpp"
#include "dmaps/random.hpp"

namespace dmaps {

/// A sample of points, one per row, plus an optional coloring coordinate.
struct DataMatrix {
  Eigen::MatrixXd points;
  std::optional<Eigen::VectorXd> labels;
  std::vector<std::string> feature_names;  // optional, size == cols when present
  std::string label_name = "label";

  Eigen::Index rows() const { return points.rows(); }
  Eigen::Index dims() const { return points.cols(); }
  bool empty() const { return points.rows() == 0; }
};

/// Throws DataError when any coordinate or label is NaN or infinite.
inline void require_finite(const DataMatrix& data, const std::string& what = "data") {
  if (!data.points.allFinite()) throw DataError(what + ": non-finite coordinate");
  if (data.labels && !data.labels->allFinite()) throw DataError(what + ": non-finite label");
}

inline DataMatrix select_rows(const DataMatrix& data, const std::vector<std::size_t>& rows) {
  DataMatrix out;
  out.points.resize(static_cast<Eigen::Index>(rows.size()), data.dims());
  if (data.labels) out.labels = Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    out.points.row(static_cast<Eigen::Index>(r)) = data.points.row(src);
    if (data.labels) (*out.labels)(static_cast<Eigen::Index>(r)) = (*data.labels)(src);
  }
  out.feature_names = data.feature_names;
  out.label_name = data.label_name;
  return out;
}

// Parametric surfaces. Each generator draws its parameters in the order
// listed (t then h per point for the two surfaces) from a single Rng.

inline Eigen::Vector3d swiss_roll_point(double t, double h) {
  return {t * std::cos(t), h, t * std::sin(t)};
}

inline Eigen::Vector3d s_curve_point(double t, double h) {
  const double sign = (t > 0.0) - (t < 0.0);
  return {std::sin(t), h, sign * (std::cos(t) - 1.0)};
}

inline Eigen::Vector3d helix_point(double theta) {
  return {std::cos(theta), std::sin(2.0 * theta), std::cos(3.0 * theta)};
}

namespace detail {

inline void require_count(std::size_t n) {
  if (n == 0) throw DataError("empty sample: n must be at least 1");
}

// The label column is always named "label"; it holds the curve parameter.
inline DataMatrix make_surface_sample(std::size_t n) {
  DataMatrix data;
  data.points.resize(static_cast<Eigen::Index>(n), 3);
  data.labels = Eigen::VectorXd(static_cast<Eigen::Index>(n));
  data.feature_names = {"x1", "x2", "x3"};
  data.label_name = "label";
  return data;
}

}  // namespace detail

/// t ~ U[3pi/2, 9pi/2), h ~ U[0, 21); labels carry t.
inline DataMatrix generate_swiss_roll(std::size_t n, std::uint64_t seed) {
  detail::require_count(n);
  constexpr double pi = std::numbers::pi;
  Rng rng(seed);
  auto data = detail::make_surface_sample(n);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const double t = rng.uniform(1.5 * pi, 4.5 * pi);
    const double h = rng.uniform(0.0, 21.0);
    data.points.row(i) = swiss_roll_point(t, h).transpose();
    (*data.labels)(i) = t;
  }
  return data;
}

/// t ~ U[-3pi/2, 3pi/2), h ~ U[0, 2); labels carry t.
inline DataMatrix generate_s_curve(std::size_t n, std::uint64_t seed) {
  detail::require_count(n);
  constexpr double pi = std::numbers::pi;
  Rng rng(seed);
  auto data = detail::make_surface_sample(n);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const double t = rng.uniform(-1.5 * pi, 1.5 * pi);
    const double h = rng.uniform(0.0, 2.0);
    data.points.row(i) = s_curve_point(t, h).transpose();
    (*data.labels)(i) = t;
  }
  return data;
}

/// theta ~ U[0, 2pi); labels carry theta.
inline DataMatrix generate_helix(std::size_t n, std::uint64_t seed) {
  detail::require_count(n);
  Rng rng(seed);
  auto data = detail::make_surface_sample(n);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    data.points.row(i) = helix_point(theta).transpose();
    (*data.labels)(i) = theta;
  }
  return data;
}

inline DataMatrix generate_dataset(const std::string& name, std::size_t n, std::uint64_t seed) {
  if (name == "swiss-roll") return generate_swiss_roll(n, seed);
  if (name == "s-curve") return generate_s_curve(n, seed);
  if (name == "helix") return generate_helix(n, seed);
  throw UsageError("unknown dataset '" + name + "' (expected swiss-roll, s-curve or helix)");
}

/// Loads a numeric CSV. When `label_column` names a header field, that
/// column becomes the labels and is removed from the coordinates.
inline DataMatrix load_csv(const std::filesystem::path& path,
                           const std::optional<std::string>& label_column = std::nullopt) {
  auto table = read_csv(path);
  std::optional<std::size_t> label_index;
  if (label_column) {
    const auto it = std::find(table.header.begin(), table.header.end(), *label_column);
    if (it == table.header.end()) {
      throw DataError("'" + path.string() + "': no column named '" + *label_column + "'");
    }
    label_index = static_cast<std::size_t>(it - table.header.begin());
  }

  const auto columns = static_cast<std::size_t>(table.values.cols());
  std::vector<std::size_t> feature_columns;
  for (std::size_t c = 0; c < columns; ++c) {
    if (!label_index || c != *label_index) feature_columns.push_back(c);
  }
  if (feature_columns.empty()) throw DataError("'" + path.string() + "': no feature columns");

  DataMatrix data;
  data.points.resize(table.values.rows(), static_cast<Eigen::Index>(feature_columns.size()));
  for (std::size_t c = 0; c < feature_columns.size(); ++c) {
    data.points.col(static_cast<Eigen::Index>(c)) =
        table.values.col(static_cast<Eigen::Index>(feature_columns[c]));
    if (!table.header.empty()) data.feature_names.push_back(table.header[feature_columns[c]]);
  }
  if (label_index) {
    data.labels = table.values.col(static_cast<Eigen::Index>(*label_index));
    data.label_name = *label_column;
  }
  return data;
}

/// Writes coordinates (and the label column last, when present) with a header.
inline void save_csv(const std::filesystem::path& path, const DataMatrix& data) {
  std::vector<std::string> header = data.feature_names;
  if (header.size() != static_cast<std::size_t>(data.dims())) {
    header.clear();
    for (Eigen::Index c = 0; c < data.dims(); ++c) header.push_back("x" + std::to_string(c + 1));
  }
  Eigen::MatrixXd values = data.points;
  if (data.labels) {
    header.push_back(data.label_name);
    values.conservativeResize(Eigen::NoChange, values.cols() + 1);
    values.col(values.cols() - 1) = *data.labels;
  }
  write_csv(path, header, values);
}

struct SplitResult {
  DataMatrix first;
  DataMatrix second;
  std::vector<std::size_t> first_rows;   // indices into the input, ascending
  std::vector<std::size_t> second_rows;  // indices into the input, ascending
};

/// Uniform random partition with |first| == n_first.
inline SplitResult split(const DataMatrix& data, std::size_t n_first, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(data.rows());
  if (n_first < 1 || n_first > n) {
    throw DataError("split size " + std::to_string(n_first) + " outside [1, " +
                    std::to_string(n) + "]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  SplitResult result;
  result.first_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_first));
  result.second_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_first), order.end());
  std::sort(result.first_rows.begin(), result.first_rows.end());
  std::sort(result.second_rows.begin(), result.second_rows.end());
  result.first = select_rows(data, result.first_rows);
  result.second = select_rows(data, result.second_rows);
  return result;
}

}  // namespace dmaps
