#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmaps/csv.hpp"
#include "dmaps/error.hpp"

namespace dmaps {

/// Rows are diffusion coordinates of the corresponding points.
struct Embedding {
  Eigen::MatrixXd coords;
  int t = 0;
  Eigen::VectorXd eigenvalues_used;  // lambda_2 .. lambda_{d+1}
};

/// Embedding as CSV: psi_1..psi_d, plus the label column when given.
inline void save_embedding(const std::filesystem::path& path, const Embedding& embedding,
                           const std::optional<Eigen::VectorXd>& labels = std::nullopt,
                           const std::string& label_name = "label") {
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < embedding.coords.cols(); ++j) {
    header.push_back("psi_" + std::to_string(j + 1));
  }
  Eigen::MatrixXd values = embedding.coords;
  if (labels && labels->size() == values.rows()) {
    header.push_back(label_name);
    values.conservativeResize(Eigen::NoChange, values.cols() + 1);
    values.col(values.cols() - 1) = *labels;
  }
  write_csv(path, header, values);
}

/// Reads an embedding CSV. With psi_* headers only those columns are kept;
/// otherwise every column except `label_name` is a coordinate.
inline Embedding load_embedding(const std::filesystem::path& path, const std::string& label_name = "label") {
  auto table = read_csv(path);
  Embedding out;
  const bool has_psi = std::any_of(table.header.begin(), table.header.end(),
                                   [](const std::string& h) { return h.starts_with("psi_"); });
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
    if (table.header.empty()) {
      keep.push_back(c);
      continue;
    }
    const auto& name = table.header[static_cast<std::size_t>(c)];
    if (has_psi ? name.starts_with("psi_") : name != label_name) keep.push_back(c);
  }
  if (keep.empty()) throw DataError("'" + path.string() + "': no embedding columns");
  out.coords.resize(table.values.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) out.coords.col(static_cast<Eigen::Index>(c)) = table.values.col(keep[c]);
  return out;
}

}  // namespace dmaps
