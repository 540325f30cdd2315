#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "dmaps/dataset.hpp"
#include "dmaps/random.hpp"

namespace support {

/// Gaussian cloud, one Rng stream, row-major draws.
inline dmaps::DataMatrix random_cloud(Eigen::Index n, Eigen::Index dims, std::uint64_t seed, double spread = 1.0) {
  dmaps::Rng rng(seed);
  dmaps::DataMatrix data;
  data.points.resize(n, dims);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < dims; ++j) data.points(i, j) = spread * rng.normal();
  }
  return data;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dmaps_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline double relative_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace support
