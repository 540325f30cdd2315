#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dmaps/embedding.hpp"
#include "dmaps/error.hpp"
#include "dmaps/kernel_graph.hpp"
#include "dmaps/random.hpp"

namespace dmaps {

/// Per-pair comparison of two embeddings over all i < j, row-major order.
struct PairErrors {
  std::vector<double> relative;   // |d_test - d_ref| / d_ref
  std::vector<double> reference;  // d_ref
  std::size_t excluded = 0;       // pairs dropped for d_ref == 0
};

/// `exclude_zero` drops pairs whose reference distance is zero; without it
/// such pairs are an error (duplicate reference rows).
inline PairErrors pair_relative_errors(const Eigen::MatrixXd& test, const Eigen::MatrixXd& reference,
                                       bool exclude_zero = false) {
  if (test.rows() != reference.rows()) throw DataError("embeddings differ in row count");
  if (test.cols() != reference.cols()) throw DataError("embeddings differ in dimension");
  const Eigen::Index n = test.rows();
  if (n < 2) throw DataError("relative error needs at least 2 rows");

  PairErrors out;
  out.relative.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  out.reference.reserve(out.relative.capacity());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double ref = std::sqrt(squared_distance(reference.row(i), reference.row(j)));
      if (!(ref > 0.0)) {
        if (exclude_zero) {
          ++out.excluded;
          continue;
        }
        throw DataError("reference rows " + std::to_string(i) + " and " + std::to_string(j) +
                        " coincide (zero distance); enable exclusion to skip such pairs");
      }
      const double dist = std::sqrt(squared_distance(test.row(i), test.row(j)));
      out.relative.push_back(std::abs(dist - ref) / ref);
      out.reference.push_back(ref);
    }
  }
  if (out.relative.empty()) throw DataError("no pairs left after excluding zero distances");
  return out;
}

inline double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

/// Mean relative error of pairwise distances, `reference` in the denominator.
inline double mre(const Embedding& test, const Embedding& reference, bool exclude_zero = false) {
  return mean_of(pair_relative_errors(test.coords, reference.coords, exclude_zero).relative);
}

struct DecileReport {
  std::array<double, 10> mre{};          // mean relative error per bucket
  std::array<std::size_t, 10> count{};   // pairs per bucket
  std::array<double, 10> upper{};        // largest reference distance per bucket
};

/// Pairs ranked by reference distance (ties by pair order) and cut into ten
/// equal-count buckets: bucket = floor(10 * rank / P).
inline DecileReport mre_by_decile(const PairErrors& errors) {
  const std::size_t p = errors.relative.size();
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return errors.reference[a] < errors.reference[b];
  });
  DecileReport out;
  std::array<double, 10> sums{};
  for (std::size_t rank = 0; rank < p; ++rank) {
    const std::size_t bucket = (10 * rank) / p;
    sums[bucket] += errors.relative[order[rank]];
    ++out.count[bucket];
    out.upper[bucket] = errors.reference[order[rank]];
  }
  for (std::size_t b = 0; b < 10; ++b) out.mre[b] = out.count[b] ? sums[b] / static_cast<double>(out.count[b]) : 0.0;
  return out;
}

inline DecileReport mre_by_decile(const Embedding& test, const Embedding& reference,
                                  bool exclude_zero = false) {
  return mre_by_decile(pair_relative_errors(test.coords, reference.coords, exclude_zero));
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Percentile bootstrap of the mean. Each resample draws values.size()
/// indices with Rng::below, in order, from one Rng(seed); the interval is
/// the type-7 (1-level)/2 and (1+level)/2 quantiles of the resampled means.
inline Interval bootstrap_ci(const std::vector<double>& values, double level, std::size_t resamples,
                             std::uint64_t seed) {
  if (values.empty()) throw DataError("bootstrap needs a non-empty list");
  if (!(level > 0.0 && level < 1.0)) throw UsageError("confidence level must lie in (0, 1)");
  if (resamples < 1) throw UsageError("bootstrap needs at least one resample");
  Rng rng(seed);
  const std::size_t n = values.size();
  std::vector<double> means(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += values[rng.below(n)];
    means[r] = sum / static_cast<double>(n);
  }
  std::vector<double> scratch = means;
  Interval out;
  out.low = quantile_type7(scratch, 0.5 * (1.0 - level));
  scratch = means;
  out.high = quantile_type7(scratch, 0.5 * (1.0 + level));
  return out;
}

}  // namespace dmaps
