#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dmaps/kernel_graph.hpp"
#include "support.hpp"

using namespace dmaps;

namespace {
DataMatrix line_points(std::vector<double> xs) {
  DataMatrix d;
  d.points.resize(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) d.points(static_cast<Eigen::Index>(i), 0) = xs[i];
  return d;
}

KernelConfig config(double sigma, double alpha) {
  KernelConfig c;
  c.sigma = sigma;
  c.alpha = alpha;
  return c;
}
}  // namespace

TEST(Bandwidth, TwoPointsFullQuantile) { EXPECT_DOUBLE_EQ(bandwidth_from_quantile(line_points({0, 2}), 1.0), 2.0); }

TEST(Bandwidth, MedianOfThreeDistances) {
  EXPECT_DOUBLE_EQ(bandwidth_from_quantile(line_points({0, 1, 3}), 0.5), 2.0);
}

TEST(Bandwidth, InterpolatesBetweenOrderStatistics) {
  // Distances {1, 2, 3}: type-7 at q = 0.25 sits halfway between 1 and 2.
  EXPECT_DOUBLE_EQ(bandwidth_from_quantile(line_points({0, 1, 3}), 0.25), 1.5);
}

TEST(Bandwidth, IdenticalPointsGiveZeroBandwidthError) {
  EXPECT_THROW(bandwidth_from_quantile(line_points({4, 4, 4}), 0.5), NumericalError);
}

TEST(Kernel, DiagonalIsOneAndEntriesInUnitInterval) {
  const auto data = support::random_cloud(40, 3, 1);
  const auto k = gaussian_kernel(data.points, 0.7);
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    EXPECT_EQ(k(i, i), 1.0);
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      EXPECT_GT(k(i, j), 0.0);
      EXPECT_LE(k(i, j), 1.0);
      EXPECT_EQ(k(i, j), k(j, i));
    }
  }
}

TEST(Kernel, UnitDistanceUnitBandwidth) {
  const auto k = gaussian_kernel(line_points({0, 1}).points, 1.0);
  EXPECT_NEAR(k(0, 1), 0.6065306597, 1e-10);
}

TEST(Kernel, LargeBandwidthApproachesOneMonotonically) {
  const auto data = line_points({0, 1, 2.5});
  double previous = 0.0;
  for (double sigma : {0.5, 1.0, 10.0, 100.0, 1e4}) {
    const double v = gaussian_kernel(data.points, sigma)(0, 2);
    EXPECT_GT(v, previous);
    previous = v;
  }
  EXPECT_NEAR(previous, 1.0, 1e-7);
}

TEST(AlphaNormalize, ZeroAlphaKeepsKernel) {
  const auto data = support::random_cloud(20, 2, 3);
  const auto k = gaussian_kernel(data.points, 1.0);
  EXPECT_EQ(alpha_normalize(k, 0.0), k);
}

TEST(AlphaNormalize, TwoByTwoHandValue) {
  const double a = 0.3;
  Eigen::MatrixXd k(2, 2);
  k << 1, a, a, 1;
  const auto w = alpha_normalize(k, 1.0);
  EXPECT_NEAR(w(0, 1), a / ((1 + a) * (1 + a)), 1e-15);
  EXPECT_NEAR(w(0, 0), 1 / ((1 + a) * (1 + a)), 1e-15);
}

TEST(AlphaNormalize, PreservesSymmetry) {
  const auto data = support::random_cloud(30, 3, 4);
  const auto w = alpha_normalize(gaussian_kernel(data.points, 0.8), 0.7);
  EXPECT_EQ(w, Eigen::MatrixXd(w.transpose()));
}

TEST(Graph, InvariantsOnRandomData) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = support::random_cloud(60, 3, seed);
    const auto g = build_graph(data, config(0.9, seed % 2 ? 1.0 : 0.5));
    const Eigen::Index n = g.size();
    EXPECT_NEAR(g.pi.sum(), 1.0, 1e-12);
    for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(g.markov.row(i).sum(), 1.0, 1e-12);
    const Eigen::RowVectorXd moved = g.pi.transpose() * g.markov;
    EXPECT_LE((moved - g.pi.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((g.symmetric - g.symmetric.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    // A = Pi^1/2 P Pi^-1/2, computed independently.
    const Eigen::VectorXd s = g.pi.array().sqrt();
    const Eigen::MatrixXd via_p = s.asDiagonal() * g.markov * s.cwiseInverse().asDiagonal();
    EXPECT_LE((via_p - g.symmetric).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GT(g.kernel.minCoeff(), 0.0);
  }
}

TEST(Graph, TwoPointsHaveUniformStationaryLaw) {
  const auto g = build_graph(line_points({0, 1}), config(1.0, 1.0));
  EXPECT_NEAR(g.pi(0), 0.5, 1e-15);
  EXPECT_NEAR(g.pi(1), 0.5, 1e-15);
}

TEST(Graph, AlphaChangesTheWalkUnderNonUniformDensity) {
  const auto data = line_points({0, 0.1, 0.15, 0.2, 0.25, 2.0, 3.5});
  const auto g0 = build_graph(data, config(1.0, 0.0));
  const auto g1 = build_graph(data, config(1.0, 1.0));
  EXPECT_GT((g0.markov - g1.markov).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Graph, DisconnectedDegreesRaiseAWarningNotAnError) {
  // A dense clump and a far point; a large alpha spreads the degrees over
  // many orders of magnitude.
  std::vector<double> xs(30, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = 1e-3 * static_cast<double>(i);
  xs.push_back(50.0);
  const auto g = build_graph(line_points(xs), config(1.0, 12.0));
  ASSERT_EQ(g.warnings.size(), 1u);
  EXPECT_NE(g.warnings[0].find("ill-conditioned"), std::string::npos);

  const auto fine = build_graph(support::random_cloud(30, 2, 1), config(1.0, 1.0));
  EXPECT_TRUE(fine.warnings.empty());
}

TEST(Graph, NonFiniteInputIsAnError) {
  auto data = support::random_cloud(10, 2, 1);
  data.points(3, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(build_graph(data, config(1.0, 1.0)), DataError);
}

TEST(KernelConfig, RejectsInvalidFields) {
  KernelConfig c;
  c.t = 0;
  EXPECT_THROW(validate(c), UsageError);
  c.t = 1;
  c.quantile = 1.5;
  EXPECT_THROW(validate(c), UsageError);
}
