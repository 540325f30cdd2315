#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "dmaps/kernel_graph.hpp"
#include "dmaps/spectral.hpp"
#include "support.hpp"

using namespace dmaps;

namespace {
Eigen::MatrixXd random_symmetric(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = rng.normal();
  }
  return 0.5 * (m + m.transpose());
}

KernelGraph small_graph(Eigen::Index n, std::uint64_t seed) {
  KernelConfig c;
  c.sigma = 1.0;
  c.alpha = 1.0;
  return build_graph(support::random_cloud(n, 3, seed), c);
}

// Log-likelihood of a two-group split summed point by point from the normal
// density, with the pooled MLE variance.
double brute_force_split(const std::vector<double>& x, std::size_t d) {
  double m1 = 0, m2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) (i < d ? m1 : m2) += x[i];
  m1 /= static_cast<double>(d);
  if (d < x.size()) m2 /= static_cast<double>(x.size() - d);
  double var = 0;
  for (std::size_t i = 0; i < x.size(); ++i) var += std::pow(x[i] - (i < d ? m1 : m2), 2);
  var = std::max(var / static_cast<double>(x.size()), 1e-30);
  double ll = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = x[i] - (i < d ? m1 : m2);
    ll += std::log(std::exp(-z * z / (2 * var)) / std::sqrt(2 * std::numbers::pi * var));
  }
  return ll;
}
}  // namespace

TEST(Eig, IdentityHasUnitSpectrum) {
  const auto sys = eig_symmetric(Eigen::MatrixXd::Identity(5, 5));
  EXPECT_LE((sys.values.array() - 1.0).abs().maxCoeff(), 1e-14);
  EXPECT_LE((sys.vectors.transpose() * sys.vectors - Eigen::MatrixXd::Identity(5, 5)).norm(), 1e-12);
}

TEST(Eig, DiagonalGivesAxisVectorsWithPositiveSign) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0, 0, 3;
  const auto sys = eig_symmetric(a);
  EXPECT_NEAR(sys.values(0), 3.0, 1e-15);
  EXPECT_NEAR(sys.values(1), 1.0, 1e-15);
  EXPECT_NEAR(sys.vectors(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(sys.vectors(0, 1), 1.0, 1e-15);
}

TEST(Eig, GraphLeadingPairIsOneAndSqrtPi) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto g = small_graph(40, seed);
    const auto sys = eig_symmetric(g.symmetric);
    EXPECT_NEAR(sys.values(0), 1.0, 1e-8);
    EXPECT_LE((sys.vectors.col(0) - g.pi.cwiseSqrt()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Eig, InvariantsOnRandomMatrices) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto a = random_symmetric(30, seed);
    const auto sys = eig_symmetric(a);
    const double scale = a.norm();
    for (Eigen::Index l = 0; l < 30; ++l) {
      EXPECT_NEAR(sys.vectors.col(l).norm(), 1.0, 1e-12);
      EXPECT_LE((a * sys.vectors.col(l) - sys.values(l) * sys.vectors.col(l)).norm(), 1e-8 * scale);
      if (l > 0) EXPECT_GE(sys.values(l - 1), sys.values(l));
      Eigen::Index arg = 0;
      sys.vectors.col(l).cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(sys.vectors(arg, l), 0.0);
    }
    const Eigen::MatrixXd gram = sys.vectors.transpose() * sys.vectors;
    EXPECT_LE((gram - Eigen::MatrixXd::Identity(30, 30)).cwiseAbs().maxCoeff(), 1e-8);
    const Eigen::MatrixXd rebuilt = sys.vectors * sys.values.asDiagonal() * sys.vectors.transpose();
    EXPECT_LE((rebuilt - a).norm(), 1e-8 * scale);
  }
}

TEST(Eig, RepeatedRunsAreBitIdentical) {
  const auto a = random_symmetric(25, 11);
  const auto s1 = eig_symmetric(a);
  const auto s2 = eig_symmetric(a);
  EXPECT_EQ(s1.values, s2.values);
  EXPECT_EQ(s1.vectors, s2.vectors);
}

TEST(Eig, AsymmetricInputIsAnError) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 2.001, 1;
  EXPECT_THROW(eig_symmetric(a), NumericalError);
}

TEST(MatrixPower, IdentityStaysIdentity) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(4, 4);
  for (long e : {2L, 8L, 200L}) EXPECT_EQ(matrix_power_even(id, e), id);
}

TEST(MatrixPower, TwoByTwoHandMultiplication) {
  Eigen::MatrixXd a(2, 2);
  a << 0.9, 0.1, 0.1, 0.9;
  const auto p = matrix_power_even(a, 2);
  EXPECT_NEAR(p(0, 0), 0.82, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.18, 1e-15);
  EXPECT_NEAR(p(1, 0), 0.18, 1e-15);
  EXPECT_NEAR(p(1, 1), 0.82, 1e-15);
}

TEST(MatrixPower, MatchesSpectralRoute) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto g = small_graph(50, seed);
    const auto sys = eig_symmetric(g.symmetric);
    for (long e : {2L, 20L, 200L}) {
      const Eigen::VectorXd powered = sys.values.array().pow(static_cast<double>(e));
      const Eigen::MatrixXd spectral = sys.vectors * powered.asDiagonal() * sys.vectors.transpose();
      EXPECT_LE(support::relative_frobenius(matrix_power_even(g.symmetric, e), spectral), 1e-9) << e;
    }
  }
}

TEST(MatrixPower, MatchesNaiveProduct) {
  const Eigen::MatrixXd a = random_symmetric(6, 2) * 0.3;
  Eigen::MatrixXd naive = Eigen::MatrixXd::Identity(6, 6);
  for (int i = 0; i < 14; ++i) naive = naive * a;
  EXPECT_LE(support::relative_frobenius(matrix_power_even(a, 14), naive), 1e-13);
}

TEST(MatrixPower, RejectsOddOrSmallExponents) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(matrix_power_even(id, 3), UsageError);
  EXPECT_THROW(matrix_power_even(id, 0), UsageError);
}

TEST(SelectDimension, BruteForceSplitPicksTwo) {
  Eigen::VectorXd values(5);
  values << 0.9, 0.89, 0.01, 0.009, 0.008;
  const auto sel = select_dimension(values, 1, 5);
  EXPECT_EQ(sel.d, 2u);
  const std::vector<double> x(values.data(), values.data() + values.size());
  std::size_t best = 0;
  for (std::size_t d = 1; d <= 5; ++d) {
    const double oracle = brute_force_split(x, d);
    EXPECT_NEAR(sel.curve[d - 1], oracle, 1e-9 * std::abs(oracle) + 1e-9) << d;
    if (best == 0 || oracle > brute_force_split(x, best)) best = d;
  }
  EXPECT_EQ(best, 2u);
}

TEST(SelectDimension, PowersBeforeFitting) {
  Eigen::VectorXd values(6);
  values << 0.99, 0.98, 0.97, 0.9, 0.5, 0.4;
  const auto sel = select_dimension(values, 50, 6);
  std::vector<double> x;
  for (Eigen::Index i = 0; i < values.size(); ++i) x.push_back(std::pow(values(i), 50));
  for (std::size_t d = 1; d <= 6; ++d) EXPECT_NEAR(sel.curve[d - 1], brute_force_split(x, d), 1e-8);
}

TEST(SelectDimension, FlatSpectrumTiesGoToSmallestD) {
  const Eigen::VectorXd values = Eigen::VectorXd::Constant(8, 0.5);
  const auto sel = select_dimension(values, 3, 8);
  EXPECT_EQ(sel.d, 1u);
  for (double v : sel.curve) EXPECT_EQ(v, sel.curve.front());
}

TEST(SelectDimension, InvariantToUniformScaling) {
  Eigen::VectorXd values(7);
  values << 0.95, 0.93, 0.7, 0.3, 0.28, 0.27, 0.1;
  for (double c : {0.5, 0.01, 3.0}) {
    EXPECT_EQ(select_dimension(values, 1, 7).d, select_dimension(c * values, 1, 7).d);
  }
}

TEST(SelectDimension, NeedsThreeValues) {
  EXPECT_THROW(select_dimension(Eigen::VectorXd::Ones(2), 1, 2), NumericalError);
}
