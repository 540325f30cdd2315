#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dmaps/ddm.hpp"
#include "dmaps/diffusion.hpp"
#include "dmaps/metrics.hpp"
#include "support.hpp"

using namespace dmaps;

namespace {

// Target of an exactly embeddable configuration: B = Pi^1/2 G G^T Pi^1/2.
GramTarget target_from(const Eigen::MatrixXd& g, const Eigen::VectorXd& pi) {
  GramTarget target;
  target.pi = pi;
  target.sqrt_pi = pi.cwiseSqrt();
  const Eigen::MatrixXd w = target.sqrt_pi.asDiagonal() * g;
  target.b = w * w.transpose();
  return target;
}

Eigen::VectorXd random_pi(Eigen::Index m, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd pi(m);
  for (Eigen::Index i = 0; i < m; ++i) pi(i) = 0.5 + rng.uniform();
  return pi / pi.sum();
}

std::vector<std::size_t> all_rows(std::size_t m) {
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  return idx;
}

GramTarget toy_target(std::uint64_t seed) {
  KernelConfig c;
  c.sigma = 1.5;
  c.t = 2;
  return gram_target(fit(support::random_cloud(10, 3, seed), c, 2));
}

double loss_of(const MlpModel& model, const RowMatrix& x, const std::vector<std::size_t>& idx,
               const GramTarget& target) {
  return pairwise_loss(forward(model, x), idx, target);
}

}  // namespace

TEST(Forward, ZeroNetworkGivesZero) {
  auto model = make_mlp({3, 5, 2}, 1);
  for (auto& w : model.weights) w.setZero();
  const RowMatrix x = RowMatrix::Random(4, 3);
  EXPECT_EQ(forward(model, x), RowMatrix::Zero(4, 2));
}

TEST(Forward, SingleLinearLayerIsAffine) {
  auto model = make_mlp({2, 2}, 3);
  model.weights[0] << 1, 2, 3, 4;
  model.biases[0] << 0.5, -0.5;
  RowMatrix x(1, 2);
  x << 1, -1;
  const RowMatrix y = forward(model, x);
  EXPECT_DOUBLE_EQ(y(0, 0), 1 - 3 + 0.5);
  EXPECT_DOUBLE_EQ(y(0, 1), 2 - 4 - 0.5);
}

TEST(Forward, InputTransformAndReluHiddenLayer) {
  auto model = make_mlp({1, 1, 1}, 3);
  model.weights[0](0, 0) = 1.0;
  model.weights[1](0, 0) = 2.0;
  model.input_shift = Eigen::RowVectorXd::Constant(1, 1.0);
  model.input_scale = Eigen::RowVectorXd::Constant(1, 0.5);
  RowMatrix x(2, 1);
  x << 5.0, -3.0;
  const RowMatrix y = forward(model, x);
  EXPECT_DOUBLE_EQ(y(0, 0), 4.0);  // relu(2) * 2
  EXPECT_DOUBLE_EQ(y(1, 0), 0.0);  // relu(-2) = 0
}

TEST(Forward, RowsAreIndependentOfBatch) {
  const auto model = make_mlp({3, 16, 8, 2}, 5);
  const RowMatrix x = support::random_cloud(9, 3, 2).points;
  const RowMatrix all = forward(model, x);
  for (Eigen::Index r = 0; r < 9; ++r) EXPECT_EQ(forward(model, x.row(r)), all.row(r));
}

TEST(Forward, WidthMismatchIsADataError) {
  const auto model = make_mlp({3, 2}, 5);
  EXPECT_THROW(forward(model, RowMatrix::Zero(2, 4)), DataError);
}

TEST(Init, UniformFanInBounds) {
  const auto model = make_mlp({6, 50, 3}, 8);
  EXPECT_LE(model.weights[0].cwiseAbs().maxCoeff(), std::sqrt(1.0));
  EXPECT_LE(model.weights[1].cwiseAbs().maxCoeff(), std::sqrt(6.0 / 50.0));
  EXPECT_EQ(model.biases[0], Eigen::RowVectorXd::Zero(50));
  EXPECT_THROW(make_mlp({3}, 1), UsageError);
  EXPECT_THROW(make_mlp({3, 0, 2}, 1), UsageError);
}

TEST(Loss, ExactEmbeddingHasZeroLoss) {
  const Eigen::MatrixXd g = support::random_cloud(12, 2, 4).points;
  const auto target = target_from(g, random_pi(12, 1));
  EXPECT_LE(pairwise_loss(RowMatrix(g), all_rows(12), target), 1e-30);
}

TEST(Loss, ZeroOutputsGiveMeanSquaredTarget) {
  const auto target = toy_target(3);
  const auto idx = all_rows(10);
  EXPECT_NEAR(pairwise_loss(RowMatrix::Zero(10, 2), idx, target), target.b.squaredNorm() / 100.0, 1e-18);
  const std::vector<std::size_t> sub{7, 2, 4};
  double expected = 0.0;
  for (auto i : sub) {
    for (auto j : sub) expected += std::pow(target.b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 2);
  }
  EXPECT_NEAR(pairwise_loss(RowMatrix::Zero(3, 2), sub, target), expected / 9.0, 1e-18);
}

TEST(Loss, OrthogonalInvariance) {
  const auto target = toy_target(5);
  const RowMatrix f = support::random_cloud(10, 2, 6, 0.3).points;
  const double c = std::cos(1.1), s = std::sin(1.1);
  Eigen::Matrix2d q;
  q << c, -s, s, c;
  const Eigen::Matrix2d reflect = Eigen::Vector2d(1.0, -1.0).asDiagonal();
  const auto idx = all_rows(10);
  const double base = pairwise_loss(f, idx, target);
  EXPECT_NEAR(pairwise_loss(RowMatrix(f * q), idx, target), base, 1e-12 * base);
  EXPECT_NEAR(pairwise_loss(RowMatrix(f * reflect), idx, target), base, 1e-12 * base);
}

TEST(Loss, IndexErrors) {
  const auto target = toy_target(5);
  EXPECT_THROW(pairwise_loss(RowMatrix::Zero(2, 2), {0, 1, 2}, target), UsageError);
  EXPECT_THROW(pairwise_loss(RowMatrix::Zero(2, 2), {0, 10}, target), UsageError);
}

TEST(Gradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto target = toy_target(seed + 10);
    auto model = make_mlp({3, 8, 6, 2}, seed);
    Rng rng(seed + 100);
    for (auto& b : model.biases) {
      for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = 0.1 * rng.normal();
    }
    model.input_shift = Eigen::RowVectorXd::Constant(3, 0.1);
    model.input_scale = Eigen::RowVectorXd::Constant(3, 1.3);
    const RowMatrix x = support::random_cloud(10, 3, seed + 10).points;
    const std::vector<std::size_t> idx = {3, 0, 9, 4, 1, 7, 2};
    const RowMatrix xb = detail::gather_rows(x, idx);
    const auto g = backward(model, xb, idx, target);
    const double h = 1e-5;
    auto check = [&](double& param, double analytic, const std::string& where) {
      const double keep = param;
      param = keep + h;
      const double up = loss_of(model, xb, idx, target);
      param = keep - h;
      const double down = loss_of(model, xb, idx, target);
      param = keep;
      const double numeric = (up - down) / (2 * h);
      EXPECT_LE(std::abs(analytic - numeric), std::max(1e-4 * std::abs(numeric), 1e-7)) << where;
    };
    for (std::size_t l = 0; l < model.layers(); ++l) {
      for (Eigen::Index i = 0; i < model.weights[l].rows(); ++i) {
        for (Eigen::Index j = 0; j < model.weights[l].cols(); ++j) {
          check(model.weights[l](i, j), g.weights[l](i, j), "w" + std::to_string(l));
        }
      }
      for (Eigen::Index j = 0; j < model.biases[l].size(); ++j) {
        check(model.biases[l](j), g.biases[l](j), "b" + std::to_string(l));
      }
    }
  }
}

TEST(Gradient, OutputBiasHandFormula) {
  // With a zero last layer every output equals the bias b, so
  // dL/db = (4/n^2) b sum_ij R_ij sqrt(pi_i pi_j), R_ij = sqrt(pi_i pi_j)|b|^2 - B_ij.
  const auto target = toy_target(21);
  auto model = make_mlp({3, 4, 2}, 2);
  model.weights[1].setZero();
  model.biases[1] << 0.3, -0.2;
  const RowMatrix x = support::random_cloud(10, 3, 21).points;
  const auto idx = all_rows(10);
  const auto g = backward(model, x, idx, target);
  const double bb = model.biases[1].squaredNorm();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < 10; ++i) {
    for (Eigen::Index j = 0; j < 10; ++j) {
      const double w = target.sqrt_pi(i) * target.sqrt_pi(j);
      sum += (w * bb - target.b(i, j)) * w;
    }
  }
  const Eigen::RowVectorXd expected = (4.0 / 100.0) * sum * model.biases[1];
  EXPECT_LE((g.biases[1] - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(g.weights[0], RowMatrix::Zero(3, 4));
}

TEST(Gradient, VanishesOnRotatedOptimum) {
  auto model = make_mlp({3, 2}, 4);
  model.biases[0] << 0.2, -0.1;
  const RowMatrix x = support::random_cloud(10, 3, 4).points;
  const auto target = target_from(forward(model, x), random_pi(10, 2));
  const double c = std::cos(0.4), s = std::sin(0.4);
  Eigen::Matrix2d q;
  q << c, -s, s, c;
  model.weights[0] = model.weights[0] * q;
  model.biases[0] = model.biases[0] * q;
  const auto g = backward(model, x, all_rows(10), target);
  double norm2 = g.biases[0].squaredNorm() + g.weights[0].squaredNorm();
  EXPECT_LE(std::sqrt(norm2), 1e-6);
  EXPECT_LE(g.loss, 1e-28);
}

TEST(Gradient, NonFiniteIsReported) {
  const auto target = toy_target(3);
  auto model = make_mlp({3, 2}, 4);
  model.weights[0](0, 0) = std::numeric_limits<double>::infinity();
  const RowMatrix x = support::random_cloud(10, 3, 4).points;
  EXPECT_THROW(backward(model, x, all_rows(10), target), NumericalError);
}

namespace {

// 32 points on a line whose target is a single linear coordinate.
struct LineToy {
  DataMatrix data;
  GramTarget target;
};

LineToy line_toy() {
  LineToy toy;
  toy.data.points.resize(32, 1);
  Eigen::MatrixXd g(32, 1);
  for (Eigen::Index i = 0; i < 32; ++i) {
    toy.data.points(i, 0) = static_cast<double>(i) / 31.0;
    g(i, 0) = 2.0 * toy.data.points(i, 0) - 1.0;
  }
  toy.target = target_from(g, Eigen::VectorXd::Constant(32, 1.0 / 32.0));
  return toy;
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.hidden = {16, 16};
  c.output_dim = 1;
  c.batch_size = 32;
  c.learning_rate = 1e-2;
  return c;
}

}  // namespace

TEST(Train, ZeroEpochsReturnsInitialModel) {
  const auto toy = line_toy();
  auto config = small_config(0);
  config.seed = 9;
  const auto result = train(toy.data, toy.target, config);
  Rng rng(9);
  const auto fresh = make_mlp({1, 16, 16, 1}, rng);
  for (std::size_t l = 0; l < fresh.layers(); ++l) {
    EXPECT_EQ(result.model.weights[l], fresh.weights[l]);
    EXPECT_EQ(result.model.biases[l], fresh.biases[l]);
  }
  EXPECT_EQ(result.report.best_epoch, 0u);
  EXPECT_TRUE(result.report.train_loss.empty());
  EXPECT_EQ(result.report.train_rows.size() + result.report.validation_rows.size(), 32u);
  EXPECT_EQ(result.report.validation_rows.size(), 3u);
}

TEST(Train, SameSeedSameChecksum) {
  const auto toy = line_toy();
  auto config = small_config(20);
  const auto a = train(toy.data, toy.target, config);
  const auto b = train(toy.data, toy.target, config);
  EXPECT_EQ(a.report.checksum, b.report.checksum);
  EXPECT_EQ(a.report.train_loss, b.report.train_loss);
  EXPECT_EQ(a.report.checksum, parameter_checksum(a.model));
  config.seed = 1;
  EXPECT_NE(train(toy.data, toy.target, config).report.checksum, a.report.checksum);
}

TEST(Train, LineToyConverges) {
  const auto toy = line_toy();
  const auto result = train(toy.data, toy.target, small_config(600));
  const auto& loss = result.report.train_loss;
  ASSERT_EQ(loss.size(), 600u);
  // Epoch losses averaged over blocks of 50 epochs.
  std::vector<double> blocks;
  for (std::size_t b = 0; b < 12; ++b) {
    double s = 0.0;
    for (std::size_t e = 50 * b; e < 50 * (b + 1); ++e) s += loss[e];
    blocks.push_back(s / 50.0);
  }
  for (std::size_t b = 1; b < blocks.size(); ++b) EXPECT_LE(blocks[b], blocks[b - 1]) << b;
  EXPECT_LE(loss.back(), 1e-3 * loss.front());
  EXPECT_GE(result.report.best_epoch, 1u);
  EXPECT_EQ(result.report.validation_loss[result.report.best_epoch - 1],
            *std::min_element(result.report.validation_loss.begin(), result.report.validation_loss.end()));
}

TEST(Train, DivergenceNamesTheEpoch) {
  const auto toy = line_toy();
  auto config = small_config(50);
  config.learning_rate = 1e300;
  config.adam_epsilon = 1e-300;
  try {
    train(toy.data, toy.target, config);
    FAIL() << "expected divergence";
  } catch (const ConvergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Train, ValidatesInputs) {
  const auto toy = line_toy();
  auto config = small_config(1);
  config.batch_size = 1;
  EXPECT_THROW(train(toy.data, toy.target, config), UsageError);
  config = small_config(1);
  config.validation_fraction = 1.0;
  EXPECT_THROW(train(toy.data, toy.target, config), UsageError);
  DataMatrix shorter;
  shorter.points = toy.data.points.topRows(10);
  EXPECT_THROW(train(shorter, toy.target, small_config(1)), DataError);
}

TEST(Predict, PartitionIndependentAndShapes) {
  const auto model = make_mlp({3, 16, 2}, 2);
  const auto data = support::random_cloud(25, 3, 7);
  const auto whole = predict(model, data);
  DataMatrix head, tail;
  head.points = data.points.topRows(11);
  tail.points = data.points.bottomRows(14);
  EXPECT_EQ(predict(model, head).coords, whole.coords.topRows(11));
  EXPECT_EQ(predict(model, tail).coords, whole.coords.bottomRows(14));
  DataMatrix one;
  one.points = data.points.row(3);
  EXPECT_EQ(predict(model, one).coords.rows(), 1);
  DataMatrix none;
  none.points.resize(0, 3);
  EXPECT_EQ(predict(model, none).coords.cols(), 2);
}

TEST(NetworkFile, RoundTripIsBitExact) {
  auto model = make_mlp({3, 7, 5, 2}, 11);
  model.biases[1](2) = -1.0 / 3.0;
  model.input_shift = Eigen::RowVector3d(0.1, -2.0, 1e-17);
  model.input_scale = Eigen::RowVector3d(3.0, 0.7, 1e5);
  model.diffusion_time = 100;
  std::stringstream buffer;
  save_network(buffer, model);
  const auto back = load_network(buffer);
  EXPECT_EQ(back.layer_sizes, model.layer_sizes);
  EXPECT_EQ(back.diffusion_time, 100);
  EXPECT_EQ(back.input_shift, model.input_shift);
  EXPECT_EQ(back.input_scale, model.input_scale);
  for (std::size_t l = 0; l < model.layers(); ++l) {
    EXPECT_EQ(back.weights[l], model.weights[l]);
    EXPECT_EQ(back.biases[l], model.biases[l]);
  }
  EXPECT_EQ(parameter_checksum(back), parameter_checksum(model));
}

TEST(NetworkFile, IdentityInputRoundTrip) {
  const auto model = make_mlp({2, 3}, 1);
  std::stringstream buffer;
  save_network(buffer, model);
  EXPECT_NE(buffer.str().find("input none"), std::string::npos);
  EXPECT_EQ(load_network(buffer).input_shift.size(), 0);
}

TEST(NetworkFile, CorruptInputIsADataError) {
  std::stringstream wrong("dmaps-mlp 2\n");
  EXPECT_THROW(load_network(wrong), DataError);
  const auto model = make_mlp({2, 3}, 1);
  std::stringstream buffer;
  save_network(buffer, model);
  std::string text = buffer.str();
  std::stringstream cut(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_network(cut), DataError);
}

// Benchmark Helix configuration, 1000/1000 split, compared with the diffusion
// map of all 2000 points on the held-out half.
TEST(TrainSlow, HelixHeldOutErrorWithinFivePercent) {
  const auto data = generate_helix(2000, 7);
  const auto parts = split(data, 1000, 11);
  KernelConfig c;
  c.quantile = 3e-2;
  c.alpha = 1.0;
  c.t = 100;
  c = resolve_bandwidth(data, c);
  const auto reference = embed(fit(data, c, 2));
  Embedding ref_b;
  ref_b.coords.resize(1000, 2);
  for (Eigen::Index r = 0; r < 1000; ++r) {
    ref_b.coords.row(r) = reference.coords.row(static_cast<Eigen::Index>(parts.second_rows[static_cast<std::size_t>(r)]));
  }
  const auto model_a = fit(parts.first, c, 2);
  TrainConfig config;
  config.epochs = 4000;
  const auto result = train(parts.first, gram_target(model_a), config);
  const double err = mre(predict(result.model, parts.second), ref_b);
  RecordProperty("held_out_mre", std::to_string(err));
  EXPECT_LE(err, 0.05);
}
