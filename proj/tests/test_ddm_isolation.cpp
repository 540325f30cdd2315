// Compiles the network module on its own: it must not pull in the
// eigendecomposition.
#include "dmaps/ddm.hpp"

#ifdef DMAPS_SPECTRAL_INCLUDED
#error "ddm.hpp must not depend on the spectral module"
#endif

#include <gtest/gtest.h>

TEST(DdmIsolation, TrainsFromAHandMadeTarget) {
  dmaps::GramTarget target;
  target.pi = Eigen::VectorXd::Constant(6, 1.0 / 6.0);
  target.sqrt_pi = target.pi.cwiseSqrt();
  target.b = Eigen::MatrixXd::Identity(6, 6) / 6.0 - Eigen::MatrixXd::Constant(6, 6, 1.0 / 36.0);
  dmaps::DataMatrix data;
  data.points = Eigen::MatrixXd::Identity(6, 6);
  dmaps::TrainConfig config;
  config.epochs = 3;
  config.hidden = {4};
  config.output_dim = 2;
  config.validation_fraction = 0.2;
  const auto result = dmaps::train(data, target, config);
  EXPECT_EQ(result.report.train_loss.size(), 3u);
}
