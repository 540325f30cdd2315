#pragma once

#include <Eigen/Dense>

namespace dmaps {

/// Target of the unconstrained formulation: B = A^{2t} - sqrt(pi) sqrt(pi)^T.
struct GramTarget {
  Eigen::MatrixXd b;
  Eigen::VectorXd pi;
  Eigen::VectorXd sqrt_pi;
  int t = 1;

  Eigen::Index size() const { return b.rows(); }
};

/// || Pi^1/2 G^T G Pi^1/2 - B ||_F^2 for an embedding with rows G^T.
inline double gram_objective(const GramTarget& target, const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd weighted = target.sqrt_pi.asDiagonal() * rows;
  return (weighted * weighted.transpose() - target.b).squaredNorm();
}

}  // namespace dmaps
