#pragma once

#include <Eigen/Dense>

#include "sunprobit/mvn_cdf.hpp"
#include "sunprobit/spd_matrix.hpp"

namespace sunprobit {

struct TmvnMomentsOptions {
  int dim_cap = 10;
  CdfSettings cdf;  // fixed seed keeps the recursion deterministic
};

// Exact first and second moments of N(mean, cov) restricted to z > lower,
// via closed-form univariate formulas for d = 1 and the reduction formulas
// (one mvn_cdf per recursion step) for d >= 2. Intended for the small
// per-block dimensions of the variational scheme.
void tmvn_moments(const Eigen::VectorXd& lower, const Eigen::VectorXd& mean,
                  const SpdMatrix& cov, Eigen::VectorXd* out_mean,
                  Eigen::MatrixXd* out_cov,
                  const TmvnMomentsOptions& options = TmvnMomentsOptions{});

}  // namespace sunprobit
