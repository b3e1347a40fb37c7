#pragma once

#include <Eigen/Dense>
#include <string>

#include "sunprobit/mvn_cdf.hpp"
#include "sunprobit/rng.hpp"
#include "sunprobit/spd_matrix.hpp"

namespace sunprobit {

// i.i.d. draws mean + L eta, eta standard normal. Rows are draws.
Eigen::MatrixXd sample_mvn(const Eigen::VectorXd& mean, const SpdMatrix& cov,
                           int count, RngStream& rng);

struct TmvnOptions {
  int dim_cap = 500;
  double acceptance_floor = 1e-6;  // below this, switch to thinned Gibbs
  int gibbs_burnin = 200;
  int gibbs_thin = 100;
  CdfSettings cdf;  // used for the feasibility / acceptance estimate
};

struct TmvnMeta {
  std::string method;          // "rejection", "tilted" or "gibbs"
  double acceptance_rate = 1.0;  // realized (rejection/tilted) or estimated
  double log_region_prob = 0.0;
  bool degraded = false;  // true when the Gibbs fallback was taken
};

// i.i.d. draws from N(mean, cov) conditioned on z > lower (componentwise).
// Exponentially tilted accept-reject after variable reordering; falls back to
// thinned per-coordinate Gibbs when the estimated acceptance drops below
// options.acceptance_floor. Every returned draw satisfies the constraint
// exactly.
Eigen::MatrixXd sample_tmvn(const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& mean, const SpdMatrix& cov,
                            int count, RngStream& rng,
                            const TmvnOptions& options = TmvnOptions{},
                            TmvnMeta* meta = nullptr);

}  // namespace sunprobit
