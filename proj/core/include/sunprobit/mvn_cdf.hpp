#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "sunprobit/normal.hpp"
#include "sunprobit/spd_matrix.hpp"

namespace sunprobit {

struct CdfSettings {
  double tol = 1e-6;
  long max_points = 4000000;  // total integrand evaluations across all shifts
  std::uint64_t seed = 0x5eedcdfULL;
  int shifts = 12;  // randomized lattice shifts; error = 3x shift-wise SE
};

struct CdfResult {
  double log_prob = 0.0;       // natural log of the rectangle probability
  double err_estimate = 0.0;   // estimated absolute error of the probability
  long points_used = 0;
  bool tolerance_met = true;
};

// P(Z <= upper) for Z ~ N(0, cov). Exact for d = 1; separation-of-variables
// with variable reordering and a randomized quasi-Monte Carlo lattice for
// d >= 2. Deterministic given settings.seed. Entries of `upper` at +/-1e308
// are treated as infinite.
CdfResult mvn_cdf(const Eigen::VectorXd& upper, const SpdMatrix& cov,
                  const CdfSettings& settings = CdfSettings{});

// P(Z > lower), by symmetry of the zero-mean Gaussian.
CdfResult mvn_upper_orthant(const Eigen::VectorXd& lower, const SpdMatrix& cov,
                            const CdfSettings& settings = CdfSettings{});

namespace detail {
// Variable reordering + in-place Cholesky used by both the CDF and the
// truncated sampler. `c` becomes the (permuted) lower factor, `b` the
// permuted bounds.
// When `perm` is non-null it receives the permutation: perm[i] is the
// original index now sitting at position i.
void order_and_factor(Eigen::MatrixXd& c, Eigen::VectorXd& b,
                      std::vector<int>* perm = nullptr);
}  // namespace detail

}  // namespace sunprobit
