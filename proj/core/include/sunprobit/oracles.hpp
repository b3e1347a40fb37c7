#pragma once

#include <Eigen/Dense>

#include "sunprobit/model.hpp"
#include "sunprobit/sun.hpp"

namespace sunprobit {

enum class OracleMethod { Gibbs, Rejection, Quadrature, PlainMC };

struct OracleReport {
  Eigen::VectorXd estimate;
  Eigen::VectorXd std_error;  // zero for deterministic quadrature
  long draws_or_nodes = 0;
  OracleMethod method = OracleMethod::PlainMC;
  double tolerance = 0.0;  // quadrature self-reported accuracy
};

// Data-augmentation Gibbs sampler for Gaussian priors: alternates
// per-coordinate truncated-normal updates of the augmented vector with the
// Gaussian full conditional of beta. Deliberately avoids the library's
// truncated sampler and CDF kernels so it can serve as an independent check.
PosteriorDraws gibbs_sampler(const SunParams& prior, const ProbitLikelihood& lik,
                             int iters, int burnin, RngStream& rng,
                             int thin = 10);

// Conditioning-construction sampler: draws the (q + h)-variate Gaussian and
// keeps the first block when the second clears -gamma componentwise.
PosteriorDraws rejection_sample_sun(const SunParams& params, int T,
                                    RngStream& rng, long max_tries = 100000000L);

// Deterministic tensor-grid integration of prior density times likelihood over
// a +/-10-scale box around xi. Restricted to q <= 2 (and h, block sizes <= 2).
// estimate(0) holds the log evidence.
OracleReport quadrature_evidence(const SunParams& prior,
                                 const ProbitLikelihood& lik, int nodes = 201);

// Initial-positive-sequence estimate from the chain's autocorrelations.
double effective_sample_size(const Eigen::VectorXd& chain);

}  // namespace sunprobit
