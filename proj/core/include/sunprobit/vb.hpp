#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sunprobit/model.hpp"
#include "sunprobit/sun.hpp"
#include "sunprobit/tmvn_moments.hpp"

namespace sunprobit {

// Augmented representation of the posterior: the latent vector zbar with
// zbar | beta ~ N(eta_pst + X_pst beta, Sigma_pst) and marginal law
// N(gamma_pst, Gamma_pst), both truncated below zero. Satisfies
// Sigma_pst + X_pst Omega X_pst^T = Gamma_pst.
struct AugmentedForm {
  int q = 0;
  int dim = 0;  // h + m
  Eigen::MatrixXd X_pst;      // dim x q
  Eigen::VectorXd eta_pst;    // gamma_pst - X_pst xi
  Eigen::VectorXd gamma_pst;
  SpdMatrix Sigma_pst;
  SpdMatrix Gamma_pst;
  SpdMatrix V_pst;            // (X^T Sigma^-1 X + Omega^-1)^-1, via low-rank identity
  Eigen::VectorXd xi;
  SpdMatrix Omega;
};

AugmentedForm augmented_form(const SunParams& posterior,
                             const ProbitLikelihood& lik);

// Ordered disjoint index sets covering 0..dim-1.
struct Blocking {
  std::vector<std::vector<int>> blocks;

  int total() const;
  void validate(int dim, int size_cap) const;
};

// One block per likelihood unit; prior rows (h > 0) form one leading block.
Blocking default_blocking(const ProbitLikelihood& lik, int h = 0);

Blocking singleton_blocking(int dim);

struct VbOptions {
  double tol = 1e-6;
  int max_iter = 1000;
  TmvnMomentsOptions moments;
};

// Per-block truncated-normal factors q(zbar_c) = TN(0; center_c, Gamma_c)
// together with their first two moments.
struct VBState {
  std::vector<std::vector<int>> blocks;
  std::vector<Eigen::MatrixXd> W;        // coupling, n_c x (dim - n_c)
  std::vector<SpdMatrix> Gamma_c;        // conditional covariance
  std::vector<Eigen::VectorXd> center;   // untruncated conditional mean
  std::vector<Eigen::VectorXd> mean;     // E_q[zbar_c]
  std::vector<Eigen::MatrixXd> cov;      // var_q[zbar_c]
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // per-sweep max mean change

  Eigen::VectorXd stacked_mean(int dim) const;
  Eigen::MatrixXd stacked_cov(int dim) const;
};

VBState cavi_pfm(const AugmentedForm& aug, const Blocking& blocking,
                 const VbOptions& options = VbOptions{});

// Posterior mean and covariance of beta under the fitted factorization, by
// total expectation / total variance through the exact q(beta | zbar).
void vb_moments(const VBState& state, const AugmentedForm& aug,
                Eigen::VectorXd* mean, Eigen::MatrixXd* cov);

PosteriorDraws sample_vb(const VBState& state, const AugmentedForm& aug, int T,
                         RngStream& rng,
                         const TmvnOptions& options = TmvnOptions{});

// Monte Carlo class probabilities for one new unit: redraws the family's
// utility noise per sample and tallies the argmax (or sequential gate) rule.
// Argmax ties break toward the smallest class index.
Eigen::VectorXd predict_vb(const VBState& state, const AugmentedForm& aug,
                           const ModelSpec& spec, const Eigen::MatrixXd& x_new,
                           int T, RngStream& rng,
                           const TmvnOptions& options = TmvnOptions{});

// Mean-field baseline: q(beta) Gaussian independent of the blockwise
// truncated-normal q(zbar). Requires Sigma_pst block diagonal with respect to
// the blocking.
struct MfState {
  Eigen::VectorXd mean_beta;  // q(beta) = N(mean_beta, V_pst)
  std::vector<std::vector<int>> blocks;
  std::vector<SpdMatrix> Sigma_c;
  std::vector<Eigen::VectorXd> center;
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> cov;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;

  Eigen::VectorXd stacked_mean(int dim) const;
};

MfState cavi_mf(const AugmentedForm& aug, const Blocking& blocking,
                const VbOptions& options = VbOptions{});

// KL[q(zbar) || p(zbar | y, X)]. Equals the joint KL for the partially
// factorized family because q(beta | zbar) is exact.
double kl_zbar(const VBState& state, const AugmentedForm& aug,
               const CdfSettings& cdf = CdfSettings{});

// The zbar part of the mean-field KL, plus the full joint value including the
// Gaussian beta-factor mismatch.
double kl_zbar_mf(const MfState& state, const AugmentedForm& aug,
                  const CdfSettings& cdf = CdfSettings{});
double kl_joint_mf(const MfState& state, const AugmentedForm& aug,
                   const CdfSettings& cdf = CdfSettings{});

}  // namespace sunprobit
