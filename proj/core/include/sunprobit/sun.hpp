#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "sunprobit/model.hpp"
#include "sunprobit/mvn_sampling.hpp"
#include "sunprobit/spd_matrix.hpp"

namespace sunprobit {

// The five-parameter unified skew-normal SUN_{q,h}(xi, Omega, Delta, gamma,
// Gamma). Gamma must have unit diagonal; h = 0 degenerates to N_q(xi, Omega).
class SunParams {
 public:
  SunParams(Eigen::VectorXd xi, const Eigen::MatrixXd& omega_mat,
            Eigen::MatrixXd delta, Eigen::VectorXd gamma,
            const Eigen::MatrixXd& gamma_mat);

  // Gaussian special case, h = 0.
  static SunParams gaussian(Eigen::VectorXd xi, const Eigen::MatrixXd& omega);

  int q() const { return q_; }
  int h() const { return h_; }
  const Eigen::VectorXd& xi() const { return xi_; }
  const SpdMatrix& Omega() const { return omega_mat_; }
  const Eigen::MatrixXd& Delta() const { return delta_; }
  const Eigen::VectorXd& gamma() const { return gamma_; }
  const SpdMatrix& Gamma() const { return gamma_mat_; }

  const Eigen::VectorXd& omega_diag() const { return omega_diag_; }  // scale
  const Eigen::MatrixXd& Omega_bar() const { return omega_bar_; }    // correlation

 private:
  int q_ = 0, h_ = 0;
  Eigen::VectorXd xi_;
  SpdMatrix omega_mat_;
  Eigen::MatrixXd delta_;
  Eigen::VectorXd gamma_;
  SpdMatrix gamma_mat_;
  Eigen::VectorXd omega_diag_;
  Eigen::MatrixXd omega_bar_;
};

struct PosteriorDraws {
  Eigen::MatrixXd draws;  // T x q
  std::uint64_t seed = 0;
  TmvnMeta tmvn_meta;
};

struct SunCaps {
  int sampler_cap = 500;     // refuse exact sampling when h + m exceeds this
  int cdf_cap = 1000;        // refuse evidence / prediction beyond this
};

double sun_log_density(const SunParams& params, const Eigen::VectorXd& beta,
                       const CdfSettings& cdf = CdfSettings{});

// Conjugate update: SUN prior x probit likelihood -> SUN
// posterior with h + m latent dimensions.
SunParams posterior_update(const SunParams& prior, const ProbitLikelihood& lik);

PosteriorDraws sample_posterior(const SunParams& params, int T, RngStream& rng,
                                const TmvnOptions& options = TmvnOptions{},
                                const SunCaps& caps = SunCaps{});

double log_evidence(const SunParams& prior, const ProbitLikelihood& lik,
                    const CdfSettings& cdf = CdfSettings{},
                    const SunCaps& caps = SunCaps{});

// Exact class-predictive probabilities for one new unit (closed-form CDF
// ratios). Output is renormalized to sum to 1; raw_sum reports the
// pre-normalization total as a diagnostic.
Eigen::VectorXd predict_exact(const SunParams& prior, const ModelSpec& spec,
                              const ProbitLikelihood& lik,
                              const Eigen::MatrixXd& x_new,
                              const CdfSettings& cdf = CdfSettings{},
                              double* raw_sum = nullptr,
                              const SunCaps& caps = SunCaps{});

// Coordinate-subset marginal (SUN closure under marginalization).
SunParams marginal_subset(const SunParams& params,
                          const std::vector<int>& indices);

}  // namespace sunprobit
