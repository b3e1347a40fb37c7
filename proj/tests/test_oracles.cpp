#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sunprobit/model.hpp"
#include "sunprobit/oracles.hpp"
#include "sunprobit/sun.hpp"
#include "test_helpers.hpp"

using namespace sunprobit;

TEST_CASE("rejection sampler with zero skewness returns plain Gaussian draws") {
  RngStream rng(301);
  const SunParams flat(Eigen::VectorXd::Zero(2),
                       Eigen::MatrixXd::Identity(2, 2),
                       Eigen::MatrixXd::Zero(2, 1), Eigen::VectorXd::Zero(1),
                       Eigen::MatrixXd::Identity(1, 1));
  const int T = 50000;
  const PosteriorDraws d = rejection_sample_sun(flat, T, rng);
  // Independence of the two Gaussian blocks: acceptance equals the orthant
  // probability of the latent block, one half here.
  CHECK(d.tmvn_meta.acceptance_rate == doctest::Approx(0.5).epsilon(0.05));
  for (int j = 0; j < 2; ++j)
    CHECK(std::fabs(d.draws.col(j).mean()) < 4.0 / std::sqrt(double(T)));
}

TEST_CASE("rejection sampler accepts everything for a Gaussian") {
  RngStream rng(302);
  const SunParams g = SunParams::gaussian(Eigen::VectorXd::Zero(2),
                                          Eigen::MatrixXd::Identity(2, 2));
  const PosteriorDraws d = rejection_sample_sun(g, 1000, rng);
  CHECK(d.tmvn_meta.acceptance_rate == doctest::Approx(1.0));
}

TEST_CASE("rejection sampler reproduces the skew-normal mean") {
  RngStream rng(303);
  Eigen::MatrixXd delta(1, 1);
  delta << 1.0 / std::sqrt(2.0);
  const SunParams sn(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1),
                     delta, Eigen::VectorXd::Zero(1),
                     Eigen::MatrixXd::Identity(1, 1));
  const int T = 100000;
  const PosteriorDraws d = rejection_sample_sun(sn, T, rng);
  const double sd = std::sqrt(1.0 - 1.0 / M_PI);
  CHECK(std::fabs(d.draws.col(0).mean() - 1.0 / std::sqrt(M_PI)) <
        4.0 * sd / std::sqrt(double(T)));
}

TEST_CASE("gibbs sampler agrees with the exact sampler on a small instance") {
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 2;
  spec.p = 2;
  RngStream data_rng(304);
  const Dataset data = testutil::random_dataset(spec, 4, data_rng);
  const ProbitLikelihood lik = build_likelihood(spec, data);
  const SunParams prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(2), 4.0 * Eigen::MatrixXd::Identity(2, 2));
  const SunParams post = posterior_update(prior, lik);

  RngStream g(305);
  const PosteriorDraws chain = gibbs_sampler(prior, lik, 40000, 8000, g);
  RngStream e(306);
  const PosteriorDraws exact = sample_posterior(post, 40000, e);

  for (int j = 0; j < 2; ++j) {
    const double gm = chain.draws.col(j).mean();
    const double em = exact.draws.col(j).mean();
    const double gvar =
        (chain.draws.col(j).array() - gm).square().sum() /
        (chain.draws.rows() - 1);
    const double evar =
        (exact.draws.col(j).array() - em).square().sum() /
        (exact.draws.rows() - 1);
    const double ess = effective_sample_size(chain.draws.col(j));
    const double se =
        std::sqrt(gvar / ess + evar / exact.draws.rows());
    CHECK(std::fabs(gm - em) < 4.0 * se);
  }
}

TEST_CASE("quadrature reproduces the closed-form evidence values") {
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 2;
  spec.p = 1;
  Dataset one;
  one.n = 1;
  one.y.resize(1);
  one.y << 1;
  one.X = Eigen::MatrixXd::Ones(1, 1);
  const SunParams prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  const OracleReport half =
      quadrature_evidence(prior, build_likelihood(spec, one));
  CHECK(std::exp(half.estimate(0)) == doctest::Approx(0.5).epsilon(1e-6));

  Dataset two;
  two.n = 2;
  two.y.resize(2);
  two.y << 1, 1;
  two.X = Eigen::MatrixXd::Ones(2, 1);
  const OracleReport third =
      quadrature_evidence(prior, build_likelihood(spec, two));
  CHECK(std::exp(third.estimate(0)) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("quadrature normalizes an empty likelihood to one") {
  ProbitLikelihood empty;
  empty.m = 0;
  empty.q = 1;
  empty.Xbar.resize(0, 1);
  const SunParams prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(1), 2.0 * Eigen::MatrixXd::Identity(1, 1));
  const OracleReport rep = quadrature_evidence(prior, empty);
  CHECK(rep.estimate(0) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("quadrature agrees with the closed-form evidence on seeded data") {
  ModelSpec spec;
  spec.family = Family::ClassSpecific;
  spec.L = 3;
  spec.p = 1;
  spec.Sigma = Eigen::MatrixXd::Identity(3, 3);
  RngStream rng(307);
  const Dataset data = testutil::random_dataset(spec, 2, rng);
  const ProbitLikelihood lik = build_likelihood(spec, data);
  const SunParams prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(2), 2.0 * Eigen::MatrixXd::Identity(2, 2));
  const double closed = log_evidence(prior, lik);
  const OracleReport quad = quadrature_evidence(prior, lik);
  CHECK(std::fabs(closed - quad.estimate(0)) <
        1e-3 * std::max(1.0, std::fabs(quad.estimate(0))));
}

TEST_CASE("effective sample size detects autocorrelation") {
  RngStream rng(308);
  const int n = 20000;
  Eigen::VectorXd iid(n), ar(n);
  double prev = 0.0;
  for (int t = 0; t < n; ++t) {
    iid(t) = rng.normal();
    prev = 0.9 * prev + rng.normal();
    ar(t) = prev;
  }
  const double ess_iid = effective_sample_size(iid);
  const double ess_ar = effective_sample_size(ar);
  CHECK(ess_iid > 0.5 * n);
  CHECK(ess_iid <= 1.5 * n);
  // AR(1) with coefficient 0.9 has an autocorrelation time near 19.
  CHECK(ess_ar < 0.15 * n);
}
