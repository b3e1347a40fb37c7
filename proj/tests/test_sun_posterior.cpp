#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sunprobit/errors.hpp"
#include "sunprobit/model.hpp"
#include "sunprobit/normal.hpp"
#include "sunprobit/sun.hpp"
#include "test_helpers.hpp"

using namespace sunprobit;

namespace {

// One sequential binary observation x = 1, y = 1 under a standard normal
// prior: the posterior is the standard skew-normal 2 phi(b) Phi(b).
ProbitLikelihood binary_obs(double x, int y) {
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 2;
  spec.p = 1;
  Dataset d;
  d.n = 1;
  d.y.resize(1);
  d.y(0) = y;
  d.X.resize(1, 1);
  d.X(0, 0) = x;
  return build_likelihood(spec, d);
}

double mvn_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                   const SpdMatrix& cov) {
  const Eigen::VectorXd diff = x - mean;
  const Eigen::VectorXd sol = cov.solve(diff);
  return -0.5 * (diff.dot(sol) + cov.log_det() +
                 x.size() * std::log(2.0 * M_PI));
}

}  // namespace

TEST_CASE("construction validates the latent correlation diagonal") {
  Eigen::MatrixXd gamma_mat(1, 1);
  gamma_mat << 1.5;
  Eigen::MatrixXd delta(1, 1);
  delta << 0.2;
  CHECK_THROWS_AS(SunParams(Eigen::VectorXd::Zero(1),
                            Eigen::MatrixXd::Identity(1, 1), delta,
                            Eigen::VectorXd::Zero(1), gamma_mat),
                  ConfigError);
}

TEST_CASE("density degenerates to the Gaussian when h = 0") {
  RngStream rng(3);
  const Eigen::MatrixXd omega = testutil::random_correlation(3, rng) * 2.0;
  Eigen::VectorXd xi(3);
  xi << 0.5, -1.0, 0.2;
  const SunParams g = SunParams::gaussian(xi, omega);
  const SpdMatrix cov = chol_psd(omega);
  Eigen::VectorXd beta(3);
  beta << 0.1, 0.4, -0.7;
  CHECK(sun_log_density(g, beta) ==
        doctest::Approx(mvn_log_pdf(beta, xi, cov)).epsilon(1e-10));
}

TEST_CASE("density reproduces the standard skew-normal") {
  Eigen::MatrixXd delta(1, 1);
  delta << 1.0 / std::sqrt(2.0);
  const SunParams sn(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1),
                     delta, Eigen::VectorXd::Zero(1),
                     Eigen::MatrixXd::Identity(1, 1));
  for (double b : {-1.5, -0.2, 0.0, 0.8, 2.1}) {
    Eigen::VectorXd beta(1);
    beta << b;
    const double expect = std::log(2.0) + log_norm_pdf(b) + log_norm_cdf(b);
    CHECK(sun_log_density(sn, beta) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("zero skewness cancels the truncation terms") {
  RngStream rng(4);
  const Eigen::MatrixXd gamma_mat = testutil::random_correlation(2, rng);
  const SunParams flat(Eigen::VectorXd::Zero(2),
                       Eigen::MatrixXd::Identity(2, 2),
                       Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Ones(2),
                       gamma_mat);
  const SpdMatrix id = chol_psd(Eigen::MatrixXd::Identity(2, 2));
  Eigen::VectorXd beta(2);
  beta << 0.3, -0.4;
  CHECK(sun_log_density(flat, beta) ==
        doctest::Approx(mvn_log_pdf(beta, Eigen::VectorXd::Zero(2), id))
            .epsilon(1e-6));
}

TEST_CASE("one binary observation yields the skew-normal posterior") {
  const SunParams prior =
      SunParams::gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  const SunParams post = posterior_update(prior, binary_obs(1.0, 1));
  CHECK(post.q() == 1);
  CHECK(post.h() == 1);
  CHECK(post.xi()(0) == 0.0);
  CHECK(post.Omega().values()(0, 0) == doctest::Approx(1.0));
  CHECK(post.Delta()(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(post.gamma()(0) == doctest::Approx(0.0));
  CHECK(post.Gamma().values()(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("empty data leaves the prior unchanged") {
  RngStream rng(5);
  const SunParams prior = testutil::random_sun(2, 1, rng);
  ProbitLikelihood empty;
  empty.m = 0;
  empty.q = 2;
  empty.Xbar.resize(0, 2);
  const SunParams post = posterior_update(prior, empty);
  CHECK(post.h() == prior.h());
  CHECK((post.Delta() - prior.Delta()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((post.gamma() - prior.gamma()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("posterior latent correlation keeps a unit diagonal") {
  RngStream rng(6);
  const SunParams prior = testutil::random_sun(3, 2, rng);
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 2;
  spec.p = 3;
  const Dataset data = testutil::random_dataset(spec, 4, rng);
  const SunParams post =
      posterior_update(prior, build_likelihood(spec, data));
  CHECK((post.Gamma().values().diagonal().array() - 1.0).abs().maxCoeff() <
        1e-12);
}

TEST_CASE("conjugacy identity holds pointwise on a grid") {
  RngStream rng(7);
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 3;
  spec.p = 1;
  const Dataset data = testutil::random_dataset(spec, 2, rng);
  const ProbitLikelihood lik = build_likelihood(spec, data);
  const SunParams prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(2), 4.0 * Eigen::MatrixXd::Identity(2, 2));
  const SunParams post = posterior_update(prior, lik);
  const double log_ev = log_evidence(prior, lik);
  for (int g = 0; g < 10; ++g) {
    Eigen::VectorXd beta(2);
    beta << -3.0 + 0.6 * g, 2.5 - 0.5 * g;
    const double residual = sun_log_density(prior, beta) +
                            likelihood_eval(lik, beta) - log_ev -
                            sun_log_density(post, beta);
    CHECK(std::fabs(residual) < 1e-4);
  }
}

TEST_CASE("sampler reduces to the Gaussian when skewness vanishes") {
  RngStream rng(8);
  const SunParams flat(Eigen::VectorXd::Zero(2),
                       Eigen::MatrixXd::Identity(2, 2),
                       Eigen::MatrixXd::Zero(2, 1), Eigen::VectorXd::Zero(1),
                       Eigen::MatrixXd::Identity(1, 1));
  const int T = 100000;
  const PosteriorDraws d = sample_posterior(flat, T, rng);
  for (int j = 0; j < 2; ++j) {
    CHECK(std::fabs(d.draws.col(j).mean()) < 4.0 / std::sqrt(double(T)));
    const double var = (d.draws.col(j).array() - d.draws.col(j).mean())
                           .square()
                           .sum() /
                       (T - 1);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("sampler matches the skew-normal mean") {
  RngStream rng(9);
  Eigen::MatrixXd delta(1, 1);
  delta << 1.0 / std::sqrt(2.0);
  const SunParams sn(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1),
                     delta, Eigen::VectorXd::Zero(1),
                     Eigen::MatrixXd::Identity(1, 1));
  const int T = 100000;
  const PosteriorDraws d = sample_posterior(sn, T, rng);
  const double expect = 1.0 / std::sqrt(M_PI);
  const double sd = std::sqrt(1.0 - 1.0 / M_PI);
  CHECK(std::fabs(d.draws.col(0).mean() - expect) <
        4.0 * sd / std::sqrt(double(T)));
}

TEST_CASE("sampling is reproducible and stable under a vacuous update") {
  RngStream a(10), b(10);
  const SunParams prior =
      SunParams::gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  ProbitLikelihood empty;
  empty.m = 0;
  empty.q = 2;
  empty.Xbar.resize(0, 2);
  const SunParams post = posterior_update(prior, empty);
  const PosteriorDraws da = sample_posterior(prior, 50, a);
  const PosteriorDraws db = sample_posterior(post, 50, b);
  CHECK(da.draws == db.draws);
}

TEST_CASE("evidence closed forms for binary observations") {
  // A single symmetric binary observation carries probability 1/2
  // irrespective of the predictor value and the prior scale.
  for (double x : {0.3, 1.0, 2.5}) {
    for (double om : {0.5, 1.0, 4.0}) {
      const SunParams prior = SunParams::gaussian(
          Eigen::VectorXd::Zero(1), om * Eigen::MatrixXd::Identity(1, 1));
      CHECK(std::exp(log_evidence(prior, binary_obs(x, 1))) ==
            doctest::Approx(0.5).epsilon(1e-6));
    }
  }
  // Two identical binary observations: the joint orthant has correlation
  // one half, giving probability 1/3.
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 2;
  spec.p = 1;
  Dataset d;
  d.n = 2;
  d.y.resize(2);
  d.y << 1, 1;
  d.X = Eigen::MatrixXd::Ones(2, 1);
  const SunParams prior =
      SunParams::gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  CHECK(std::exp(log_evidence(prior, build_likelihood(spec, d))) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-5));
}

TEST_CASE("evidence telescopes through the one-unit predictive mass") {
  RngStream rng(11);
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 3;
  spec.p = 2;
  const Dataset data = testutil::random_dataset(spec, 3, rng);
  const ProbitLikelihood lik = build_likelihood(spec, data);
  const SunParams prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(4), 2.0 * Eigen::MatrixXd::Identity(4, 4));
  Eigen::MatrixXd x_new(1, 2);
  x_new << 0.6, -0.2;
  const int label = 2;
  const ProbitLikelihood expanded = build_expanded(lik, spec, x_new, label);
  double raw = 0.0;
  const Eigen::VectorXd probs = predict_exact(prior, spec, lik, x_new,
                                              CdfSettings{}, &raw);
  const double lhs = log_evidence(prior, expanded);
  const double rhs =
      log_evidence(prior, lik) + std::log(probs(label - 1) * raw);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
}

TEST_CASE("prior prediction for a fresh sequential unit is symmetric") {
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 3;
  spec.p = 2;
  ProbitLikelihood empty;
  empty.m = 0;
  empty.q = 4;
  empty.Xbar.resize(0, 4);
  const SunParams prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Identity(4, 4));
  Eigen::MatrixXd x_new(1, 2);
  x_new << 0.8, -0.5;
  double raw = 0.0;
  const Eigen::VectorXd probs =
      predict_exact(prior, spec, empty, x_new, CdfSettings{}, &raw);
  CHECK(probs(0) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(probs(1) == doctest::Approx(0.25).epsilon(1e-5));
  CHECK(probs(2) == doctest::Approx(0.25).epsilon(1e-5));
  CHECK(probs.sum() == doctest::Approx(1.0));
  CHECK(raw == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("marginal subsetting is consistent") {
  RngStream rng(12);
  const SunParams params = testutil::random_sun(3, 2, rng);
  const SunParams full = marginal_subset(params, {0, 1, 2});
  CHECK((full.xi() - params.xi()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((full.Delta() - params.Delta()).cwiseAbs().maxCoeff() == 0.0);

  const SunParams sub = marginal_subset(params, {2, 0});
  CHECK(sub.q() == 2);
  CHECK(sub.h() == 2);
  CHECK(sub.xi()(0) == params.xi()(2));
  CHECK(sub.Omega().values()(0, 1) ==
        doctest::Approx(params.Omega().values()(2, 0)));
  CHECK(sub.Delta()(0, 0) == params.Delta()(2, 0));

  CHECK_THROWS_AS(marginal_subset(params, {0, 0}), IndexOutOfRange);
  CHECK_THROWS_AS(marginal_subset(params, {3}), IndexOutOfRange);

  const SunParams g = SunParams::gaussian(
      params.xi(), params.Omega().values());
  const SunParams gsub = marginal_subset(g, {1});
  CHECK(gsub.h() == 0);
  CHECK(gsub.Omega().values()(0, 0) ==
        doctest::Approx(params.Omega().values()(1, 1)));
}

TEST_CASE("caps are enforced with dedicated errors") {
  const SunParams prior =
      SunParams::gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  SunCaps caps;
  caps.sampler_cap = 0;
  caps.cdf_cap = 0;
  RngStream rng(13);
  CHECK_THROWS_AS(
      sample_posterior(posterior_update(prior, binary_obs(1.0, 1)), 10, rng,
                       TmvnOptions{}, caps),
      DimensionTooLarge);
  CHECK_THROWS_AS(log_evidence(prior, binary_obs(1.0, 1), CdfSettings{}, caps),
                  DimensionTooLarge);
}
