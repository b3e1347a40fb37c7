#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sunprobit/model.hpp"
#include "sunprobit/sun.hpp"
#include "sunprobit/vb.hpp"
#include "test_helpers.hpp"

using namespace sunprobit;

namespace {

struct Instance {
  ModelSpec spec;
  Dataset data;
  ProbitLikelihood lik;
  SunParams prior;
  SunParams post;
  AugmentedForm aug;
};

Instance make_sequential(int n, int p, int L, double omega_scale,
                         std::uint64_t seed) {
  Instance inst{ModelSpec{},
                Dataset{},
                ProbitLikelihood{},
                SunParams::gaussian(Eigen::VectorXd::Zero(1),
                                    Eigen::MatrixXd::Identity(1, 1)),
                SunParams::gaussian(Eigen::VectorXd::Zero(1),
                                    Eigen::MatrixXd::Identity(1, 1)),
                AugmentedForm{}};
  inst.spec.family = Family::Sequential;
  inst.spec.L = L;
  inst.spec.p = p;
  RngStream rng(seed);
  inst.data = testutil::random_dataset(inst.spec, n, rng);
  inst.lik = build_likelihood(inst.spec, inst.data);
  const int q = inst.spec.q();
  inst.prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(q),
      omega_scale * omega_scale * Eigen::MatrixXd::Identity(q, q));
  inst.post = posterior_update(inst.prior, inst.lik);
  inst.aug = augmented_form(inst.post, inst.lik);
  return inst;
}

}  // namespace

TEST_CASE("augmented form identities for Gaussian priors") {
  const Instance inst = make_sequential(4, 2, 3, 2.0, 101);
  CHECK(inst.aug.eta_pst.cwiseAbs().maxCoeff() < 1e-12);
  // Sigma_pst is the standardized noise covariance, block diagonal by unit.
  const Eigen::MatrixXd lam = inst.lik.lambda_dense();
  Eigen::VectorXd s(inst.lik.m);
  const Eigen::MatrixXd w =
      inst.lik.Xbar * inst.prior.Omega().values() * inst.lik.Xbar.transpose() +
      lam;
  for (int i = 0; i < inst.lik.m; ++i) s(i) = std::sqrt(w(i, i));
  const Eigen::MatrixXd expect =
      s.cwiseInverse().asDiagonal() * lam * s.cwiseInverse().asDiagonal();
  CHECK((inst.aug.Sigma_pst.values() - expect).cwiseAbs().maxCoeff() < 1e-10);
  // Low-rank decomposition of the latent correlation.
  const Eigen::MatrixXd recon =
      inst.aug.Sigma_pst.values() +
      inst.aug.X_pst * inst.prior.Omega().values() * inst.aug.X_pst.transpose();
  CHECK((recon - inst.aug.Gamma_pst.values()).cwiseAbs().maxCoeff() < 1e-8);
  // V_pst equals the direct precision-form inverse on small instances.
  const Eigen::MatrixXd direct =
      (inst.aug.X_pst.transpose() * inst.aug.Sigma_pst.inverse() *
           inst.aug.X_pst +
       inst.prior.Omega().inverse())
          .inverse();
  CHECK((inst.aug.V_pst.values() - direct).cwiseAbs().maxCoeff() <
        1e-6 * direct.cwiseAbs().maxCoeff());
}

TEST_CASE("default blocking follows the unit structure") {
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 3;
  spec.p = 1;
  Dataset d;
  d.n = 3;
  d.y.resize(3);
  d.y << 1, 1, 1;
  d.X = Eigen::MatrixXd::Ones(3, 1);
  const ProbitLikelihood lik = build_likelihood(spec, d);
  const Blocking b = default_blocking(lik);
  CHECK(b.blocks.size() == 3);
  for (const auto& blk : b.blocks) CHECK(blk.size() == 1);

  ModelSpec cs;
  cs.family = Family::ClassSpecific;
  cs.L = 4;
  cs.p = 1;
  cs.Sigma = Eigen::MatrixXd::Identity(4, 4);
  RngStream rng(14);
  const Dataset cdata = testutil::random_dataset(cs, 3, rng);
  const Blocking cb = default_blocking(build_likelihood(cs, cdata));
  CHECK(cb.blocks.size() == 3);
  for (const auto& blk : cb.blocks) CHECK(blk.size() == 3);

  const Blocking with_prior = default_blocking(lik, 2);
  CHECK(with_prior.blocks.size() == 4);
  CHECK(with_prior.blocks[0] == std::vector<int>({0, 1}));
  CHECK(with_prior.total() == lik.m + 2);
}

TEST_CASE("a single block recovers the exact augmented posterior") {
  const Instance inst = make_sequential(3, 1, 2, 1.5, 102);
  Blocking single;
  std::vector<int> all(inst.aug.dim);
  for (int i = 0; i < inst.aug.dim; ++i) all[i] = i;
  single.blocks.push_back(all);
  const VBState state = cavi_pfm(inst.aug, single);
  CHECK(state.converged);
  CHECK(state.iterations <= 2);
  CHECK(kl_zbar(state, inst.aug) <= 1e-6);
  for (const auto& m : state.mean) CHECK(m.minCoeff() > 0.0);
}

TEST_CASE("uncoupled units converge in one sweep with zero coupling") {
  // Orthogonal predictors make the latent correlation exactly diagonal.
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 2;
  spec.p = 2;
  Dataset d;
  d.n = 2;
  d.y.resize(2);
  d.y << 1, 2;
  d.X.resize(2, 2);
  d.X << 1, 0, 0, 1;
  const ProbitLikelihood lik = build_likelihood(spec, d);
  const SunParams prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  const AugmentedForm aug = augmented_form(posterior_update(prior, lik), lik);
  const VBState state = cavi_pfm(aug, default_blocking(lik));
  CHECK(state.converged);
  CHECK(state.iterations <= 2);
  for (const auto& w : state.W) CHECK(w.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(kl_zbar(state, aug) <= 1e-6);
}

TEST_CASE("variational moments are consistent with variational sampling") {
  const Instance inst = make_sequential(6, 2, 3, 2.0, 103);
  const VBState state = cavi_pfm(inst.aug, default_blocking(inst.lik));
  CHECK(state.converged);
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  vb_moments(state, inst.aug, &mean, &cov);
  const int T = 40000;
  RngStream rng(104);
  const PosteriorDraws d = sample_vb(state, inst.aug, T, rng);
  for (int j = 0; j < inst.aug.q; ++j) {
    const double se = std::sqrt(cov(j, j) / T);
    CHECK(std::fabs(d.draws.col(j).mean() - mean(j)) < 4.0 * se);
  }
  // Diagonal covariance entries agree within Monte Carlo error.
  for (int j = 0; j < inst.aug.q; ++j) {
    const double var =
        (d.draws.col(j).array() - d.draws.col(j).mean()).square().sum() /
        (T - 1);
    CHECK(var == doctest::Approx(cov(j, j)).epsilon(0.1));
  }
}

TEST_CASE("variational sampling is reproducible from the seed") {
  const Instance inst = make_sequential(4, 1, 3, 1.0, 105);
  const VBState state = cavi_pfm(inst.aug, default_blocking(inst.lik));
  RngStream a(7), b(7);
  CHECK(sample_vb(state, inst.aug, 25, a).draws ==
        sample_vb(state, inst.aug, 25, b).draws);
}

TEST_CASE("variational prediction is a distribution and respects symmetry") {
  // Zero-data sequential model with a symmetric prior: first gate fires with
  // probability one half, the second splits the remainder evenly.
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
  const AugmentedForm aug =
      augmented_form(posterior_update(prior, empty), empty);
  VBState state;  // no blocks: q(beta) is exactly the prior
  state.converged = true;
  Eigen::MatrixXd x_new(1, 2);
  x_new << 0.7, -0.1;
  const int T = 100000;
  RngStream rng(106);
  const Eigen::VectorXd probs =
      predict_vb(state, aug, spec, x_new, T, rng);
  CHECK(probs.sum() == doctest::Approx(1.0));
  const double se = 4.0 * std::sqrt(0.25 / T);
  CHECK(std::fabs(probs(0) - 0.5) < se);
  CHECK(std::fabs(probs(1) - 0.25) < se);
  CHECK(std::fabs(probs(2) - 0.25) < se);
}

TEST_CASE("variational prediction tracks the closed form on small data") {
  const Instance inst = make_sequential(5, 2, 3, 1.5, 107);
  const VBState state = cavi_pfm(inst.aug, default_blocking(inst.lik));
  Eigen::MatrixXd x_new(1, 2);
  x_new << 0.5, -1.0;
  const Eigen::VectorXd exact =
      predict_exact(inst.prior, inst.spec, inst.lik, x_new);
  const int T = 100000;
  RngStream rng(108);
  const Eigen::VectorXd approx =
      predict_vb(state, inst.aug, inst.spec, x_new, T, rng);
  for (int l = 0; l < 3; ++l) {
    const double se =
        std::sqrt(std::max(exact(l) * (1.0 - exact(l)), 1e-8) / T);
    // Monte Carlo error plus a small allowance for the variational gap.
    CHECK(std::fabs(approx(l) - exact(l)) < 4.0 * se + 0.02);
  }
}

TEST_CASE("mean-field baseline overshrinks relative to the exact posterior") {
  const Instance inst = make_sequential(1, 1, 2, 2.0, 109);
  const Blocking blocking = default_blocking(inst.lik);
  const MfState mf = cavi_mf(inst.aug, blocking);
  CHECK(mf.converged);
  const int T = 100000;
  RngStream rng(110);
  const PosteriorDraws d = sample_posterior(inst.post, T, rng);
  const double exact_mean = d.draws.col(0).mean();
  CHECK(std::fabs(mf.mean_beta(0)) <= std::fabs(exact_mean) + 1e-3);
  CHECK(mf.mean_beta(0) * exact_mean >= 0.0);  // same direction
}

TEST_CASE("blocking by unit never loses to singleton blocking") {
  for (std::uint64_t seed : {201, 202, 203}) {
    ModelSpec spec;
    spec.family = Family::ClassSpecific;
    spec.L = 3;
    spec.p = 1;
    Eigen::MatrixXd sigma(3, 3);
    sigma << 1.0, 0.4, 0.2, 0.4, 1.0, 0.4, 0.2, 0.4, 1.0;
    spec.Sigma = sigma;
    RngStream rng(seed);
    const Dataset data = testutil::random_dataset(spec, 3, rng);
    const ProbitLikelihood lik = build_likelihood(spec, data);
    const SunParams prior = SunParams::gaussian(
        Eigen::VectorXd::Zero(2), 2.0 * Eigen::MatrixXd::Identity(2, 2));
    const AugmentedForm aug =
        augmented_form(posterior_update(prior, lik), lik);
    const VBState unit = cavi_pfm(aug, default_blocking(lik));
    const VBState single = cavi_pfm(aug, singleton_blocking(aug.dim));
    const double kl_unit = kl_zbar(unit, aug);
    const double kl_single = kl_zbar(single, aug);
    CHECK(kl_unit >= 0.0);
    CHECK(kl_single >= 0.0);
    CHECK(kl_unit <= kl_single + 1e-6);
  }
}

TEST_CASE("sweeps never increase the variational divergence") {
  const Instance inst = make_sequential(6, 1, 3, 2.0, 204);
  const Blocking blocking = singleton_blocking(inst.aug.dim);
  double prev = -1.0;
  for (int sweeps = 1; sweeps <= 5; ++sweeps) {
    VbOptions opt;
    opt.max_iter = sweeps;
    opt.tol = 0.0;
    const VBState state = cavi_pfm(inst.aug, blocking, opt);
    const double kl = kl_zbar(state, inst.aug);
    if (prev >= 0.0) CHECK(kl <= prev + 1e-6);
    prev = kl;
  }
}
