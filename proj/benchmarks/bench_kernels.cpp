#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "sunprobit/model.hpp"
#include "sunprobit/mvn_cdf.hpp"
#include "sunprobit/mvn_sampling.hpp"
#include "sunprobit/rng.hpp"
#include "sunprobit/sun.hpp"
#include "sunprobit/vb.hpp"

namespace {

using namespace sunprobit;

Eigen::MatrixXd random_correlation(int d, RngStream& rng) {
  Eigen::MatrixXd a(d, d + 2);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d + 2; ++j) a(i, j) = rng.normal();
  Eigen::MatrixXd c = a * a.transpose();
  Eigen::VectorXd sd = c.diagonal().array().sqrt();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) c(i, j) /= sd(i) * sd(j);
  return c;
}

void bm_mvn_cdf(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  RngStream rng(41);
  const SpdMatrix cov = chol_psd(random_correlation(d, rng));
  Eigen::VectorXd upper(d);
  for (int i = 0; i < d; ++i) upper(i) = 0.5 + 0.2 * rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(mvn_cdf(upper, cov).log_prob);
  }
}
BENCHMARK(bm_mvn_cdf)->Arg(4)->Arg(16)->Arg(64);

void bm_sample_tmvn(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  RngStream rng(42);
  const SpdMatrix cov = chol_psd(random_correlation(d, rng));
  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(d, 0.5);
  for (auto _ : state) {
    RngStream local(43);
    benchmark::DoNotOptimize(
        sample_tmvn(lower, Eigen::VectorXd::Zero(d), cov, 100, local));
  }
}
BENCHMARK(bm_sample_tmvn)->Arg(4)->Arg(16)->Arg(32);

void bm_cavi_pfm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int p = 8;
  RngStream rng(44);
  ModelSpec spec;
  spec.family = Family::Sequential;
  spec.L = 3;
  spec.p = p;
  Dataset data;
  data.n = n;
  data.y.resize(n);
  data.X.resize(n, p);
  for (int i = 0; i < n; ++i) {
    data.y(i) = 1 + static_cast<int>(rng.uniform() * 3.0);
    for (int j = 0; j < p; ++j) data.X(i, j) = rng.normal();
  }
  const ProbitLikelihood lik = build_likelihood(spec, data);
  const SunParams prior = SunParams::gaussian(
      Eigen::VectorXd::Zero(spec.q()),
      25.0 * Eigen::MatrixXd::Identity(spec.q(), spec.q()));
  const SunParams pst = posterior_update(prior, lik);
  const AugmentedForm aug = augmented_form(pst, lik);
  const Blocking blocking = default_blocking(lik, prior.h());
  for (auto _ : state) {
    benchmark::DoNotOptimize(cavi_pfm(aug, blocking));
  }
}
BENCHMARK(bm_cavi_pfm)->Arg(10)->Arg(40);

}  // namespace

BENCHMARK_MAIN();
