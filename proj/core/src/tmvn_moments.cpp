#include "sunprobit/tmvn_moments.hpp"

#include <cmath>
#include <vector>

#include "sunprobit/errors.hpp"
#include "sunprobit/normal.hpp"

namespace sunprobit {

namespace {

constexpr double kTwoPi = 6.283185307179586477;

// P(W_rest > a_rest | W_cond = a_cond) for standardized W ~ N(0, R).
double conditional_orthant(const Eigen::MatrixXd& r, const Eigen::VectorXd& a,
                           const std::vector<int>& cond,
                           const CdfSettings& cdf) {
  const int d = static_cast<int>(r.rows());
  std::vector<int> rest;
  for (int i = 0; i < d; ++i) {
    bool is_cond = false;
    for (int c : cond) is_cond = is_cond || (c == i);
    if (!is_cond) rest.push_back(i);
  }
  if (rest.empty()) return 1.0;
  const int nc = static_cast<int>(cond.size());
  const int nr = static_cast<int>(rest.size());
  Eigen::MatrixXd rcc(nc, nc), rrc(nr, nc), rrr(nr, nr);
  Eigen::VectorXd ac(nc), ar(nr);
  for (int i = 0; i < nc; ++i) {
    ac(i) = a(cond[i]);
    for (int j = 0; j < nc; ++j) rcc(i, j) = r(cond[i], cond[j]);
  }
  for (int i = 0; i < nr; ++i) {
    ar(i) = a(rest[i]);
    for (int j = 0; j < nc; ++j) rrc(i, j) = r(rest[i], cond[j]);
  }
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nr; ++j) rrr(i, j) = r(rest[i], rest[j]);

  Eigen::MatrixXd rcc_inv = rcc.inverse();
  Eigen::VectorXd cmean = rrc * (rcc_inv * ac);
  Eigen::MatrixXd ccov = rrr - rrc * rcc_inv * rrc.transpose();
  Eigen::VectorXd lo(nr);
  for (int i = 0; i < nr; ++i)
    lo(i) = is_neg_inf(ar(i)) ? -kInf : ar(i) - cmean(i);
  const CdfResult res = mvn_upper_orthant(lo, chol_psd(ccov), cdf);
  return std::exp(res.log_prob);
}

double bvn_pdf(double x, double y, double rho) {
  const double om = std::max(1.0 - rho * rho, 1e-12);
  const double q = (x * x - 2.0 * rho * x * y + y * y) / om;
  return std::exp(-0.5 * q) / (kTwoPi * std::sqrt(om));
}

}  // namespace

void tmvn_moments(const Eigen::VectorXd& lower, const Eigen::VectorXd& mean,
                  const SpdMatrix& cov, Eigen::VectorXd* out_mean,
                  Eigen::MatrixXd* out_cov, const TmvnMomentsOptions& options) {
  const int d = cov.dim();
  if (lower.size() != d || mean.size() != d)
    throw DimensionMismatch("tmvn_moments: dimension mismatch");
  if (d > options.dim_cap)
    throw DimensionTooLarge("tmvn_moments: dimension exceeds configured cap");

  if (d == 1) {
    double m, v;
    trunc_normal_moments(is_neg_inf(lower(0)) ? -kInf : lower(0), mean(0),
                         std::sqrt(cov.values()(0, 0)), &m, &v);
    out_mean->resize(1);
    out_cov->resize(1, 1);
    (*out_mean)(0) = m;
    (*out_cov)(0, 0) = v;
    return;
  }

  // Standardize to correlation scale.
  Eigen::VectorXd sd = cov.values().diagonal().array().sqrt();
  Eigen::MatrixXd r = cov.values();
  Eigen::VectorXd a(d);
  for (int i = 0; i < d; ++i) {
    a(i) = is_neg_inf(lower(i)) ? -kInf : (lower(i) - mean(i)) / sd(i);
    for (int j = 0; j < d; ++j) r(i, j) /= sd(i) * sd(j);
  }

  const double p = std::exp(mvn_upper_orthant(a, chol_psd(r), options.cdf).log_prob);
  if (p < 1e-300)
    throw InfeasibleRegion("tmvn_moments: truncation region has vanishing probability");

  // F_k = phi(a_k) * P(rest > a_rest | W_k = a_k); vanishes for infinite a_k.
  Eigen::VectorXd f = Eigen::VectorXd::Zero(d);
  for (int k = 0; k < d; ++k) {
    if (is_neg_inf(a(k))) continue;
    f(k) = norm_pdf(a(k)) * conditional_orthant(r, a, {k}, options.cdf);
  }

  Eigen::VectorXd ew = (r * f) / p;

  // Bivariate marginal terms F_kq for the second moments.
  Eigen::MatrixXd fkq = Eigen::MatrixXd::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    if (is_neg_inf(a(k))) continue;
    for (int q = 0; q < d; ++q) {
      if (q == k || is_neg_inf(a(q))) continue;
      fkq(k, q) = bvn_pdf(a(k), a(q), r(k, q)) *
                  conditional_orthant(r, a, {k, q}, options.cdf);
    }
  }

  Eigen::MatrixXd m2(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        if (f(k) == 0.0 && is_neg_inf(a(k))) continue;
        double term = is_neg_inf(a(k)) ? 0.0 : a(k) * r(j, k) * f(k);
        for (int q = 0; q < d; ++q) {
          if (q == k) continue;
          if (fkq(k, q) == 0.0) continue;
          term += (r(j, q) - r(q, k) * r(j, k)) * fkq(k, q);
        }
        acc += r(i, k) * term;
      }
      m2(i, j) = m2(j, i) = r(i, j) + acc / p;
    }
  }

  Eigen::MatrixXd w_cov = m2 - ew * ew.transpose();
  out_mean->resize(d);
  out_cov->resize(d, d);
  for (int i = 0; i < d; ++i) {
    (*out_mean)(i) = mean(i) + sd(i) * ew(i);
    for (int j = 0; j < d; ++j) (*out_cov)(i, j) = sd(i) * sd(j) * w_cov(i, j);
  }
}

}  // namespace sunprobit
