#include "sunprobit/sun.hpp"

#include <cmath>

#include "sunprobit/errors.hpp"
#include "sunprobit/normal.hpp"

namespace sunprobit {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

double log_mvn_pdf(const Eigen::VectorXd& x, const SpdMatrix& cov) {
  const Eigen::VectorXd half = cov.solve_lower(x);
  return -0.5 * (cov.dim() * kLog2Pi + cov.log_det() + half.squaredNorm());
}
}  // namespace

SunParams::SunParams(Eigen::VectorXd xi, const Eigen::MatrixXd& omega_mat,
                     Eigen::MatrixXd delta, Eigen::VectorXd gamma,
                     const Eigen::MatrixXd& gamma_mat)
    : xi_(std::move(xi)), delta_(std::move(delta)), gamma_(std::move(gamma)) {
  q_ = static_cast<int>(xi_.size());
  h_ = static_cast<int>(gamma_.size());
  if (omega_mat.rows() != q_ || omega_mat.cols() != q_)
    throw DimensionMismatch("SunParams: Omega must be q x q");
  if (delta_.rows() != q_ || delta_.cols() != h_)
    throw DimensionMismatch("SunParams: Delta must be q x h");
  if (gamma_mat.rows() != h_ || gamma_mat.cols() != h_)
    throw DimensionMismatch("SunParams: Gamma must be h x h");
  omega_mat_ = chol_psd(omega_mat);
  omega_diag_ = omega_mat.diagonal().array().sqrt();
  omega_bar_ = omega_mat;
  for (int i = 0; i < q_; ++i)
    for (int j = 0; j < q_; ++j)
      omega_bar_(i, j) /= omega_diag_(i) * omega_diag_(j);
  if (h_ > 0) {
    for (int i = 0; i < h_; ++i) {
      if (std::fabs(gamma_mat(i, i) - 1.0) > 1e-8)
        throw ConfigError(
            "SunParams: Gamma must be a correlation matrix (unit diagonal)");
    }
    gamma_mat_ = chol_psd(gamma_mat);
    // The joint [[Gamma, Delta^T], [Delta, Omega_bar]] must be PSD for the
    // conditioning construction to exist.
    Eigen::MatrixXd joint(h_ + q_, h_ + q_);
    joint.topLeftCorner(h_, h_) = gamma_mat;
    joint.topRightCorner(h_, q_) = delta_.transpose();
    joint.bottomLeftCorner(q_, h_) = delta_;
    joint.bottomRightCorner(q_, q_) = omega_bar_;
    chol_psd(joint);  // throws NotFactorizable when inconsistent
  }
}

SunParams SunParams::gaussian(Eigen::VectorXd xi, const Eigen::MatrixXd& omega) {
  const int q = static_cast<int>(xi.size());
  return SunParams(std::move(xi), omega, Eigen::MatrixXd(q, 0),
                   Eigen::VectorXd(0), Eigen::MatrixXd(0, 0));
}

double sun_log_density(const SunParams& params, const Eigen::VectorXd& beta,
                       const CdfSettings& cdf) {
  if (beta.size() != params.q())
    throw DimensionMismatch("sun_log_density: beta has wrong length");
  const double base = log_mvn_pdf(beta - params.xi(), params.Omega());
  if (params.h() == 0) return base;
  const SpdMatrix obar = chol_psd(params.Omega_bar());
  const Eigen::VectorXd z =
      ((beta - params.xi()).array() / params.omega_diag().array()).matrix();
  const Eigen::VectorXd arg =
      params.gamma() + params.Delta().transpose() * obar.solve(z);
  const Eigen::MatrixXd cond =
      params.Gamma().values() -
      params.Delta().transpose() * obar.solve(params.Delta());
  const double num = mvn_cdf(arg, chol_psd(cond), cdf).log_prob;
  const double den =
      mvn_cdf(params.gamma(), params.Gamma(), cdf).log_prob;
  return base + num - den;
}

SunParams posterior_update(const SunParams& prior, const ProbitLikelihood& lik) {
  if (prior.q() != lik.q)
    throw DimensionMismatch("posterior_update: prior and likelihood disagree on q");
  const int m = lik.m;
  if (m == 0) return prior;
  const int h = prior.h();
  const int q = prior.q();

  const Eigen::MatrixXd xo = lik.Xbar * prior.Omega().values();  // m x q
  Eigen::MatrixXd w = xo * lik.Xbar.transpose() + lik.lambda_dense();
  w = 0.5 * (w + w.transpose());
  const Eigen::VectorXd s = w.diagonal().array().sqrt();
  for (int i = 0; i < m; ++i) {
    if (!(s(i) > 0.0))
      throw NotFactorizable("posterior_update: degenerate likelihood row scale");
  }

  // Delta_pst = (Delta, omega^{-1} Omega Xbar^T s^{-1})
  Eigen::MatrixXd delta_pst(q, h + m);
  delta_pst.leftCols(h) = prior.Delta();
  Eigen::MatrixXd right = xo.transpose();  // q x m, equals Omega Xbar^T
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < m; ++j)
      right(i, j) /= prior.omega_diag()(i) * s(j);
  delta_pst.rightCols(m) = right;

  Eigen::VectorXd gamma_pst(h + m);
  gamma_pst.head(h) = prior.gamma();
  gamma_pst.tail(m) = ((lik.Xbar * prior.xi()).array() / s.array()).matrix();

  Eigen::MatrixXd gm(h + m, h + m);
  if (h > 0) {
    gm.topLeftCorner(h, h) = prior.Gamma().values();
    // s^{-1} Xbar omega Delta
    Eigen::MatrixXd cross =
        lik.Xbar * (prior.omega_diag().asDiagonal() * prior.Delta());
    for (int i = 0; i < m; ++i) cross.row(i) /= s(i);
    gm.bottomLeftCorner(m, h) = cross;
    gm.topRightCorner(h, m) = cross.transpose();
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      gm(h + i, h + j) = w(i, j) / (s(i) * s(j));
  gm.diagonal().tail(m).setOnes();

  return SunParams(prior.xi(), prior.Omega().values(), std::move(delta_pst),
                   std::move(gamma_pst), gm);
}

PosteriorDraws sample_posterior(const SunParams& params, int T, RngStream& rng,
                                const TmvnOptions& options, const SunCaps& caps) {
  if (T < 1) throw DimensionMismatch("sample_posterior: T must be >= 1");
  const int q = params.q();
  const int h = params.h();
  if (h > caps.sampler_cap)
    throw DimensionTooLarge("sample_posterior: h + m exceeds sampler cap");

  PosteriorDraws out;
  out.seed = rng.seed();
  out.draws.resize(T, q);

  if (h == 0) {
    out.draws = sample_mvn(params.xi(), params.Omega(), T, rng);
    out.tmvn_meta.method = "none";
    return out;
  }

  // V1 ~ TN_h(-gamma; 0, Gamma), all draws in one batch.
  const Eigen::MatrixXd v1 =
      sample_tmvn(-params.gamma(), Eigen::VectorXd::Zero(h), params.Gamma(), T,
                  rng, options, &out.tmvn_meta);

  // V0 ~ N_q(0, Omega_bar - Delta Gamma^{-1} Delta^T), via triangular solves.
  const Eigen::MatrixXd a =
      params.Gamma().solve_lower(params.Delta().transpose());  // h x q
  Eigen::MatrixXd cov0 = params.Omega_bar() - a.transpose() * a;
  cov0 = 0.5 * (cov0 + cov0.transpose());
  const SpdMatrix cov0_f = chol_psd(cov0);

  // Gamma^{-1} V1^T applied through the cached factor.
  const Eigen::MatrixXd ginv_v1 = params.Gamma().solve(v1.transpose());  // h x T
  Eigen::VectorXd eta(q);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < q; ++j) eta(j) = rng.normal();
    const Eigen::VectorXd v0 =
        cov0_f.factor().triangularView<Eigen::Lower>() * eta;
    const Eigen::VectorXd skew = params.Delta() * ginv_v1.col(t);
    out.draws.row(t) =
        (params.xi() +
         (params.omega_diag().array() * (v0 + skew).array()).matrix())
            .transpose();
  }
  return out;
}

double log_evidence(const SunParams& prior, const ProbitLikelihood& lik,
                    const CdfSettings& cdf, const SunCaps& caps) {
  if (prior.h() + lik.m > caps.cdf_cap)
    throw DimensionTooLarge("log_evidence: h + m exceeds cdf cap");
  const SunParams pst = posterior_update(prior, lik);
  const double num = mvn_cdf(pst.gamma(), pst.Gamma(), cdf).log_prob;
  if (prior.h() == 0) return num;
  return num - mvn_cdf(prior.gamma(), prior.Gamma(), cdf).log_prob;
}

Eigen::VectorXd predict_exact(const SunParams& prior, const ModelSpec& spec,
                              const ProbitLikelihood& lik,
                              const Eigen::MatrixXd& x_new,
                              const CdfSettings& cdf, double* raw_sum,
                              const SunCaps& caps) {
  const int L = spec.L;
  double log_denom = 0.0;
  if (lik.m > 0) {
    const SunParams pst = posterior_update(prior, lik);
    if (pst.h() > caps.cdf_cap)
      throw DimensionTooLarge("predict_exact: h + m exceeds cdf cap");
    log_denom = mvn_cdf(pst.gamma(), pst.Gamma(), cdf).log_prob;
  } else if (prior.h() > 0) {
    log_denom = mvn_cdf(prior.gamma(), prior.Gamma(), cdf).log_prob;
  }
  Eigen::VectorXd probs(L);
  for (int l = 1; l <= L; ++l) {
    const ProbitLikelihood lik_l = build_expanded(lik, spec, x_new, l);
    if (prior.h() + lik_l.m > caps.cdf_cap)
      throw DimensionTooLarge("predict_exact: expanded h + m exceeds cdf cap");
    const SunParams pst_l = posterior_update(prior, lik_l);
    const double log_num = mvn_cdf(pst_l.gamma(), pst_l.Gamma(), cdf).log_prob;
    probs(l - 1) = std::exp(log_num - log_denom);
  }
  const double total = probs.sum();
  if (raw_sum) *raw_sum = total;
  if (total > 0.0) probs /= total;
  return probs;
}

SunParams marginal_subset(const SunParams& params,
                          const std::vector<int>& indices) {
  const int q = params.q();
  const int k = static_cast<int>(indices.size());
  if (k < 1) throw IndexOutOfRange("marginal_subset: empty index set");
  std::vector<bool> seen(q, false);
  for (int i : indices) {
    if (i < 0 || i >= q || seen[i])
      throw IndexOutOfRange("marginal_subset: indices must be distinct and in range");
    seen[i] = true;
  }
  Eigen::VectorXd xi(k);
  Eigen::MatrixXd omega(k, k);
  Eigen::MatrixXd delta(k, params.h());
  for (int i = 0; i < k; ++i) {
    xi(i) = params.xi()(indices[i]);
    delta.row(i) = params.Delta().row(indices[i]);
    for (int j = 0; j < k; ++j)
      omega(i, j) = params.Omega().values()(indices[i], indices[j]);
  }
  return SunParams(std::move(xi), omega, std::move(delta), params.gamma(),
                   params.h() > 0 ? params.Gamma().values()
                                  : Eigen::MatrixXd(0, 0));
}

}  // namespace sunprobit
