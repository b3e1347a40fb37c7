#include "sunprobit/mvn_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sunprobit/errors.hpp"
#include "sunprobit/normal.hpp"

namespace sunprobit {

Eigen::MatrixXd sample_mvn(const Eigen::VectorXd& mean, const SpdMatrix& cov,
                           int count, RngStream& rng) {
  const int d = cov.dim();
  if (mean.size() != d)
    throw DimensionMismatch("sample_mvn: mean/covariance dimension mismatch");
  if (count < 1) throw DimensionMismatch("sample_mvn: count must be >= 1");
  Eigen::MatrixXd out(count, d);
  Eigen::VectorXd eta(d);
  for (int t = 0; t < count; ++t) {
    for (int j = 0; j < d; ++j) eta(j) = rng.normal();
    out.row(t) =
        (mean + cov.factor().triangularView<Eigen::Lower>() * eta).transpose();
  }
  return out;
}

namespace {

// hazard of an upper-truncated standard normal: phi(t) / Phi(t)
double hazard(double t) {
  if (is_pos_inf(t)) return 0.0;
  return mills_ratio_inv(-t);
}

// Exponentially tilted sequential sampler for W ~ N(0, Sigma) | W <= u,
// with l the permuted Cholesky factor. psi(eta; mu) is the log likelihood
// ratio of target over proposal; accept-reject uses its maximum psi_star.
struct TiltedSampler {
  Eigen::MatrixXd l;   // permuted lower Cholesky factor
  Eigen::VectorXd u;   // permuted upper bounds
  Eigen::VectorXd mu;  // tilting locations (mu_d = 0)
  std::vector<int> perm;
  double psi_star = 0.0;
  int d = 0;
  bool valid = false;

  // psi and its gradient in eta (coordinates 0..d-2; eta_{d-1} drops out
  // because mu_{d-1} = 0 and the last log Phi term absorbs it).
  double psi(const Eigen::VectorXd& eta, Eigen::VectorXd* grad,
             Eigen::MatrixXd* hess) const {
    double val = 0.0;
    if (grad) grad->setZero();
    if (hess) hess->setZero();
    for (int k = 0; k < d; ++k) {
      double ub = u(k);
      double t;
      if (is_pos_inf(ub)) {
        t = kInf;
      } else {
        double s = ub;
        for (int j = 0; j < k; ++j) s -= l(k, j) * eta(j);
        t = s / l(k, k) - mu(k);
      }
      val += log_norm_cdf(t) + 0.5 * mu(k) * mu(k) - mu(k) * eta(k);
      if (!grad) continue;
      const double rho = hazard(t);
      if (k < d - 1) (*grad)(k) -= mu(k);
      if (rho != 0.0) {
        for (int j = 0; j < std::min(k, d - 1); ++j)
          (*grad)(j) -= (l(k, j) / l(k, k)) * rho;
        if (hess) {
          const double rp = -rho * (t + rho);  // in (-1, 0)
          for (int a = 0; a < std::min(k, d - 1); ++a)
            for (int b = 0; b <= a; ++b)
              (*hess)(a, b) +=
                  (l(k, a) / l(k, k)) * (l(k, b) / l(k, k)) * rp;
        }
      }
    }
    if (hess) *hess = hess->selfadjointView<Eigen::Lower>();
    return val;
  }

  // Saddle point of psi over (eta, mu): the stationarity conditions are
  //   mu_j + sum_{k > j} (l_kj / l_kk) hazard(t_k) = 0
  //   mu_j - eta_j - hazard(t_j) = 0
  // for j < d - 1, with mu_{d-1} fixed at 0. Solved by a damped Newton
  // iteration on the stacked residual; since psi is concave in eta for fixed
  // mu, the converged saddle value is the exact envelope maximum.
  void optimize() {
    mu = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(d);
    const int n = d - 1;
    valid = true;
    if (n > 0) {
      Eigen::VectorXd t(d), haz(d), dhaz(d);
      auto refresh = [&](const Eigen::VectorXd& z) {
        for (int k = 0; k < d; ++k) {
          const double mk = (k < n) ? z(n + k) : 0.0;
          if (is_pos_inf(u(k))) {
            t(k) = kInf;
            haz(k) = 0.0;
            dhaz(k) = 0.0;
            continue;
          }
          double s = u(k);
          for (int j = 0; j < std::min(k, n); ++j) s -= l(k, j) * z(j);
          t(k) = s / l(k, k) - mk;
          haz(k) = hazard(t(k));
          dhaz(k) = -haz(k) * (t(k) + haz(k));  // in (-1, 0)
        }
      };
      auto residual = [&](const Eigen::VectorXd& z, Eigen::VectorXd& r) {
        refresh(z);
        for (int j = 0; j < n; ++j) {
          double acc = z(n + j);
          for (int k = j + 1; k < d; ++k)
            acc += (l(k, j) / l(k, k)) * haz(k);
          r(j) = acc;
          r(n + j) = z(n + j) - z(j) - haz(j);
        }
      };
      Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * n);
      Eigen::VectorXd r(2 * n), rc(2 * n);
      Eigen::MatrixXd jac(2 * n, 2 * n);
      residual(z, r);
      bool converged = false;
      for (int it = 0; it < 100; ++it) {
        if (r.cwiseAbs().maxCoeff() < 1e-9) {
          converged = true;
          break;
        }
        jac.setZero();
        // refresh(z) state from the last residual call is still current.
        for (int j = 0; j < n; ++j) {
          for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int k = std::max(i, j) + 1; k < d; ++k)
              acc -= (l(k, j) / l(k, k)) * (l(k, i) / l(k, k)) * dhaz(k);
            jac(j, i) = acc;
          }
          jac(j, n + j) += 1.0;
          for (int i = j + 1; i < n; ++i)
            jac(j, n + i) = -(l(i, j) / l(i, i)) * dhaz(i);
          for (int i = 0; i < j; ++i)
            jac(n + j, i) = (l(j, i) / l(j, j)) * dhaz(j);
          jac(n + j, j) += -1.0;
          jac(n + j, n + j) = 1.0 + dhaz(j);
        }
        const Eigen::VectorXd step = jac.partialPivLu().solve(-r);
        double alpha = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 40; ++ls) {
          residual(z + alpha * step, rc);
          if (rc.norm() < r.norm()) {
            z += alpha * step;
            r = rc;
            improved = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!improved) break;
      }
      if (!converged) converged = r.cwiseAbs().maxCoeff() < 1e-9;
      valid = converged;
      eta.head(n) = z.head(n);
      mu.head(n) = z.tail(n);
    }
    // Small slack absorbs the residual first-order error in the certified
    // maximum; it costs a negligible factor in acceptance.
    psi_star = psi(eta, nullptr, nullptr) + 1e-6;
  }

  // One proposal; returns log weight, fills eta.
  double propose(Eigen::VectorXd& eta, RngStream& rng) const {
    double logw = 0.0;
    for (int k = 0; k < d; ++k) {
      double t;
      if (is_pos_inf(u(k))) {
        t = kInf;
      } else {
        double s = u(k);
        for (int j = 0; j < k; ++j) s -= l(k, j) * eta(j);
        t = s / l(k, k) - mu(k);
      }
      const double z = is_pos_inf(t) ? rng.normal()
                                     : sample_trunc_std_normal(-kInf, t, rng);
      eta(k) = mu(k) + z;
      logw += log_norm_cdf(t) + 0.5 * mu(k) * mu(k) - mu(k) * eta(k);
    }
    return logw;
  }
};

void gibbs_sweep(Eigen::VectorXd& v, const Eigen::VectorXd& lower,
                 const Eigen::MatrixXd& prec, const Eigen::VectorXd& cond_sd,
                 RngStream& rng) {
  const int d = static_cast<int>(v.size());
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int k = 0; k < d; ++k)
      if (k != j) s += prec(j, k) * v(k);
    const double m = -s / prec(j, j);
    const double sd = cond_sd(j);
    double lo = is_neg_inf(lower(j)) ? -kInf : (lower(j) - m) / sd;
    double x = m + sd * sample_trunc_std_normal(lo, kInf, rng);
    if (!is_neg_inf(lower(j)) && x <= lower(j))
      x = std::nextafter(lower(j), kInf);
    v(j) = x;
  }
}

}  // namespace

Eigen::MatrixXd sample_tmvn(const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& mean, const SpdMatrix& cov,
                            int count, RngStream& rng,
                            const TmvnOptions& options, TmvnMeta* meta) {
  const int d = cov.dim();
  if (lower.size() != d || mean.size() != d)
    throw DimensionMismatch("sample_tmvn: dimension mismatch");
  if (count < 1) throw DimensionMismatch("sample_tmvn: count must be >= 1");
  if (d > options.dim_cap)
    throw DimensionTooLarge("sample_tmvn: dimension exceeds configured cap");

  TmvnMeta local;
  TmvnMeta& m = meta ? *meta : local;

  // Centered constraint: v ~ N(0, cov), v > l.
  Eigen::VectorXd l(d);
  bool constrained = false;
  for (int i = 0; i < d; ++i) {
    l(i) = is_neg_inf(lower(i)) ? -kInf : lower(i) - mean(i);
    constrained = constrained || !is_neg_inf(l(i));
  }
  if (!constrained) {
    m.method = "rejection";
    m.acceptance_rate = 1.0;
    m.log_region_prob = 0.0;
    return sample_mvn(mean, cov, count, rng);
  }

  const CdfResult region = mvn_upper_orthant(l, cov, options.cdf);
  m.log_region_prob = region.log_prob;
  if (region.log_prob < std::log(1e-300))
    throw InfeasibleRegion("sample_tmvn: truncation region has vanishing probability");

  Eigen::MatrixXd out(count, d);
  const double region_prob = std::exp(region.log_prob);

  auto satisfies = [&](const Eigen::VectorXd& v) {
    for (int i = 0; i < d; ++i)
      if (!is_neg_inf(l(i)) && !(v(i) > l(i))) return false;
    return true;
  };

  if (region_prob >= 0.05) {
    // Plain rejection is cheap enough.
    m.method = "rejection";
    long tries = 0;
    Eigen::VectorXd eta(d), v(d);
    for (int t = 0; t < count;) {
      for (int j = 0; j < d; ++j) eta(j) = rng.normal();
      v = cov.factor().triangularView<Eigen::Lower>() * eta;
      ++tries;
      if (satisfies(v)) {
        out.row(t) = (mean + v).transpose();
        ++t;
      }
    }
    m.acceptance_rate = static_cast<double>(count) / tries;
    return out;
  }

  bool use_gibbs = d > 200;
  TiltedSampler ts;
  if (!use_gibbs) {
    // Work on W = -V so the region becomes an upper rectangle W <= -l.
    ts.d = d;
    ts.l = cov.values();
    ts.u = (-l).unaryExpr([](double x) { return x >= 1e300 ? kInf : x; });
    detail::order_and_factor(ts.l, ts.u, &ts.perm);
    ts.mu = Eigen::VectorXd::Zero(d);
    ts.optimize();
    const double est_acc = std::exp(region.log_prob - ts.psi_star);
    if (!ts.valid || est_acc < options.acceptance_floor) use_gibbs = true;
    m.acceptance_rate = est_acc;
  }

  if (!use_gibbs) {
    m.method = "tilted";
    Eigen::VectorXd eta(d), w(d), v(d);
    long tries = 0, accepted = 0;
    const long hard_cap = 1000 +
        static_cast<long>(count / std::max(m.acceptance_rate * 0.01, 1e-9));
    while (accepted < count) {
      const double logw = ts.propose(eta, rng);
      ++tries;
      if (std::log(rng.uniform()) <= logw - ts.psi_star) {
        w = ts.l.triangularView<Eigen::Lower>() * eta;
        for (int i = 0; i < d; ++i) v(ts.perm[i]) = -w(i);  // undo reordering
        if (satisfies(v)) {
          out.row(accepted) = (mean + v).transpose();
          ++accepted;
        }
      }
      if (tries > hard_cap && accepted == 0) {
        use_gibbs = true;
        break;
      }
    }
    if (!use_gibbs) {
      m.acceptance_rate = static_cast<double>(accepted) / tries;
      return out;
    }
  }

  // Thinned Gibbs fallback; flagged as degraded.
  m.method = "gibbs";
  m.degraded = true;
  const Eigen::MatrixXd prec = cov.inverse();
  Eigen::VectorXd cond_sd(d);
  for (int j = 0; j < d; ++j) cond_sd(j) = 1.0 / std::sqrt(prec(j, j));
  Eigen::VectorXd v(d);
  for (int j = 0; j < d; ++j) v(j) = is_neg_inf(l(j)) ? 0.0 : l(j) + 1.0;
  for (int s = 0; s < options.gibbs_burnin; ++s)
    gibbs_sweep(v, l, prec, cond_sd, rng);
  for (int t = 0; t < count; ++t) {
    for (int s = 0; s < options.gibbs_thin; ++s)
      gibbs_sweep(v, l, prec, cond_sd, rng);
    out.row(t) = (mean + v).transpose();
  }
  return out;
}

}  // namespace sunprobit
