#include "sunprobit/oracles.hpp"

#include <cmath>
#include <vector>

#include "sunprobit/errors.hpp"
#include "sunprobit/normal.hpp"

namespace sunprobit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Univariate N(mean, sd^2) truncated to (0, inf), by inverse cdf in the bulk
// and a shifted-exponential proposal in the far tail. Kept local so the
// oracle does not depend on the library's truncated samplers.
double utn_positive(double mean, double sd, RngStream& rng) {
  const double a = -mean / sd;
  double x;
  if (a < 5.0) {
    const double pa = norm_cdf(a);
    const double u = rng.uniform();
    x = norm_quantile(pa + u * (1.0 - pa));
    if (x < a) x = a;
  } else {
    for (;;) {
      const double e = -std::log(rng.uniform()) / a;
      x = a + e;
      if (std::log(rng.uniform()) <= -0.5 * e * e) break;
    }
  }
  return mean + sd * x;
}

// Phi_2(b1, b2; rho) by one-dimensional composite Simpson integration of
// phi(x) Phi((b2 - rho x) / sqrt(1 - rho^2)). Slow and simple on purpose.
double oracle_bvn_cdf(double b1, double b2, double rho) {
  if (is_pos_inf(b1)) return norm_cdf(is_pos_inf(b2) ? kInf : b2);
  if (is_pos_inf(b2)) return norm_cdf(b1);
  if (std::fabs(rho) > 0.9999)
    throw ToleranceNotMet("oracle_bvn_cdf: correlation too close to +/-1");
  const double lo = -8.5;
  const double hi = std::min(b1, 8.5);
  if (hi <= lo) return 0.0;
  const double s = std::sqrt(1.0 - rho * rho);
  auto f = [&](double x) {
    return norm_pdf(x) * norm_cdf((b2 - rho * x) / s);
  };
  double prev = 0.0;
  int n = 513;
  for (int pass = 0; pass < 6; ++pass) {
    const double hstep = (hi - lo) / (n - 1);
    double acc = f(lo) + f(hi);
    for (int i = 1; i < n - 1; ++i)
      acc += f(lo + i * hstep) * (i % 2 == 1 ? 4.0 : 2.0);
    const double val = acc * hstep / 3.0;
    if (pass > 0 && std::fabs(val - prev) < 1e-13) return val;
    prev = val;
    n = 2 * n - 1;
  }
  return prev;
}

double log_block_orthant(const Eigen::VectorXd& upper,
                         const Eigen::MatrixXd& lambda) {
  const int b = static_cast<int>(upper.size());
  if (b == 1) return log_norm_cdf(upper(0) / std::sqrt(lambda(0, 0)));
  if (b == 2) {
    const double s1 = std::sqrt(lambda(0, 0));
    const double s2 = std::sqrt(lambda(1, 1));
    const double rho = lambda(0, 1) / (s1 * s2);
    const double v = oracle_bvn_cdf(upper(0) / s1, upper(1) / s2, rho);
    if (v <= 0.0) return -kInf;
    return std::log(v);
  }
  throw QOverCap("quadrature oracle handles blocks of size at most 2");
}

double log_gauss_pdf(const Eigen::VectorXd& x, const Eigen::MatrixXd& cov) {
  const SpdMatrix f = chol_psd(cov);
  const Eigen::VectorXd half = f.solve_lower(x);
  return -0.5 * (f.dim() * kLog2Pi + f.log_det() + half.squaredNorm());
}

}  // namespace

PosteriorDraws gibbs_sampler(const SunParams& prior, const ProbitLikelihood& lik,
                             int iters, int burnin, RngStream& rng, int thin) {
  if (prior.h() != 0)
    throw ConfigError("gibbs_sampler: needs a Gaussian (h = 0) prior");
  if (prior.q() != lik.q)
    throw DimensionMismatch("gibbs_sampler: prior and likelihood disagree on q");
  if (burnin >= iters || thin < 1)
    throw ConfigError("gibbs_sampler: need burnin < iters and thin >= 1");
  const int q = lik.q;
  const int m = lik.m;

  // Per-block precision of the latent utilities z ~ N(Xbar beta, Lambda).
  std::vector<Eigen::MatrixXd> prec(lik.lambda_blocks.size());
  Eigen::MatrixXd xtqx = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t bi = 0; bi < lik.unit_blocks.size(); ++bi) {
    const auto [at, b] = lik.unit_blocks[bi];
    prec[bi] = lik.lambda_blocks[bi].inverse();
    const Eigen::MatrixXd xb = lik.Xbar.middleRows(at, b);
    xtqx += xb.transpose() * prec[bi] * xb;
  }
  const Eigen::MatrixXd v = (xtqx + prior.Omega().inverse()).inverse();
  const Eigen::MatrixXd lv = Eigen::LLT<Eigen::MatrixXd>(
                                 0.5 * (v + v.transpose()))
                                 .matrixL();
  const Eigen::VectorXd oxi = prior.Omega().solve(prior.xi());

  Eigen::VectorXd beta = prior.xi();
  Eigen::VectorXd z = Eigen::VectorXd::Ones(m);

  PosteriorDraws out;
  out.seed = rng.seed();
  out.tmvn_meta.method = "gibbs";
  const int kept = (iters - burnin) / thin;
  out.draws.resize(kept, q);
  int row = 0;

  Eigen::VectorXd eta(q);
  for (int it = 1; it <= iters; ++it) {
    const Eigen::VectorXd mu = lik.Xbar * beta;
    for (std::size_t bi = 0; bi < lik.unit_blocks.size(); ++bi) {
      const auto [at, b] = lik.unit_blocks[bi];
      const Eigen::MatrixXd& qb = prec[bi];
      for (int i = 0; i < b; ++i) {
        const double cvar = 1.0 / qb(i, i);
        double shift = 0.0;
        for (int j = 0; j < b; ++j)
          if (j != i) shift += qb(i, j) * (z(at + j) - mu(at + j));
        const double cmean = mu(at + i) - cvar * shift;
        z(at + i) = utn_positive(cmean, std::sqrt(cvar), rng);
      }
    }

    Eigen::VectorXd rhs = oxi;
    for (std::size_t bi = 0; bi < lik.unit_blocks.size(); ++bi) {
      const auto [at, b] = lik.unit_blocks[bi];
      rhs += lik.Xbar.middleRows(at, b).transpose() *
             (prec[bi] * z.segment(at, b));
    }
    for (int j = 0; j < q; ++j) eta(j) = rng.normal();
    beta = v * rhs + lv * eta;

    if (it > burnin && (it - burnin) % thin == 0 && row < kept)
      out.draws.row(row++) = beta.transpose();
  }
  return out;
}

PosteriorDraws rejection_sample_sun(const SunParams& params, int T,
                                    RngStream& rng, long max_tries) {
  const int q = params.q();
  const int h = params.h();
  Eigen::MatrixXd joint(q + h, q + h);
  joint.topLeftCorner(q, q) = params.Omega_bar();
  joint.topRightCorner(q, h) = params.Delta();
  joint.bottomLeftCorner(h, q) = params.Delta().transpose();
  if (h > 0) joint.bottomRightCorner(h, h) = params.Gamma().values();
  const SpdMatrix jf = chol_psd(joint);

  PosteriorDraws out;
  out.seed = rng.seed();
  out.tmvn_meta.method = "rejection";
  out.draws.resize(T, q);

  Eigen::VectorXd eta(q + h), u(q + h);
  long tries = 0;
  for (int t = 0; t < T;) {
    if (++tries > max_tries)
      throw MaxTriesExceeded("rejection_sample_sun: acceptance too low");
    for (int j = 0; j < q + h; ++j) eta(j) = rng.normal();
    u = jf.factor().triangularView<Eigen::Lower>() * eta;
    bool ok = true;
    for (int j = 0; j < h; ++j)
      ok = ok && (u(q + j) + params.gamma()(j) > 0.0);
    if (!ok) continue;
    out.draws.row(t) =
        (params.xi() +
         (params.omega_diag().array() * u.head(q).array()).matrix())
            .transpose();
    ++t;
  }
  out.tmvn_meta.acceptance_rate = static_cast<double>(T) / tries;
  return out;
}

OracleReport quadrature_evidence(const SunParams& prior,
                                 const ProbitLikelihood& lik, int nodes) {
  const int q = prior.q();
  if (q > 2) throw QOverCap("quadrature_evidence: q must be at most 2");
  if (prior.h() > 2) throw QOverCap("quadrature_evidence: prior h must be at most 2");
  for (const auto& [at, b] : lik.unit_blocks)
    if (b > 2) throw QOverCap("quadrature_evidence: likelihood block too large");
  if (nodes < 11) nodes = 11;
  if (nodes % 2 == 0) ++nodes;

  const Eigen::VectorXd scale =
      prior.Omega().values().diagonal().array().sqrt();

  // Prior pieces for the h > 0 case, through the slow bivariate kernel.
  const SpdMatrix obar = chol_psd(prior.Omega_bar());
  Eigen::MatrixXd cond_cov;
  double log_prior_norm = 0.0;
  if (prior.h() > 0) {
    cond_cov = prior.Gamma().values() -
               prior.Delta().transpose() * obar.solve(prior.Delta());
    log_prior_norm = log_block_orthant(prior.gamma(), prior.Gamma().values());
  }

  auto log_f = [&](const Eigen::VectorXd& beta) {
    double out = log_gauss_pdf(beta - prior.xi(), prior.Omega().values());
    if (prior.h() > 0) {
      const Eigen::VectorXd zz =
          ((beta - prior.xi()).array() / scale.array()).matrix();
      const Eigen::VectorXd arg =
          prior.gamma() + prior.Delta().transpose() * obar.solve(zz);
      out += log_block_orthant(arg, cond_cov) - log_prior_norm;
    }
    const Eigen::VectorXd xb = lik.Xbar * beta;
    for (std::size_t bi = 0; bi < lik.unit_blocks.size(); ++bi) {
      const auto [at, b] = lik.unit_blocks[bi];
      out += log_block_orthant(xb.segment(at, b), lik.lambda_blocks[bi]);
    }
    return out;
  };

  auto integrate = [&](int n) {
    const double lo0 = prior.xi()(0) - 10.0 * scale(0);
    const double hi0 = prior.xi()(0) + 10.0 * scale(0);
    const double h0 = (hi0 - lo0) / (n - 1);
    std::vector<double> logs;
    std::vector<double> weights;
    logs.reserve(static_cast<std::size_t>(n) * (q == 2 ? n : 1));
    weights.reserve(logs.capacity());
    Eigen::VectorXd beta(q);
    for (int i = 0; i < n; ++i) {
      const double wi = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      beta(0) = lo0 + i * h0;
      if (q == 1) {
        logs.push_back(log_f(beta));
        weights.push_back(wi * h0 / 3.0);
        continue;
      }
      const double lo1 = prior.xi()(1) - 10.0 * scale(1);
      const double h1 = (prior.xi()(1) + 10.0 * scale(1) - lo1) / (n - 1);
      for (int j = 0; j < n; ++j) {
        const double wj =
            (j == 0 || j == n - 1) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
        beta(1) = lo1 + j * h1;
        logs.push_back(log_f(beta));
        weights.push_back(wi * wj * h0 * h1 / 9.0);
      }
    }
    double mx = -kInf;
    for (double v : logs) mx = std::max(mx, v);
    double acc = 0.0;
    for (std::size_t k = 0; k < logs.size(); ++k)
      acc += weights[k] * std::exp(logs[k] - mx);
    return mx + std::log(acc);
  };

  OracleReport report;
  report.method = OracleMethod::Quadrature;
  int n = nodes;
  double prev = integrate(n);
  for (int pass = 0; pass < 5; ++pass) {
    n = 2 * n - 1;
    const double cur = integrate(n);
    report.tolerance = std::fabs(cur - prev);
    prev = cur;
    if (report.tolerance < 1e-8) break;
  }
  report.estimate = Eigen::VectorXd::Constant(1, prev);
  report.std_error = Eigen::VectorXd::Zero(1);
  report.draws_or_nodes = n;
  return report;
}

double effective_sample_size(const Eigen::VectorXd& chain) {
  const int n = static_cast<int>(chain.size());
  if (n < 4) return static_cast<double>(n);
  const double mean = chain.mean();
  const Eigen::VectorXd c = chain.array() - mean;
  const double var = c.squaredNorm() / n;
  if (var <= 0.0) return static_cast<double>(n);

  auto acov = [&](int lag) {
    double acc = 0.0;
    for (int i = 0; i + lag < n; ++i) acc += c(i) * c(i + lag);
    return acc / n;
  };

  // Geyer's initial positive sequence over lag pairs.
  double s = 0.0;
  for (int k = 1; k + 1 < n / 2; k += 2) {
    const double pair = acov(k) + acov(k + 1);
    if (pair <= 0.0) break;
    s += pair;
  }
  const double denom = 1.0 + 2.0 * s / var;
  return n / std::max(denom, 1.0);
}

}  // namespace sunprobit
