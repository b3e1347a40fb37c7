#include "sunprobit/vb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sunprobit/errors.hpp"
#include "sunprobit/mvn_sampling.hpp"

namespace sunprobit {

namespace {

std::vector<int> rest_indices(const std::vector<int>& idx, int dim) {
  std::vector<bool> in(dim, false);
  for (int i : idx) in[i] = true;
  std::vector<int> rest;
  rest.reserve(dim - idx.size());
  for (int i = 0; i < dim; ++i)
    if (!in[i]) rest.push_back(i);
  return rest;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

// KL between a product of blockwise TN(0; center_c, C_c) factors and the
// exact TN(0; gamma_pst, Gamma_pst) law of zbar. Gaussian cross-entropies in
// closed form, orthant normalizers through the CDF kernel.
double kl_against_exact(const std::vector<std::vector<int>>& blocks,
                        const std::vector<Eigen::VectorXd>& center,
                        const std::vector<SpdMatrix>& bcov,
                        const std::vector<Eigen::VectorXd>& mean,
                        const std::vector<Eigen::MatrixXd>& cov,
                        const AugmentedForm& aug, const CdfSettings& cdf) {
  const int dim = aug.dim;
  double acc = 0.0;
  Eigen::VectorXd ez(dim);
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t c = 0; c < blocks.size(); ++c) {
    const auto& idx = blocks[c];
    const int nc = static_cast<int>(idx.size());
    const Eigen::VectorXd d = mean[c] - center[c];
    const Eigen::MatrixXd second = cov[c] + d * d.transpose();
    acc -= 0.5 * (bcov[c].log_det() + bcov[c].solve(second).trace());
    acc -= mvn_upper_orthant(-center[c], bcov[c], cdf).log_prob;
    for (int i = 0; i < nc; ++i) {
      ez(idx[i]) = mean[c](i);
      for (int j = 0; j < nc; ++j) var(idx[i], idx[j]) = cov[c](i, j);
    }
  }
  const Eigen::VectorXd dd = ez - aug.gamma_pst;
  const Eigen::MatrixXd second = var + dd * dd.transpose();
  acc += 0.5 * (aug.Gamma_pst.log_det() + aug.Gamma_pst.solve(second).trace());
  acc += mvn_upper_orthant(-aug.gamma_pst, aug.Gamma_pst, cdf).log_prob;
  return std::max(acc, 0.0);
}

}  // namespace

AugmentedForm augmented_form(const SunParams& posterior,
                             const ProbitLikelihood& lik) {
  if (posterior.q() != lik.q)
    throw DimensionMismatch("augmented_form: posterior and likelihood disagree on q");
  if (posterior.h() < lik.m)
    throw DimensionMismatch("augmented_form: posterior carries fewer rows than the likelihood");

  AugmentedForm aug;
  aug.q = posterior.q();
  aug.dim = posterior.h();
  aug.xi = posterior.xi();
  aug.Omega = posterior.Omega();

  const SpdMatrix obar = chol_psd(posterior.Omega_bar());
  const Eigen::MatrixXd b = obar.solve(posterior.Delta());  // q x dim
  aug.X_pst.resize(aug.dim, aug.q);
  for (int i = 0; i < aug.q; ++i)
    aug.X_pst.col(i) = b.row(i).transpose() / posterior.omega_diag()(i);

  aug.gamma_pst = posterior.gamma();
  aug.eta_pst = aug.gamma_pst - aug.X_pst * aug.xi;

  Eigen::MatrixXd sigma =
      posterior.Gamma().values() - posterior.Delta().transpose() * b;
  sigma = 0.5 * (sigma + sigma.transpose());
  aug.Sigma_pst = chol_psd(sigma);
  aug.Gamma_pst = posterior.Gamma();

  const Eigen::MatrixXd xo = aug.X_pst * aug.Omega.values();  // dim x q
  Eigen::MatrixXd v =
      aug.Omega.values() - xo.transpose() * aug.Gamma_pst.solve(xo);
  v = 0.5 * (v + v.transpose());
  aug.V_pst = chol_psd(v);
  return aug;
}

int Blocking::total() const {
  int t = 0;
  for (const auto& b : blocks) t += static_cast<int>(b.size());
  return t;
}

void Blocking::validate(int dim, int size_cap) const {
  std::vector<bool> seen(dim, false);
  for (const auto& b : blocks) {
    if (b.empty() || static_cast<int>(b.size()) > size_cap)
      throw DimensionTooLarge("Blocking: block size outside 1..cap");
    for (int i : b) {
      if (i < 0 || i >= dim || seen[i])
        throw IndexOutOfRange("Blocking: indices must partition 0..dim-1");
      seen[i] = true;
    }
  }
  if (total() != dim)
    throw IndexOutOfRange("Blocking: indices must cover 0..dim-1");
}

Blocking default_blocking(const ProbitLikelihood& lik, int h) {
  Blocking out;
  if (h > 0) {
    std::vector<int> head(h);
    std::iota(head.begin(), head.end(), 0);
    out.blocks.push_back(std::move(head));
  }
  for (const auto& [at, b] : lik.unit_blocks) {
    std::vector<int> idx(b);
    std::iota(idx.begin(), idx.end(), h + at);
    out.blocks.push_back(std::move(idx));
  }
  return out;
}

Blocking singleton_blocking(int dim) {
  Blocking out;
  for (int i = 0; i < dim; ++i) out.blocks.push_back({i});
  return out;
}

Eigen::VectorXd VBState::stacked_mean(int dim) const {
  Eigen::VectorXd out(dim);
  for (std::size_t c = 0; c < blocks.size(); ++c)
    for (std::size_t i = 0; i < blocks[c].size(); ++i)
      out(blocks[c][i]) = mean[c](i);
  return out;
}

Eigen::MatrixXd VBState::stacked_cov(int dim) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t c = 0; c < blocks.size(); ++c)
    for (std::size_t i = 0; i < blocks[c].size(); ++i)
      for (std::size_t j = 0; j < blocks[c].size(); ++j)
        out(blocks[c][i], blocks[c][j]) = cov[c](i, j);
  return out;
}

Eigen::VectorXd MfState::stacked_mean(int dim) const {
  Eigen::VectorXd out(dim);
  for (std::size_t c = 0; c < blocks.size(); ++c)
    for (std::size_t i = 0; i < blocks[c].size(); ++i)
      out(blocks[c][i]) = mean[c](i);
  return out;
}

VBState cavi_pfm(const AugmentedForm& aug, const Blocking& blocking,
                 const VbOptions& options) {
  const int dim = aug.dim;
  blocking.validate(dim, options.moments.dim_cap);
  const int nblocks = static_cast<int>(blocking.blocks.size());

  VBState state;
  state.blocks = blocking.blocks;
  state.W.resize(nblocks);
  state.Gamma_c.resize(nblocks);
  state.center.resize(nblocks);
  state.mean.resize(nblocks);
  state.cov.resize(nblocks);

  std::vector<std::vector<int>> rest(nblocks);
  for (int c = 0; c < nblocks; ++c) {
    const auto& idx = state.blocks[c];
    const int nc = static_cast<int>(idx.size());
    rest[c] = rest_indices(idx, dim);
    const int nr = static_cast<int>(rest[c].size());

    // Columns of Gamma_pst^{-1} touching this block, by solves against the
    // cached factor; the conditional covariance is the inverse of the
    // [c, c] sub-block and the coupling follows from the same columns.
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(dim, nc);
    for (int i = 0; i < nc; ++i) cols(idx[i], i) = 1.0;
    const Eigen::MatrixXd ginv_cols = aug.Gamma_pst.solve(cols);
    Eigen::MatrixXd gii(nc, nc), gri(nr, nc);
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j) gii(i, j) = ginv_cols(idx[i], j);
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nc; ++j) gri(i, j) = ginv_cols(rest[c][i], j);
    Eigen::MatrixXd gc = gii.inverse();
    gc = 0.5 * (gc + gc.transpose());
    state.Gamma_c[c] = chol_psd(gc);
    state.W[c] = -state.Gamma_c[c].values() * gri.transpose();

    // Iteration 0 ignores the coupling.
    state.center[c] = gather(aug.gamma_pst, idx);
    tmvn_moments(Eigen::VectorXd::Zero(nc), state.center[c], state.Gamma_c[c],
                 &state.mean[c], &state.cov[c], options.moments);
  }

  Eigen::VectorXd ez = state.stacked_mean(dim);
  for (int t = 1; t <= options.max_iter; ++t) {
    double change = 0.0;
    for (int c = 0; c < nblocks; ++c) {
      const auto& idx = state.blocks[c];
      const Eigen::VectorXd shift =
          gather(ez, rest[c]) - gather(aug.gamma_pst, rest[c]);
      state.center[c] = gather(aug.gamma_pst, idx) + state.W[c] * shift;
      Eigen::VectorXd old = state.mean[c];
      tmvn_moments(Eigen::VectorXd::Zero(idx.size()), state.center[c],
                   state.Gamma_c[c], &state.mean[c], &state.cov[c],
                   options.moments);
      change = std::max(change, (state.mean[c] - old).lpNorm<Eigen::Infinity>());
      for (std::size_t i = 0; i < idx.size(); ++i)
        ez(idx[i]) = state.mean[c](i);
    }
    state.trace.push_back(change);
    state.iterations = t;
    if (change <= options.tol) {
      state.converged = true;
      break;
    }
  }
  return state;
}

void vb_moments(const VBState& state, const AugmentedForm& aug,
                Eigen::VectorXd* mean, Eigen::MatrixXd* cov) {
  const int dim = aug.dim;
  const Eigen::VectorXd ez = state.stacked_mean(dim);
  const Eigen::VectorXd r = aug.Sigma_pst.solve(ez - aug.eta_pst);
  const Eigen::VectorXd oxi = aug.Omega.solve(aug.xi);
  *mean = aug.V_pst.values() * (aug.X_pst.transpose() * r + oxi);

  const Eigen::MatrixXd b = aug.Sigma_pst.solve(aug.X_pst);  // dim x q
  const Eigen::MatrixXd a = aug.V_pst.values() * b.transpose();  // q x dim
  Eigen::MatrixXd out =
      aug.V_pst.values() + a * state.stacked_cov(dim) * a.transpose();
  *cov = 0.5 * (out + out.transpose());
}

PosteriorDraws sample_vb(const VBState& state, const AugmentedForm& aug, int T,
                         RngStream& rng, const TmvnOptions& options) {
  if (T < 1) throw DimensionMismatch("sample_vb: T must be >= 1");
  const int dim = aug.dim;
  const int q = aug.q;

  PosteriorDraws out;
  out.seed = rng.seed();

  Eigen::MatrixXd z(T, dim);
  for (std::size_t c = 0; c < state.blocks.size(); ++c) {
    const auto& idx = state.blocks[c];
    TmvnMeta meta;
    const Eigen::MatrixXd zc =
        sample_tmvn(Eigen::VectorXd::Zero(idx.size()), state.center[c],
                    state.Gamma_c[c], T, rng, options, &meta);
    for (std::size_t i = 0; i < idx.size(); ++i) z.col(idx[i]) = zc.col(i);
    out.tmvn_meta.method = meta.method;
    out.tmvn_meta.acceptance_rate =
        std::min(out.tmvn_meta.acceptance_rate, meta.acceptance_rate);
    out.tmvn_meta.degraded = out.tmvn_meta.degraded || meta.degraded;
  }

  const Eigen::MatrixXd eps =
      sample_mvn(Eigen::VectorXd::Zero(q), aug.V_pst, T, rng);

  const Eigen::MatrixXd r = aug.Sigma_pst.solve(
      (z.rowwise() - aug.eta_pst.transpose()).transpose());  // dim x T
  const Eigen::VectorXd base = aug.V_pst.values() * aug.Omega.solve(aug.xi);
  Eigen::MatrixXd draws =
      (aug.V_pst.values() * (aug.X_pst.transpose() * r)).transpose() + eps;
  draws.rowwise() += base.transpose();
  out.draws = std::move(draws);
  return out;
}

Eigen::VectorXd predict_vb(const VBState& state, const AugmentedForm& aug,
                           const ModelSpec& spec, const Eigen::MatrixXd& x_new,
                           int T, RngStream& rng, const TmvnOptions& options) {
  const PosteriorDraws d = sample_vb(state, aug, T, rng, options);
  const int L = spec.L;
  const int p = spec.p;

  Eigen::MatrixXd noise_factor;
  if (spec.family != Family::Sequential)
    noise_factor = chol_psd(spec.sigma_or_identity()).factor();

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(L);
  Eigen::VectorXd u(L), eta(L);
  for (int t = 0; t < T; ++t) {
    const Eigen::VectorXd beta = d.draws.row(t).transpose();
    if (spec.family == Family::Sequential) {
      if (x_new.size() != p)
        throw DataError("predict_vb: x_new must have p entries");
      const Eigen::Map<const Eigen::VectorXd> x(x_new.data(), p);
      int cls = L;
      for (int l = 0; l < L - 1; ++l) {
        const double zl = x.dot(beta.segment(l * p, p)) + rng.normal();
        if (zl > 0.0) {
          cls = l + 1;
          break;
        }
      }
      counts(cls - 1) += 1.0;
      continue;
    }
    if (spec.family == Family::DiscreteChoice) {
      if (x_new.rows() != L || x_new.cols() != p)
        throw DataError("predict_vb: x_new must be L x p");
      u = x_new * beta;
    } else {
      if (x_new.size() != p)
        throw DataError("predict_vb: x_new must have p entries");
      const Eigen::Map<const Eigen::VectorXd> x(x_new.data(), p);
      u.setZero();
      for (int l = 0; l < L - 1; ++l) u(l) = x.dot(beta.segment(l * p, p));
    }
    for (int l = 0; l < L; ++l) eta(l) = rng.normal();
    u += noise_factor.triangularView<Eigen::Lower>() * eta;
    int best = 0;
    for (int l = 1; l < L; ++l)
      if (u(l) > u(best)) best = l;
    counts(best) += 1.0;
  }
  return counts / static_cast<double>(T);
}

MfState cavi_mf(const AugmentedForm& aug, const Blocking& blocking,
                const VbOptions& options) {
  const int dim = aug.dim;
  blocking.validate(dim, options.moments.dim_cap);
  const int nblocks = static_cast<int>(blocking.blocks.size());

  // The factorized update for zbar needs Sigma_pst block diagonal.
  const double scale = aug.Sigma_pst.values().diagonal().maxCoeff();
  std::vector<int> owner(dim, -1);
  for (int c = 0; c < nblocks; ++c)
    for (int i : blocking.blocks[c]) owner[i] = c;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      if (owner[i] != owner[j] &&
          std::fabs(aug.Sigma_pst.values()(i, j)) > 1e-8 * scale)
        throw ConfigError("cavi_mf: Sigma_pst is not block diagonal for this blocking");

  MfState state;
  state.blocks = blocking.blocks;
  state.Sigma_c.resize(nblocks);
  state.center.resize(nblocks);
  state.mean.resize(nblocks);
  state.cov.resize(nblocks);
  for (int c = 0; c < nblocks; ++c) {
    const auto& idx = state.blocks[c];
    const int nc = static_cast<int>(idx.size());
    Eigen::MatrixXd sc(nc, nc);
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j)
        sc(i, j) = aug.Sigma_pst.values()(idx[i], idx[j]);
    state.Sigma_c[c] = chol_psd(sc);
    state.center[c] = gather(aug.eta_pst, idx);
    tmvn_moments(Eigen::VectorXd::Zero(nc), state.center[c], state.Sigma_c[c],
                 &state.mean[c], &state.cov[c], options.moments);
  }

  const Eigen::VectorXd oxi = aug.Omega.solve(aug.xi);
  Eigen::VectorXd ez = state.stacked_mean(dim);
  for (int t = 1; t <= options.max_iter; ++t) {
    state.mean_beta =
        aug.V_pst.values() *
        (aug.X_pst.transpose() * aug.Sigma_pst.solve(ez - aug.eta_pst) + oxi);
    const Eigen::VectorXd centers = aug.eta_pst + aug.X_pst * state.mean_beta;
    double change = 0.0;
    for (int c = 0; c < nblocks; ++c) {
      const auto& idx = state.blocks[c];
      state.center[c] = gather(centers, idx);
      Eigen::VectorXd old = state.mean[c];
      tmvn_moments(Eigen::VectorXd::Zero(idx.size()), state.center[c],
                   state.Sigma_c[c], &state.mean[c], &state.cov[c],
                   options.moments);
      change = std::max(change, (state.mean[c] - old).lpNorm<Eigen::Infinity>());
      for (std::size_t i = 0; i < idx.size(); ++i)
        ez(idx[i]) = state.mean[c](i);
    }
    state.trace.push_back(change);
    state.iterations = t;
    if (change <= options.tol) {
      state.converged = true;
      break;
    }
  }
  state.mean_beta =
      aug.V_pst.values() *
      (aug.X_pst.transpose() * aug.Sigma_pst.solve(ez - aug.eta_pst) + oxi);
  return state;
}

double kl_zbar(const VBState& state, const AugmentedForm& aug,
               const CdfSettings& cdf) {
  return kl_against_exact(state.blocks, state.center, state.Gamma_c,
                          state.mean, state.cov, aug, cdf);
}

double kl_zbar_mf(const MfState& state, const AugmentedForm& aug,
                  const CdfSettings& cdf) {
  return kl_against_exact(state.blocks, state.center, state.Sigma_c,
                          state.mean, state.cov, aug, cdf);
}

double kl_joint_mf(const MfState& state, const AugmentedForm& aug,
                   const CdfSettings& cdf) {
  const int dim = aug.dim;
  Eigen::VectorXd ez(dim);
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t c = 0; c < state.blocks.size(); ++c)
    for (std::size_t i = 0; i < state.blocks[c].size(); ++i) {
      ez(state.blocks[c][i]) = state.mean[c](i);
      for (std::size_t j = 0; j < state.blocks[c].size(); ++j)
        var(state.blocks[c][i], state.blocks[c][j]) = state.cov[c](i, j);
    }

  // E_{q(zbar)} KL[q(beta) || p(beta | zbar, y)] for two Gaussians sharing
  // covariance V_pst.
  const Eigen::MatrixXd b = aug.Sigma_pst.solve(aug.X_pst);  // dim x q
  const double spread =
      0.5 * ((b.transpose() * var * b) * aug.V_pst.values()).trace();
  const Eigen::VectorXd mu_p =
      aug.V_pst.values() * (aug.X_pst.transpose() *
                                aug.Sigma_pst.solve(ez - aug.eta_pst) +
                            aug.Omega.solve(aug.xi));
  const Eigen::VectorXd diff = state.mean_beta - mu_p;
  const double offset = 0.5 * diff.dot(aug.V_pst.solve(diff));
  return kl_zbar_mf(state, aug, cdf) + spread + offset;
}

}  // namespace sunprobit
