#include "sunprobit/model.hpp"

#include <cmath>

#include "sunprobit/errors.hpp"

namespace sunprobit {

namespace {

void check_label(int label, int L) {
  if (label < 1 || label > L)
    throw DataError("class label out of range 1..L");
}

// One unit's block (rows of Xbar plus the Lambda diagonal block) for the
// discrete-choice construction with per-class covariate rows x_alt (L x p
// working covariates in the class-specific case).
void discrete_choice_block(const Eigen::MatrixXd& x_alt, int label,
                           const Eigen::MatrixXd& sigma, int L,
                           Eigen::MatrixXd* rows, Eigen::MatrixXd* lambda) {
  const int p = static_cast<int>(x_alt.cols());
  rows->resize(L - 1, p);
  Eigen::MatrixXd v(L - 1, L);  // rows (v_k - v_label)^T, k != label ascending
  v.setZero();
  int r = 0;
  for (int k = 1; k <= L; ++k) {
    if (k == label) continue;
    rows->row(r) = x_alt.row(label - 1) - x_alt.row(k - 1);
    v(r, k - 1) = 1.0;
    v(r, label - 1) = -1.0;
    ++r;
  }
  *lambda = v * sigma * v.transpose();
}

// Working covariates x_il = vbar_l kron x_i, with vbar_L = 0.
Eigen::MatrixXd class_specific_covariates(const Eigen::VectorXd& x, int L) {
  const int p = static_cast<int>(x.size());
  Eigen::MatrixXd alt = Eigen::MatrixXd::Zero(L, p * (L - 1));
  for (int l = 0; l < L - 1; ++l)
    alt.block(l, l * p, 1, p) = x.transpose();
  return alt;
}

void sequential_block(const Eigen::VectorXd& x, int label, int L,
                      Eigen::MatrixXd* rows, Eigen::MatrixXd* lambda) {
  const int p = static_cast<int>(x.size());
  const int ni = std::min(label, L - 1);
  rows->setZero(ni, p * (L - 1));
  for (int k = 0; k < ni; ++k) {
    const double sign = (label <= L - 1 && k == label - 1) ? 1.0 : -1.0;
    rows->block(k, k * p, 1, p) = sign * x.transpose();
  }
  *lambda = Eigen::MatrixXd::Identity(ni, ni);
}

ProbitLikelihood assemble(std::vector<Eigen::MatrixXd> rows,
                          std::vector<Eigen::MatrixXd> lambdas, int q) {
  ProbitLikelihood lik;
  lik.q = q;
  int m = 0;
  for (const auto& r : rows) m += static_cast<int>(r.rows());
  lik.m = m;
  lik.Xbar.resize(m, q);
  int at = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int b = static_cast<int>(rows[i].rows());
    lik.Xbar.middleRows(at, b) = rows[i];
    lik.unit_blocks.emplace_back(at, b);
    at += b;
  }
  lik.lambda_blocks = std::move(lambdas);
  return lik;
}

}  // namespace

Eigen::MatrixXd ProbitLikelihood::lambda_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < unit_blocks.size(); ++i) {
    const auto [at, b] = unit_blocks[i];
    out.block(at, at, b, b) = lambda_blocks[i];
  }
  return out;
}

ProbitLikelihood build_discrete_choice(const ModelSpec& spec, const Dataset& data) {
  if (spec.family != Family::DiscreteChoice)
    throw ConfigError("build_discrete_choice: wrong family");
  if (static_cast<int>(data.X_alt.size()) != data.n)
    throw DataError("discrete choice needs per-unit L x p predictor matrices");
  const Eigen::MatrixXd sigma = spec.sigma_or_identity();
  std::vector<Eigen::MatrixXd> rows(data.n), lambdas(data.n);
  for (int i = 0; i < data.n; ++i) {
    check_label(data.y(i), spec.L);
    if (data.X_alt[i].rows() != spec.L || data.X_alt[i].cols() != spec.p)
      throw DataError("predictor matrix dimension mismatch");
    discrete_choice_block(data.X_alt[i], data.y(i), sigma, spec.L, &rows[i],
                          &lambdas[i]);
  }
  return assemble(std::move(rows), std::move(lambdas), spec.p);
}

ProbitLikelihood build_class_specific(const ModelSpec& spec, const Dataset& data) {
  if (spec.family != Family::ClassSpecific)
    throw ConfigError("build_class_specific: wrong family");
  if (data.X.rows() != data.n || data.X.cols() != spec.p)
    throw DataError("predictor matrix dimension mismatch");
  const Eigen::MatrixXd sigma = spec.sigma_or_identity();
  std::vector<Eigen::MatrixXd> rows(data.n), lambdas(data.n);
  for (int i = 0; i < data.n; ++i) {
    check_label(data.y(i), spec.L);
    const Eigen::MatrixXd alt =
        class_specific_covariates(data.X.row(i).transpose(), spec.L);
    discrete_choice_block(alt, data.y(i), sigma, spec.L, &rows[i], &lambdas[i]);
  }
  return assemble(std::move(rows), std::move(lambdas), spec.p * (spec.L - 1));
}

ProbitLikelihood build_sequential(const ModelSpec& spec, const Dataset& data) {
  if (spec.family != Family::Sequential)
    throw ConfigError("build_sequential: wrong family");
  if (data.X.rows() != data.n || data.X.cols() != spec.p)
    throw DataError("predictor matrix dimension mismatch");
  std::vector<Eigen::MatrixXd> rows(data.n), lambdas(data.n);
  for (int i = 0; i < data.n; ++i) {
    check_label(data.y(i), spec.L);
    sequential_block(data.X.row(i).transpose(), data.y(i), spec.L, &rows[i],
                     &lambdas[i]);
  }
  return assemble(std::move(rows), std::move(lambdas), spec.p * (spec.L - 1));
}

ProbitLikelihood build_likelihood(const ModelSpec& spec, const Dataset& data) {
  switch (spec.family) {
    case Family::DiscreteChoice: return build_discrete_choice(spec, data);
    case Family::ClassSpecific: return build_class_specific(spec, data);
    case Family::Sequential: return build_sequential(spec, data);
  }
  throw ConfigError("unknown model family");
}

double likelihood_eval(const ProbitLikelihood& lik, const Eigen::VectorXd& beta,
                       const CdfSettings& cdf) {
  if (beta.size() != lik.q)
    throw DimensionMismatch("likelihood_eval: beta has wrong length");
  const Eigen::VectorXd xb = lik.Xbar * beta;
  double out = 0.0;
  for (std::size_t i = 0; i < lik.unit_blocks.size(); ++i) {
    const auto [at, b] = lik.unit_blocks[i];
    out += mvn_cdf(xb.segment(at, b), chol_psd(lik.lambda_blocks[i]), cdf)
               .log_prob;
  }
  return out;
}

ProbitLikelihood build_expanded(const ProbitLikelihood& lik,
                                const ModelSpec& spec,
                                const Eigen::MatrixXd& x_new, int label) {
  check_label(label, spec.L);
  Eigen::MatrixXd rows, lambda;
  if (spec.family == Family::DiscreteChoice) {
    if (x_new.rows() != spec.L || x_new.cols() != spec.p)
      throw DataError("build_expanded: x_new must be L x p");
    discrete_choice_block(x_new, label, spec.sigma_or_identity(), spec.L,
                          &rows, &lambda);
  } else {
    if (x_new.size() != spec.p)
      throw DataError("build_expanded: x_new must have p entries");
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(x_new.data(), spec.p);
    if (spec.family == Family::ClassSpecific) {
      discrete_choice_block(class_specific_covariates(x, spec.L), label,
                            spec.sigma_or_identity(), spec.L, &rows, &lambda);
    } else {
      sequential_block(x, label, spec.L, &rows, &lambda);
    }
  }
  ProbitLikelihood out = lik;
  const int b = static_cast<int>(rows.rows());
  out.Xbar.conservativeResize(lik.m + b, lik.q);
  out.Xbar.bottomRows(b) = rows;
  out.lambda_blocks.push_back(lambda);
  out.unit_blocks.emplace_back(lik.m, b);
  out.m = lik.m + b;
  return out;
}

}  // namespace sunprobit
