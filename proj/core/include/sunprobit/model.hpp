#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "sunprobit/mvn_cdf.hpp"
#include "sunprobit/spd_matrix.hpp"

namespace sunprobit {

enum class Family { DiscreteChoice, ClassSpecific, Sequential };

struct ModelSpec {
  Family family = Family::Sequential;
  int L = 2;  // class count
  int p = 1;  // predictors per vector
  Eigen::MatrixXd Sigma;  // L x L error covariance; identity convention for Sequential

  // Coefficient dimension: p for DiscreteChoice, p*(L-1) otherwise.
  int q() const {
    return family == Family::DiscreteChoice ? p : p * (L - 1);
  }
  Eigen::MatrixXd sigma_or_identity() const {
    if (family == Family::Sequential || Sigma.size() == 0)
      return Eigen::MatrixXd::Identity(L, L);
    return Sigma;
  }
};

struct Dataset {
  int n = 0;
  Eigen::VectorXi y;       // labels in 1..L
  Eigen::MatrixXd X;       // n x p (ClassSpecific, Sequential)
  std::vector<Eigen::MatrixXd> X_alt;  // per-unit L x p (DiscreteChoice)
};

// The likelihood pair (Xbar, Lambda): p(y | beta, X) = Phi_m(Xbar beta; Lambda)
// with Lambda block diagonal over units.
struct ProbitLikelihood {
  int m = 0;
  int q = 0;
  Eigen::MatrixXd Xbar;                    // m x q
  std::vector<Eigen::MatrixXd> lambda_blocks;  // per-unit diagonal blocks
  std::vector<std::pair<int, int>> unit_blocks;  // [start, size) per unit

  Eigen::MatrixXd lambda_dense() const;
};

ProbitLikelihood build_discrete_choice(const ModelSpec& spec, const Dataset& data);
ProbitLikelihood build_class_specific(const ModelSpec& spec, const Dataset& data);
ProbitLikelihood build_sequential(const ModelSpec& spec, const Dataset& data);
ProbitLikelihood build_likelihood(const ModelSpec& spec, const Dataset& data);

// log p(y | beta, X), summed over per-unit blocks.
double likelihood_eval(const ProbitLikelihood& lik, const Eigen::VectorXd& beta,
                       const CdfSettings& cdf = CdfSettings{});

// Append the block for one hypothetical unit with response `label`.
// `x_new` is L x p for DiscreteChoice and 1 x p otherwise.
ProbitLikelihood build_expanded(const ProbitLikelihood& lik,
                                const ModelSpec& spec,
                                const Eigen::MatrixXd& x_new, int label);

}  // namespace sunprobit
