#pragma once

#include <Eigen/Dense>

#include "sunprobit/errors.hpp"

namespace sunprobit {

// Symmetric positive (semi)definite matrix with a cached Cholesky factor.
// Factorization applies the minimal diagonal jitter from a fixed ladder, so
// exactly singular blocks (duplicated predictors, degenerate Lambda blocks)
// still factor.
class SpdMatrix {
 public:
  SpdMatrix() = default;

  int dim() const { return static_cast<int>(values_.rows()); }
  const Eigen::MatrixXd& values() const { return values_; }
  const Eigen::MatrixXd& factor() const { return factor_; }  // lower triangular
  double jitter_applied() const { return jitter_; }

  // Solve A x = b through the cached factor. Returns a vector for vector
  // right-hand sides and a matrix otherwise.
  template <typename Derived>
  auto solve(const Eigen::MatrixBase<Derived>& b) const {
    using Plain = typename Derived::PlainObject;
    Plain y = factor_.template triangularView<Eigen::Lower>().solve(b.derived());
    Plain out =
        factor_.transpose().template triangularView<Eigen::Upper>().solve(y);
    return out;
  }
  // L y = b and L^T y = b.
  template <typename Derived>
  auto solve_lower(const Eigen::MatrixBase<Derived>& b) const {
    typename Derived::PlainObject out =
        factor_.template triangularView<Eigen::Lower>().solve(b.derived());
    return out;
  }
  template <typename Derived>
  auto solve_lower_t(const Eigen::MatrixBase<Derived>& b) const {
    typename Derived::PlainObject out =
        factor_.transpose().template triangularView<Eigen::Upper>().solve(
            b.derived());
    return out;
  }

  double log_det() const;  // of the (jittered) matrix
  Eigen::MatrixXd inverse() const;

  friend SpdMatrix chol_psd(const Eigen::MatrixXd& a);

 private:
  Eigen::MatrixXd values_;
  Eigen::MatrixXd factor_;
  double jitter_ = 0.0;
};

// Factor a symmetric matrix, walking the jitter ladder {0, 1e-10, 1e-8, 1e-6}.
// Throws NotFactorizable when every level fails, DimensionMismatch when the
// input is not square or not symmetric.
SpdMatrix chol_psd(const Eigen::MatrixXd& a);

}  // namespace sunprobit
