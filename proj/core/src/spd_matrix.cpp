#include "sunprobit/spd_matrix.hpp"

#include <array>
#include <cmath>

namespace sunprobit {

double SpdMatrix::log_det() const {
  return 2.0 * factor_.diagonal().array().log().sum();
}

Eigen::MatrixXd SpdMatrix::inverse() const {
  return solve(Eigen::MatrixXd::Identity(dim(), dim()));
}

SpdMatrix chol_psd(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols())
    throw DimensionMismatch("chol_psd: matrix must be square");
  if (a.rows() == 0) return SpdMatrix{};
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1.0);
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw DimensionMismatch("chol_psd: matrix is not symmetric");

  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  static constexpr std::array<double, 4> kLadder = {0.0, 1e-10, 1e-8, 1e-6};
  const int n = static_cast<int>(sym.rows());
  for (double jitter : kLadder) {
    Eigen::MatrixXd m = sym;
    if (jitter > 0.0) m.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd l = llt.matrixL();
    // Guard against spuriously tiny pivots that would blow up solves.
    if (!(l.diagonal().minCoeff() > 0.0)) continue;
    SpdMatrix out;
    out.values_ = m;
    out.factor_ = std::move(l);
    out.jitter_ = jitter;
    return out;
  }
  throw NotFactorizable("chol_psd: matrix not positive semidefinite within jitter ladder");
  (void)n;
}

}  // namespace sunprobit
