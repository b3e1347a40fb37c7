#include "sunprobit/mvn_cdf.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sunprobit/rng.hpp"

namespace sunprobit {

namespace {

constexpr double kPrimes[] = {
    2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,
    47,  53,  59,  61,  67,  71,  73,  79,  83,  89,  97,  101, 103, 107,
    109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181,
    191, 193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263,
    269, 271, 277, 281, 283, 293, 307, 311, 313, 317, 331, 337, 347, 349,
    353, 359, 367, 373, 379, 383, 389, 397, 401, 409, 419, 421, 431, 433,
    439, 443, 449, 457, 461, 463, 467, 479, 487, 491, 499, 503, 509, 521,
    523, 541, 547, 557, 563, 569, 571, 577, 587, 593, 599, 601, 607, 613,
    617, 619, 631, 641, 643, 647, 653, 659, 661, 673, 677, 683, 691, 701,
    709, 719, 727, 733, 739, 743, 751, 757, 761, 769, 773, 787, 797, 809,
    811, 821, 823, 827, 829, 839, 853, 857, 859, 863, 877, 881, 883, 887,
    907, 911, 919, 929, 937, 941, 947, 953, 967, 971, 977, 983, 991, 997};

double frac(double x) { return x - std::floor(x); }

}  // namespace

namespace detail {

// Reorder variables (smallest conditional probability first) and build the
// Cholesky factor of the permuted covariance on the fly. Also records the
// conditional expectations used by the ordering heuristic.
void order_and_factor(Eigen::MatrixXd& c, Eigen::VectorXd& b,
                      std::vector<int>* perm) {
  const int d = static_cast<int>(c.rows());
  if (perm) {
    perm->resize(d);
    for (int i = 0; i < d; ++i) (*perm)[i] = i;
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) {
    int best = i;
    double best_p = 2.0;
    for (int j = i; j < d; ++j) {
      double cvar = c(j, j);
      double cmean = 0.0;
      for (int k = 0; k < i; ++k) {
        cvar -= c(j, k) * c(j, k);
        cmean += c(j, k) * y(k);
      }
      cvar = std::max(cvar, 1e-300);
      const double p = is_pos_inf(b(j))
                           ? 1.0
                           : norm_cdf((b(j) - cmean) / std::sqrt(cvar));
      if (p < best_p) {
        best_p = p;
        best = j;
      }
    }
    if (best != i) {
      c.row(i).swap(c.row(best));
      c.col(i).swap(c.col(best));
      std::swap(b(i), b(best));
      if (perm) std::swap((*perm)[i], (*perm)[best]);
    }
    double piv = c(i, i);
    double cmean = 0.0;
    for (int k = 0; k < i; ++k) {
      piv -= c(i, k) * c(i, k);
      cmean += c(i, k) * y(k);
    }
    piv = std::sqrt(std::max(piv, 1e-300));
    c(i, i) = piv;
    for (int r = i + 1; r < d; ++r) {
      double v = c(r, i);
      for (int k = 0; k < i; ++k) v -= c(r, k) * c(i, k);
      c(r, i) = v / piv;
    }
    // Expected value of the i-th coordinate under one-sided truncation at
    // the (approximate) conditional bound; drives the next ordering step.
    if (!is_pos_inf(b(i))) {
      const double t = (b(i) - cmean) / piv;
      const double e = std::max(norm_cdf(t), 1e-300);
      y(i) = -norm_pdf(t) / e;
    } else {
      y(i) = 0.0;
    }
  }
}

}  // namespace detail

namespace {

// One separation-of-variables integrand evaluation at point w in [0,1)^(d-1).
double sov_value(const Eigen::MatrixXd& l, const Eigen::VectorXd& b,
                 const double* w, std::vector<double>& y) {
  const int d = static_cast<int>(l.rows());
  double e = is_pos_inf(b(0)) ? 1.0 : norm_cdf(b(0) / l(0, 0));
  double f = e;
  for (int i = 1; i < d; ++i) {
    y[i - 1] = norm_quantile(w[i - 1] * e);
    if (is_pos_inf(b(i))) {
      e = 1.0;
    } else {
      double t = b(i);
      for (int k = 0; k < i; ++k) t -= l(i, k) * y[k];
      e = norm_cdf(t / l(i, i));
    }
    f *= e;
    if (f <= 0.0) return 0.0;
  }
  return f;
}

}  // namespace

CdfResult mvn_cdf(const Eigen::VectorXd& upper, const SpdMatrix& cov,
                  const CdfSettings& settings) {
  const int d0 = cov.dim();
  if (upper.size() != d0)
    throw DimensionMismatch("mvn_cdf: bound/covariance dimension mismatch");
  if (settings.tol <= 0.0) throw DimensionMismatch("mvn_cdf: tol must be > 0");

  CdfResult res;
  for (int i = 0; i < d0; ++i) {
    if (is_neg_inf(upper(i))) {
      res.log_prob = -kInf;
      return res;
    }
  }
  // Marginalize out unconstrained coordinates.
  std::vector<int> keep;
  for (int i = 0; i < d0; ++i)
    if (!is_pos_inf(upper(i))) keep.push_back(i);
  const int d = static_cast<int>(keep.size());
  if (d == 0) {
    res.log_prob = 0.0;
    return res;
  }
  Eigen::VectorXd b(d);
  Eigen::MatrixXd c(d, d);
  for (int i = 0; i < d; ++i) {
    b(i) = upper(keep[i]);
    for (int j = 0; j < d; ++j) c(i, j) = cov.values()(keep[i], keep[j]);
  }

  if (d == 1) {
    res.log_prob = log_norm_cdf(b(0) / std::sqrt(c(0, 0)));
    res.err_estimate = 0.0;
    return res;
  }

  detail::order_and_factor(c, b);

  const int g = d - 1;
  const int nshift = std::max(settings.shifts, 2);
  std::vector<double> lattice(g);
  for (int k = 0; k < g; ++k)
    lattice[k] = frac(std::sqrt(kPrimes[k % 168] * (1.0 + k / 168)));

  RngStream rng(settings.seed);
  std::vector<std::vector<double>> shift(nshift, std::vector<double>(g));
  for (auto& s : shift)
    for (double& v : s) v = rng.uniform();

  std::vector<double> sum(nshift, 0.0);
  std::vector<long> count(nshift, 0);
  std::vector<double> w(g), y(g);

  long batch = 250;
  long used = 0;
  double p = 0.0, err = kInf;
  while (used < settings.max_points) {
    for (int s = 0; s < nshift; ++s) {
      const long start = count[s];
      for (long i = start; i < start + batch; ++i) {
        for (int k = 0; k < g; ++k) {
          const double v = frac((static_cast<double>(i) + 1.0) * lattice[k] +
                                shift[s][k]);
          w[k] = std::fabs(2.0 * v - 1.0);
        }
        sum[s] += sov_value(c, b, w.data(), y);
      }
      count[s] += batch;
      used += batch;
    }
    double mean = 0.0;
    for (int s = 0; s < nshift; ++s) mean += sum[s] / count[s];
    mean /= nshift;
    double var = 0.0;
    for (int s = 0; s < nshift; ++s) {
      const double dlt = sum[s] / count[s] - mean;
      var += dlt * dlt;
    }
    var /= (nshift - 1.0);
    p = mean;
    err = 3.0 * std::sqrt(var / nshift);
    if (err <= settings.tol) break;
    batch = std::min(2 * batch, (settings.max_points - used) / nshift + 1);
  }

  res.log_prob = (p > 0.0) ? std::min(std::log(p), 0.0) : -kInf;
  res.err_estimate = err;
  res.points_used = used;
  res.tolerance_met = err <= settings.tol;
  return res;
}

CdfResult mvn_upper_orthant(const Eigen::VectorXd& lower, const SpdMatrix& cov,
                            const CdfSettings& settings) {
  return mvn_cdf(-lower, cov, settings);
}

}  // namespace sunprobit
