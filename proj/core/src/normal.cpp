#include "sunprobit/normal.hpp"

#include <cmath>

#include "sunprobit/errors.hpp"

namespace sunprobit {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double log_norm_pdf(double x) { return -0.5 * (kLog2Pi + x * x); }

double norm_cdf(double x) {
  if (is_pos_inf(x)) return 1.0;
  if (is_neg_inf(x)) return 0.0;
  return 0.5 * std::erfc(-x / kSqrt2);
}

// Continued-fraction Mills ratio inverse phi(x)/Q(x) where Q is the upper
// tail. For moderate x computed from erfc directly.
double mills_ratio_inv(double x) {
  if (x < 10.0) {
    const double q = 0.5 * std::erfc(x / kSqrt2);
    return norm_pdf(x) / q;
  }
  // Laplace continued fraction for the Mills ratio, x large.
  double cf = 0.0;
  for (int k = 30; k >= 1; --k) cf = static_cast<double>(k) / (x + cf);
  return x + cf;
}

double log_norm_cdf(double x) {
  if (is_pos_inf(x)) return 0.0;
  if (is_neg_inf(x)) return -kInf;
  if (x > -8.0) {
    const double p = norm_cdf(x);
    if (p > 1e-300) return std::log(p);
  }
  // Left tail: Phi(x) = phi(x) / r(-x) with r the inverse Mills ratio.
  return log_norm_pdf(x) - std::log(mills_ratio_inv(-x));
}

// Wichura's algorithm AS 241 (PPND16), relative accuracy ~1e-15.
double norm_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  const double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return (q < 0.0) ? -val : val;
}

namespace {

// Tail method of Robert (1995): standard normal conditioned on a < x < b,
// a > 0, b possibly infinite. The proposal is an exponential with the optimal
// rate truncated to [a, b]; its acceptance probability is bounded away from
// zero uniformly in (a, b), so the loop terminates for every valid slice.
double sample_tail(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || std::isnan(b))
    throw Error("sample_tail: invalid truncation bounds");
  if (b <= a) return a;  // degenerate slice from caller round-off
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  // Mass of the truncated exponential: 1 - exp(-rate (b - a)), kept in
  // expm1 form so narrow slices do not cancel.
  const double neg_mass = (is_pos_inf(b) || rate * (b - a) > 700.0)
                              ? -1.0
                              : std::expm1(-rate * (b - a));
  for (int tries = 0; tries < 1000000; ++tries) {
    const double u = rng.uniform();
    const double x = a - std::log1p(u * neg_mass) / rate;
    // Ratio of target to proposal, scaled by its maximum at x = rate
    // (clamped into the slice), so the bound is tight.
    const double peak = std::min(std::max(rate, a), b);
    const double log_acc =
        (-0.5 * x * x + rate * x) - (-0.5 * peak * peak + rate * peak);
    if (std::log(rng.uniform()) <= log_acc) return std::min(x, b);
  }
  throw Error("sample_tail: acceptance loop failed to terminate");
}

}  // namespace

double sample_trunc_std_normal(double lower, double upper, RngStream& rng) {
  if (std::isnan(lower) || std::isnan(upper))
    throw Error("sample_trunc_std_normal: NaN truncation bound");
  if (lower > upper) return 0.5 * (lower + upper);  // degenerate, caller's bug
  const double kTail = 0.66;
  if (lower >= kTail) return sample_tail(lower, upper, rng);
  if (upper <= -kTail) return -sample_tail(-upper, -lower, rng);
  if (is_neg_inf(lower) && is_pos_inf(upper)) return rng.normal();
  // Central region: inverse-cdf between the two probability bounds.
  const double pl = norm_cdf(lower);
  const double pu = norm_cdf(upper);
  if (pu - pl > 1e-12) {
    for (;;) {
      const double x = norm_quantile(pl + rng.uniform() * (pu - pl));
      if (x > lower && x < upper) return x;
    }
  }
  // Very thin central slice; fall back to uniform rejection on [lower, upper].
  const double mode = (lower > 0.0) ? lower : ((upper < 0.0) ? upper : 0.0);
  const double fmax = norm_pdf(mode);
  for (;;) {
    const double x = lower + rng.uniform() * (upper - lower);
    if (rng.uniform() * fmax <= norm_pdf(x)) return x;
  }
}

void trunc_normal_moments(double lower, double mu, double sigma,
                          double* mean, double* var) {
  if (is_neg_inf(lower)) {
    *mean = mu;
    *var = sigma * sigma;
    return;
  }
  const double alpha = (lower - mu) / sigma;
  const double lam = mills_ratio_inv(alpha);
  *mean = mu + sigma * lam;
  *var = sigma * sigma * (1.0 + alpha * lam - lam * lam);
}

}  // namespace sunprobit

namespace sunprobit {
double RngStream::normal() { return norm_quantile(uniform()); }
}  // namespace sunprobit
