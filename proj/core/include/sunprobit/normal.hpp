#pragma once

#include "sunprobit/rng.hpp"

namespace sunprobit {

inline constexpr double kInf = 1e308;  // sentinel for +/- infinite bounds

inline bool is_neg_inf(double x) { return x <= -1e300; }
inline bool is_pos_inf(double x) { return x >= 1e300; }

double norm_pdf(double x);
double log_norm_pdf(double x);
double norm_cdf(double x);
double log_norm_cdf(double x);        // accurate deep into the left tail
double norm_quantile(double p);       // inverse cdf, Wichura AS 241 precision
double mills_ratio_inv(double x);     // phi(x) / (1 - Phi(x)), stable for large x

// Sample from a standard normal truncated to (lower, upper); either bound may
// be +/- kInf. Exact, works in far tails.
double sample_trunc_std_normal(double lower, double upper, RngStream& rng);

// Mean and variance of N(mu, sigma^2) truncated below at `lower`.
void trunc_normal_moments(double lower, double mu, double sigma,
                          double* mean, double* var);

}  // namespace sunprobit
