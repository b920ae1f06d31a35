#pragma once

// Shared basics: missing-value sentinel, error types, and the small pieces of
// numerics (logit/probit links, stable log-sum-exp) used across the library.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdam {

// Sentinel for an unobserved categorical cell.
constexpr int kMissing = -1;

// Bad inputs: malformed config, schema mismatch, inconsistent margins.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failures while running: non-convergence, impossible weights, sampler aborts.
struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double inv_logit(double x) {
  // Stable on both tails.
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Standard normal CDF.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

}  // namespace mdam
