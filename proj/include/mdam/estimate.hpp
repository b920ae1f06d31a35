#pragma once

// Survey estimators on completed datasets and the multiple-imputation
// combining rules.  Variances use the with-replacement approximation
// throughout, which is the right companion to the weight regimes here.

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mdam/common.hpp"
#include "mdam/dataset.hpp"

namespace mdam {

struct PointEstimate {
  double value = 0.0;
  double variance = 0.0;
};

// A (variable, level) conjunction, e.g. {{"vote",1},{"sex",0}}.
using CellCondition = std::vector<std::pair<std::string, int>>;

namespace detail {

inline bool matches(const SurveyDataset& ds, int i, const std::vector<std::pair<int, int>>& c) {
  for (auto [j, l] : c)
    if (ds.cell(i, j) != l) return false;
  return true;
}

inline std::vector<std::pair<int, int>> resolve(const SurveyDataset& ds,
                                                const CellCondition& c) {
  std::vector<std::pair<int, int>> out;
  for (const auto& [name, level] : c) {
    int j = ds.var_index(name);
    if (level < 0 || level >= ds.vars[j].n_levels())
      throw ConfigError("condition level out of range for " + name);
    out.emplace_back(j, level);
  }
  return out;
}

}  // namespace detail

// Horvitz-Thompson total of 1[X_j = level], with the with-replacement design
// variance n/(n-1) * sum((w_i z_i - mean)^2).
inline PointEstimate ht_total(const SurveyDataset& ds, const std::string& variable,
                              int level) {
  int j = ds.var_index(variable);
  if (level < 0 || level >= ds.vars[j].n_levels())
    throw ConfigError("level out of range for " + variable);
  int n = ds.n();
  if (n < 2) throw RuntimeError("need at least two rows for a design variance");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (ds.cell(i, j) == kMissing)
      throw RuntimeError("ht_total requires a completed dataset");
    total += ds.weights[i] * (ds.cell(i, j) == level);
  }
  double mean = total / n, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = ds.weights[i] * (ds.cell(i, j) == level) - mean;
    ss += d * d;
  }
  return {total, static_cast<double>(n) / (n - 1) * ss};
}

// Weighted proportion of `target` within `subgroup` (empty subgroup condition
// means the whole sample), as a ratio estimator with Taylor-linearised
// with-replacement variance.
inline PointEstimate weighted_proportion(const SurveyDataset& ds, const CellCondition& target,
                                         const CellCondition& subgroup = {}) {
  auto tg = detail::resolve(ds, target);
  auto sg = detail::resolve(ds, subgroup);
  int n = ds.n();
  if (n < 2) throw RuntimeError("need at least two rows for a design variance");
  double num = 0.0, den = 0.0;
  std::vector<double> y(n), s(n);
  for (int i = 0; i < n; ++i) {
    for (const auto& cond : tg)
      if (ds.cell(i, cond.first) == kMissing)
        throw RuntimeError("weighted_proportion requires a completed dataset");
    s[i] = detail::matches(ds, i, sg) ? 1.0 : 0.0;
    y[i] = s[i] != 0.0 && detail::matches(ds, i, tg) ? 1.0 : 0.0;
    num += ds.weights[i] * y[i];
    den += ds.weights[i] * s[i];
  }
  if (den <= 0.0) throw RuntimeError("weighted_proportion: empty subgroup");
  double p = num / den;
  // Linearised residuals; their weighted sum is 0 at the estimate.
  double ss = 0.0, mean = 0.0;
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) {
    u[i] = ds.weights[i] * (y[i] - p * s[i]);
    mean += u[i] / n;
  }
  for (int i = 0; i < n; ++i) ss += (u[i] - mean) * (u[i] - mean);
  return {p, static_cast<double>(n) / (n - 1) * ss / (den * den)};
}

struct MIEstimate {
  double qbar = 0.0;       // pooled point estimate
  double b = 0.0;          // between-imputation variance
  double ubar = 0.0;       // average within-imputation variance
  double t = 0.0;          // total variance
  double df = 0.0;         // Rubin degrees of freedom (infinite if b = 0)
  double se_total = 0.0;   // sqrt(T)
  double se_between = 0.0; // sqrt(b/L): spread attributable to imputation
  double ci_lo = 0.0, ci_hi = 0.0;
  int n_imputations = 0;
};

inline MIEstimate rubin_combine(const std::vector<PointEstimate>& per_imputation,
                                double level = 0.95) {
  int L = static_cast<int>(per_imputation.size());
  if (L < 2) throw ConfigError("need at least two imputations to combine");
  MIEstimate e;
  e.n_imputations = L;
  for (const auto& pe : per_imputation) {
    e.qbar += pe.value / L;
    e.ubar += pe.variance / L;
  }
  for (const auto& pe : per_imputation)
    e.b += (pe.value - e.qbar) * (pe.value - e.qbar) / (L - 1);
  e.t = e.ubar + (1.0 + 1.0 / L) * e.b;
  e.se_total = std::sqrt(e.t);
  e.se_between = std::sqrt(e.b / L);
  double q;
  if (e.b > 0.0) {
    double r = e.ubar / ((1.0 + 1.0 / L) * e.b);
    e.df = (L - 1) * (1.0 + r) * (1.0 + r);
    boost::math::students_t_distribution<double> tdist(e.df);
    q = boost::math::quantile(tdist, 0.5 + level / 2.0);
  } else {
    // Identical imputations: fall back to the normal quantile.
    e.df = std::numeric_limits<double>::infinity();
    q = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * (0.5 + level / 2.0));
  }
  e.ci_lo = e.qbar - q * e.se_total;
  e.ci_hi = e.qbar + q * e.se_total;
  return e;
}

}  // namespace mdam
