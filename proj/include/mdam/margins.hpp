#pragma once

// Auxiliary population margins and the machinery that ties imputations to
// them: drawing noisy margin targets, converting a drawn total into a count
// of nonrespondents to impute at each level, and solving for the intercept
// offset that makes a drawn coefficient vector reproduce that count in
// expectation over the nonrespondent covariates.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mdam/common.hpp"
#include "mdam/dataset.hpp"
#include "mdam/rng.hpp"

namespace mdam {

// Known totals for the non-baseline levels of one variable, with the
// uncertainty the imputations should reflect.  totals[l-1] is the population
// count at level l.
struct AuxMargin {
  std::string variable;
  std::vector<double> totals;
  std::vector<double> variances;
  std::string source;

  void validate(const VariableDef& v, double population_size) const {
    if (static_cast<int>(totals.size()) != v.n_levels() - 1 ||
        variances.size() != totals.size())
      throw ConfigError("margin for " + variable + " must cover the " +
                        std::to_string(v.n_levels() - 1) + " non-baseline levels");
    double sum = 0.0;
    for (double t : totals) {
      if (t < 0.0 || t > population_size)
        throw ConfigError("margin total for " + variable + " is outside [0, N]");
      sum += t;
    }
    if (sum > population_size)
      throw ConfigError("margin totals for " + variable + " exceed the population size");
    for (double s2 : variances)
      if (!(s2 >= 0.0)) throw ConfigError("margin variance for " + variable + " is negative");
  }
};

// Independent normal draws around each level's total.
inline std::vector<double> margin_draw(const AuxMargin& m, RngStream& rng) {
  std::vector<double> t(m.totals.size());
  for (std::size_t l = 0; l < t.size(); ++l)
    t[l] = rng.normal(m.totals[l], std::sqrt(m.variances[l]));
  return t;
}

// Constraint variance when no external value is given: complete the
// respondents' item-missing cells once by weighted hot deck, then take the
// with-replacement design variance of the Horvitz-Thompson level totals.
// Clamped below at (0.01 N)^2 so a tiny estimate cannot freeze the margin.
inline std::vector<double> estimate_constraint_variance(const SurveyDataset& ds,
                                                        const std::string& variable,
                                                        RngStream& rng) {
  int j = ds.var_index(variable);
  int d = ds.vars[j].n_levels();
  std::vector<int> donors;
  std::vector<double> donor_cum;
  double cum = 0.0;
  for (int i = 0; i < ds.n(); ++i) {
    if (!ds.unit_nr[i] && ds.cell(i, j) != kMissing) {
      donors.push_back(i);
      cum += ds.weights[i];
      donor_cum.push_back(cum);
    }
  }
  if (donors.empty())
    throw RuntimeError("no observed respondent values for margin variable " + variable);

  // Completed respondent values.
  std::vector<int> value;
  std::vector<double> wt;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.unit_nr[i]) continue;
    int v = ds.cell(i, j);
    if (v == kMissing) {
      double u = rng.uniform() * cum;
      auto it = std::lower_bound(donor_cum.begin(), donor_cum.end(), u);
      std::size_t pick = std::min(static_cast<std::size_t>(it - donor_cum.begin()),
                                  donors.size() - 1);
      v = ds.cell(donors[pick], j);
    }
    value.push_back(v);
    wt.push_back(ds.weights[i]);
  }
  int nr = static_cast<int>(value.size());
  if (nr < 2) throw RuntimeError("need at least two respondents to estimate margin variance");

  double floor_v = 0.01 * ds.population_size;
  floor_v *= floor_v;
  std::vector<double> out(d - 1);
  for (int l = 1; l < d; ++l) {
    double tot = 0.0;
    for (int i = 0; i < nr; ++i) tot += wt[i] * (value[i] == l);
    double mean = tot / nr;
    double ss = 0.0;
    for (int i = 0; i < nr; ++i) {
      double dlt = wt[i] * (value[i] == l) - mean;
      ss += dlt * dlt;
    }
    out[l - 1] = std::max(static_cast<double>(nr) / (nr - 1) * ss, floor_v);
  }
  return out;
}

struct TargetCount {
  int count = 0;
  bool clamped = false;  // hit 0 or n_U
};

// How many of the n_U unit nonrespondents should land at this level so the
// completed total tracks the drawn one: leftover mass over the average
// nonrespondent weight, floored and clamped into [0, n_U].
inline TargetCount target_count(double drawn_total, double respondent_total,
                                double mean_nr_weight, int n_u) {
  if (n_u <= 0) throw RuntimeError("target_count needs unit nonrespondents");
  if (mean_nr_weight <= 0.0) throw RuntimeError("mean nonrespondent weight must be positive");
  TargetCount t;
  double raw = std::floor((drawn_total - respondent_total) / mean_nr_weight);
  if (raw < 0.0) {
    t.count = 0;
    t.clamped = true;
  } else if (raw > n_u) {
    t.count = n_u;
    t.clamped = true;
  } else {
    t.count = static_cast<int>(raw);
  }
  return t;
}

struct TargetAllocation {
  std::vector<int> counts;  // one per level, including the baseline; sums to n_U
  bool clamped = false;
};

// Multi-level generalisation: apply the floor formula per non-baseline level
// and give the baseline the remainder.  If the non-baseline counts overflow
// n_U, rescale and repair with largest remainders.
inline TargetAllocation allocate_targets(const std::vector<double>& drawn_totals,
                                         const std::vector<double>& respondent_totals,
                                         double mean_nr_weight, int n_u) {
  int d1 = static_cast<int>(drawn_totals.size());
  TargetAllocation a;
  a.counts.assign(d1 + 1, 0);
  std::vector<double> raw(d1);
  int sum = 0;
  for (int l = 0; l < d1; ++l) {
    TargetCount t = target_count(drawn_totals[l], respondent_totals[l], mean_nr_weight, n_u);
    a.counts[l + 1] = t.count;
    a.clamped = a.clamped || t.clamped;
    raw[l] = std::max((drawn_totals[l] - respondent_totals[l]) / mean_nr_weight, 0.0);
    sum += t.count;
  }
  if (sum <= n_u) {
    a.counts[0] = n_u - sum;
    return a;
  }
  // Overflow: scale the positive raw shares to sum to n_U, floor, then hand
  // out the shortfall by largest fractional remainder.
  a.clamped = true;
  double raw_sum = 0.0;
  for (double r : raw) raw_sum += r;
  std::vector<double> scaled(d1), frac(d1);
  int assigned = 0;
  for (int l = 0; l < d1; ++l) {
    scaled[l] = raw[l] * n_u / raw_sum;
    a.counts[l + 1] = static_cast<int>(std::floor(scaled[l]));
    frac[l] = scaled[l] - a.counts[l + 1];
    assigned += a.counts[l + 1];
  }
  std::vector<int> order(d1);
  for (int l = 0; l < d1; ++l) order[l] = l;
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return frac[x] > frac[y]; });
  for (int r = 0; r < n_u - assigned; ++r) ++a.counts[order[r % d1] + 1];
  a.counts[0] = 0;
  return a;
}

// Keep an imputation probability strictly inside (0, 1) at the resolution the
// nonrespondent pool can express.
inline double clamp_probability(double p, int n_u) {
  return clamp(p, 0.5 / n_u, 1.0 - 0.5 / n_u);
}

// Bernoulli case: closed form.  `eta` holds the drawn linear predictor for
// each unit nonrespondent.
inline double solve_bernoulli_offset(const std::vector<double>& eta, double p_hat) {
  if (eta.empty()) throw RuntimeError("offset solve needs nonrespondent rows");
  if (p_hat <= 0.0 || p_hat >= 1.0) throw RuntimeError("offset target must be in (0,1)");
  double mean_eta = 0.0;
  for (double e : eta) mean_eta += e;
  mean_eta /= eta.size();
  return logit(p_hat) - mean_eta;
}

// Multinomial case: Newton solve for the d-1 level offsets so the average
// predicted probability of each non-baseline level matches its target share.
// eta(i, c) is the drawn linear predictor of level c+1 for nonrespondent i.
inline std::vector<double> solve_multinomial_offsets(const Eigen::MatrixXd& eta,
                                                     const std::vector<double>& targets,
                                                     int max_iter = 50, double tol = 1e-8) {
  const int m = static_cast<int>(eta.rows());
  const int d1 = static_cast<int>(eta.cols());
  if (m == 0) throw RuntimeError("offset solve needs nonrespondent rows");
  if (static_cast<int>(targets.size()) != d1)
    throw ConfigError("offset targets do not match the number of levels");
  double tsum = 0.0;
  for (double q : targets) {
    if (q <= 0.0) throw RuntimeError("offset targets must be positive");
    tsum += q;
  }
  if (tsum >= 1.0) throw RuntimeError("offset targets must leave room for the baseline");

  Eigen::VectorXd delta = Eigen::VectorXd::Zero(d1);
  Eigen::MatrixXd P(m, d1);
  Eigen::VectorXd F(d1);
  Eigen::MatrixXd J(d1, d1);
  // One extra pass so a solve that lands on the last allowed update still
  // gets its convergence check.
  for (int it = 0; it <= max_iter; ++it) {
    // Mean predicted probabilities and their Jacobian in the offsets.
    F.setZero();
    J.setZero();
    for (int i = 0; i < m; ++i) {
      double mx = 0.0;
      for (int c = 0; c < d1; ++c) mx = std::max(mx, eta(i, c) + delta[c]);
      double denom = std::exp(-mx);
      for (int c = 0; c < d1; ++c) {
        P(i, c) = std::exp(eta(i, c) + delta[c] - mx);
        denom += P(i, c);
      }
      for (int c = 0; c < d1; ++c) {
        P(i, c) /= denom;
        F[c] += P(i, c) / m;
      }
      for (int c = 0; c < d1; ++c)
        for (int c2 = 0; c2 < d1; ++c2)
          J(c, c2) += P(i, c) * ((c == c2 ? 1.0 : 0.0) - P(i, c2)) / m;
    }
    Eigen::VectorXd resid = F;
    for (int c = 0; c < d1; ++c) resid[c] -= targets[c];
    if (resid.lpNorm<Eigen::Infinity>() <= tol) {
      std::vector<double> out(d1);
      for (int c = 0; c < d1; ++c) out[c] = delta[c];
      return out;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(J);
    if (ldlt.info() != Eigen::Success)
      throw RuntimeError("offset solve hit a singular Jacobian");
    delta -= ldlt.solve(resid);
  }
  throw RuntimeError("offset solve did not converge");
}

}  // namespace mdam
