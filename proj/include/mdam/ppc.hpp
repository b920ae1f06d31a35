#pragma once

// Posterior predictive checks.  Each retained parameter draw replicates a
// full dataset (every survey variable, the unit-nonresponse flag, and every
// item-nonresponse indicator); observed percentages among the real data's
// complete respondents are compared with the empirical 2.5/97.5 quantile
// band of the same percentages among replicated complete respondents.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mdam/dataset.hpp"
#include "mdam/model_spec.hpp"
#include "mdam/rng.hpp"
#include "mdam/sampler.hpp"

namespace mdam {

// One replicated record set.  `cells` is n x k with every level filled in;
// `item_missing` marks replicated item nonresponse per variable (always 0
// for variables without an item-nonresponse model).
struct ReplicatedData {
  int n = 0;
  int k = 0;
  std::vector<int> cells;
  std::vector<std::uint8_t> u;
  std::vector<std::uint8_t> item_missing;

  int cell(int i, int j) const { return cells[static_cast<std::size_t>(i) * k + j]; }
  bool complete_respondent(int i) const {
    if (u[i]) return false;
    for (int j = 0; j < k; ++j)
      if (item_missing[static_cast<std::size_t>(i) * k + j]) return false;
    return true;
  }
};

// Generate new values of every variable for n units from one parameter draw:
// the unit flag first, then each outcome in scan order (unit rows keep the
// draw's intercept offsets), then each item-nonresponse indicator, honouring
// the structural rules instead of the model on forced rows.
inline ReplicatedData replicate_dataset(const RetainedDraw& draw, const SurveyDataset& ds,
                                        const ModelSpec& spec, int n, RngStream& rng) {
  if (draw.outcome_coefs.size() != spec.outcomes.size() ||
      draw.outcome_offsets.size() != spec.outcomes.size() ||
      draw.item_coefs.size() != spec.item_models.size())
    throw ConfigError("parameter draw does not match the model specification");
  if (n <= 0) throw ConfigError("replicated size must be positive");

  ReplicatedData rep;
  rep.n = n;
  rep.k = ds.k();
  rep.cells.assign(static_cast<std::size_t>(n) * rep.k, 0);
  rep.u.assign(n, 0);
  rep.item_missing.assign(static_cast<std::size_t>(n) * rep.k, 0);

  for (int i = 0; i < n; ++i) rep.u[i] = rng.bernoulli(draw.u_prob) ? 1 : 0;

  std::vector<double> row;
  for (std::size_t m = 0; m < spec.outcomes.size(); ++m) {
    int j = ds.var_index(spec.outcomes[m].variable);
    int d = ds.vars[j].n_levels();
    DesignInfo info = design_info(ds.vars, spec.outcomes[m].terms);
    const Eigen::VectorXd& beta = draw.outcome_coefs[m];
    if (beta.size() != static_cast<Eigen::Index>(info.n_cols) * (d - 1))
      throw ConfigError("outcome coefficient draw has the wrong length");
    const std::vector<double>& offs = draw.outcome_offsets[m];
    row.resize(info.n_cols);
    std::array<double, 17> eta{};
    for (int i = 0; i < n; ++i) {
      fill_design_row(row.data(), info, &rep.cells[static_cast<std::size_t>(i) * rep.k]);
      eta[0] = 0.0;
      double mx = 0.0;
      for (int l = 1; l < d; ++l) {
        double e = 0.0;
        for (int c = 0; c < info.n_cols; ++c) e += beta[(l - 1) * info.n_cols + c] * row[c];
        if (rep.u[i] && static_cast<std::size_t>(l - 1) < offs.size()) e += offs[l - 1];
        eta[l] = e;
        mx = std::max(mx, e);
      }
      double total = 0.0;
      for (int l = 0; l < d; ++l) total += std::exp(eta[l] - mx);
      double target = rng.uniform() * total, cum = 0.0;
      int cell = d - 1;
      for (int l = 0; l < d; ++l) {
        cum += std::exp(eta[l] - mx);
        if (target < cum) {
          cell = l;
          break;
        }
      }
      rep.cells[static_cast<std::size_t>(i) * rep.k + j] = cell;
    }
  }

  for (std::size_t im = 0; im < spec.item_models.size(); ++im) {
    int j = ds.var_index(spec.item_models[im].variable);
    DesignInfo info = design_info(ds.vars, spec.item_models[im].terms);
    const Eigen::VectorXd& beta = draw.item_coefs[im];
    if (beta.size() != static_cast<Eigen::Index>(info.n_cols))
      throw ConfigError("item-nonresponse coefficient draw has the wrong length");
    std::vector<int> triggers;
    for (const auto& r : spec.rules)
      if (r.forced_variable == spec.item_models[im].variable)
        triggers.push_back(ds.var_index(r.trigger_variable));
    row.resize(info.n_cols);
    for (int i = 0; i < n; ++i) {
      bool forced = false;
      for (int t : triggers)
        forced = forced || rep.item_missing[static_cast<std::size_t>(i) * rep.k + t];
      if (forced) {
        rep.item_missing[static_cast<std::size_t>(i) * rep.k + j] = 1;
        continue;
      }
      fill_design_row(row.data(), info, &rep.cells[static_cast<std::size_t>(i) * rep.k]);
      double e = 0.0;
      for (int c = 0; c < info.n_cols; ++c) e += beta[c] * row[c];
      double p = 1.0 / (1.0 + std::exp(-e));
      rep.item_missing[static_cast<std::size_t>(i) * rep.k + j] = rng.bernoulli(p) ? 1 : 0;
    }
  }
  return rep;
}

// A checked quantity: the percentage of complete respondents with
// variable = level, optionally within the subgroup given_variable =
// given_level (empty given_variable means a marginal percentage).
struct PPCQuantity {
  std::string id;
  std::string variable;
  int level = 0;
  std::string given_variable;
  int given_level = -1;
};

// Every marginal percentage, plus the focal variable's distribution within
// each level of every other variable.
inline std::vector<PPCQuantity> default_quantities(const SurveyDataset& ds,
                                                   const std::string& focal_variable) {
  int jf = ds.var_index(focal_variable);
  std::vector<PPCQuantity> qs;
  for (int j = 0; j < ds.k(); ++j)
    for (int l = 0; l < ds.vars[j].n_levels(); ++l)
      qs.push_back({ds.vars[j].name + "=" + ds.vars[j].levels[l], ds.vars[j].name, l, "", -1});
  for (int j = 0; j < ds.k(); ++j) {
    if (j == jf) continue;
    for (int g = 0; g < ds.vars[j].n_levels(); ++g)
      for (int l = 0; l < ds.vars[jf].n_levels(); ++l)
        qs.push_back({focal_variable + "=" + ds.vars[jf].levels[l] + "|" + ds.vars[j].name +
                          "=" + ds.vars[j].levels[g],
                      focal_variable, l, ds.vars[j].name, g});
  }
  return qs;
}

struct PPCQuantityResult {
  std::string id;
  double observed = std::numeric_limits<double>::quiet_NaN();
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  bool contained = false;
  bool undefined = false;  // subgroup empty in > 5% of draws (or in the data)
  int empty_draws = 0;
};

struct PPCResult {
  std::vector<PPCQuantityResult> quantities;
  int n_draws = 0;
  double level = 0.95;
};

namespace detail {

// Median-unbiased empirical quantile (h = (n + 1/3) p + 1/3 on sorted values).
inline double quantile_type8(const std::vector<double>& sorted, double p) {
  int n = static_cast<int>(sorted.size());
  double h = (n + 1.0 / 3.0) * p + 1.0 / 3.0;
  if (h <= 1.0) return sorted.front();
  if (h >= n) return sorted.back();
  int i = static_cast<int>(std::floor(h));
  return sorted[i - 1] + (h - i) * (sorted[i] - sorted[i - 1]);
}

// Percentage of rows with variable=level among those with given=given_level
// (all rows when there is no conditioning variable).  Returns false when the
// subgroup is empty.
template <typename CellFn>
bool subgroup_percentage(const std::vector<int>& rows, CellFn cell, int jvar, int level,
                         int jgiven, int given_level, double* out) {
  int denom = 0, num = 0;
  for (int i : rows) {
    if (jgiven >= 0 && cell(i, jgiven) != given_level) continue;
    ++denom;
    num += cell(i, jvar) == level;
  }
  if (denom == 0) return false;
  *out = 100.0 * num / denom;
  return true;
}

}  // namespace detail

// Compare observed complete-respondent percentages to replicated-data
// intervals.  For each retained draw a dataset of the same size is
// replicated, restricted to its own complete respondents, and the quantity
// recomputed; the interval is the (1-level)/2 .. 1-(1-level)/2 empirical
// quantile band across draws.
inline PPCResult ppc_intervals(const std::vector<RetainedDraw>& draws, const SurveyDataset& ds,
                               const ModelSpec& spec, const std::vector<PPCQuantity>& quantities,
                               RngStream& rng, double level = 0.95) {
  if (draws.size() < 100)
    throw ConfigError("posterior predictive checks need at least 100 retained draws");
  if (level <= 0.0 || level >= 1.0) throw ConfigError("interval level must be in (0, 1)");
  if (quantities.empty()) throw ConfigError("no quantities to check");

  struct ResolvedQuantity {
    int jvar, level, jgiven, given_level;
  };
  std::vector<ResolvedQuantity> rq;
  for (const auto& q : quantities) {
    ResolvedQuantity r;
    r.jvar = ds.var_index(q.variable);
    r.level = q.level;
    if (q.level < 0 || q.level >= ds.vars[r.jvar].n_levels())
      throw ConfigError("quantity level out of range for " + q.variable);
    r.jgiven = q.given_variable.empty() ? -1 : ds.var_index(q.given_variable);
    r.given_level = q.given_level;
    if (r.jgiven >= 0 &&
        (q.given_level < 0 || q.given_level >= ds.vars[r.jgiven].n_levels()))
      throw ConfigError("conditioning level out of range for " + q.given_variable);
    rq.push_back(r);
  }

  std::vector<int> observed_rows;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.unit_nr[i]) continue;
    bool complete = true;
    for (int j = 0; j < ds.k(); ++j) complete = complete && ds.cell(i, j) != kMissing;
    if (complete) observed_rows.push_back(i);
  }

  PPCResult res;
  res.n_draws = static_cast<int>(draws.size());
  res.level = level;
  res.quantities.resize(quantities.size());
  std::vector<std::vector<double>> replicated(quantities.size());

  for (const auto& draw : draws) {
    ReplicatedData rep = replicate_dataset(draw, ds, spec, ds.n(), rng);
    std::vector<int> rep_rows;
    for (int i = 0; i < rep.n; ++i)
      if (rep.complete_respondent(i)) rep_rows.push_back(i);
    auto rep_cell = [&rep](int i, int j) { return rep.cell(i, j); };
    for (std::size_t q = 0; q < rq.size(); ++q) {
      double value = 0.0;
      if (detail::subgroup_percentage(rep_rows, rep_cell, rq[q].jvar, rq[q].level,
                                      rq[q].jgiven, rq[q].given_level, &value))
        replicated[q].push_back(value);
      else
        ++res.quantities[q].empty_draws;
    }
  }

  auto obs_cell = [&ds](int i, int j) { return ds.cell(i, j); };
  for (std::size_t q = 0; q < rq.size(); ++q) {
    auto& out = res.quantities[q];
    out.id = quantities[q].id;
    double obs = 0.0;
    bool have_obs = detail::subgroup_percentage(observed_rows, obs_cell, rq[q].jvar,
                                                rq[q].level, rq[q].jgiven,
                                                rq[q].given_level, &obs);
    if (have_obs) out.observed = obs;
    if (!have_obs || out.empty_draws > 0.05 * res.n_draws) {
      out.undefined = true;
      continue;
    }
    std::vector<double>& vals = replicated[q];
    std::sort(vals.begin(), vals.end());
    out.lower = detail::quantile_type8(vals, (1.0 - level) / 2.0);
    out.upper = detail::quantile_type8(vals, 1.0 - (1.0 - level) / 2.0);
    out.contained = out.observed >= out.lower && out.observed <= out.upper;
  }
  return res;
}

inline PPCResult ppc_intervals(const MultipleImputations& imps, const SurveyDataset& ds,
                               const ModelSpec& spec, const std::vector<PPCQuantity>& quantities,
                               RngStream& rng, double level = 0.95) {
  return ppc_intervals(imps.draws, ds, spec, quantities, rng, level);
}

}  // namespace mdam
