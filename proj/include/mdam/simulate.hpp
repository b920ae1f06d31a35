#pragma once

// Repeated-sampling evaluation harness.  A probit-generated population with
// unit nonresponse, item nonresponse on one variable, and unequal base
// weights is sampled repeatedly by Poisson sampling; each sample is imputed
// by the margin-constrained sampler and by the no-margin comparison run, and
// pooled estimates are scored against the fixed population truth.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mdam/dataset.hpp"
#include "mdam/estimate.hpp"
#include "mdam/glm.hpp"
#include "mdam/margins.hpp"
#include "mdam/model_spec.hpp"
#include "mdam/rng.hpp"
#include "mdam/sampler.hpp"
#include "mdam/weights.hpp"

namespace mdam {

enum class WeightRegime { Design, Adjusted };

struct ScenarioConfig {
  int population_size = 133427;
  double nu0 = -1.2;                    // P(U=1) = Phi(nu0)
  double alpha0 = 0.3, alpha1 = -0.5;   // X2 | U
  double beta0 = 0.2, beta1 = 0.4, beta2 = -0.5;  // X1 | X2, U
  double gamma0 = -1.05, gamma1 = 0.2;  // item-nonresponse indicator | X2
  double weight_sigma = 0.5;            // lognormal spread of the base weights
  double target_sample_size = 2000.0;   // expected Poisson sample size
  int replicates = 100;
  WeightRegime regime = WeightRegime::Design;
  SamplerControls controls;             // per-replicate seeds are derived
  std::uint64_t seed = 0;
  std::string label = "a";
  int n_threads = 1;  // replicate-level workers; results do not depend on it

  void validate() const {
    for (double v : {nu0, alpha0, alpha1, beta0, beta1, beta2, gamma0, gamma1,
                     weight_sigma, target_sample_size})
      if (!std::isfinite(v)) throw ConfigError("scenario parameters must be finite");
    if (population_size < 2) throw ConfigError("population size too small");
    if (target_sample_size < 100.0)
      throw ConfigError("expected sample size must be at least 100");
    if (target_sample_size > population_size)
      throw ConfigError("expected sample size exceeds the population");
    if (replicates < 1) throw ConfigError("need at least one replicate");
    if (n_threads < 1) throw ConfigError("thread count must be at least one");
  }
};

// The 2x2x2 grid over (alpha1, beta1, beta2), labelled a..h.
inline std::vector<ScenarioConfig> scenario_grid(const ScenarioConfig& base) {
  std::vector<ScenarioConfig> out;
  const double a1s[] = {-0.5, -2.0}, b1s[] = {0.4, 2.0}, b2s[] = {-0.5, -2.0};
  char label = 'a';
  for (double a1 : a1s)
    for (double b1 : b1s)
      for (double b2 : b2s) {
        ScenarioConfig sc = base;
        sc.alpha1 = a1;
        sc.beta1 = b1;
        sc.beta2 = b2;
        sc.label = std::string(1, label++);
        out.push_back(sc);
      }
  return out;
}

struct Population {
  int n = 0;
  std::vector<std::uint8_t> u, x1, x2, r1;
  std::vector<double> base_weight, incl_prob, design_weight;
  double t_x1 = 0.0, t_x2 = 0.0;  // true counts
};

// Closed-form moments of the generator (standard-normal CDF compositions).
struct PopulationMoments {
  double p_u = 0.0;
  double p_x2_u0 = 0.0, p_x2_u1 = 0.0;
  double p_x1_u0 = 0.0, p_x1_u1 = 0.0;
  double p_x1 = 0.0, p_x2 = 0.0;
  double item_rate_resp = 0.0;  // P(indicator = 1 | U = 0)
};

inline PopulationMoments analytic_truth(const ScenarioConfig& sc) {
  PopulationMoments m;
  m.p_u = norm_cdf(sc.nu0);
  m.p_x2_u0 = norm_cdf(sc.alpha0);
  m.p_x2_u1 = norm_cdf(sc.alpha0 + sc.alpha1);
  m.p_x1_u0 = m.p_x2_u0 * norm_cdf(sc.beta0 + sc.beta1) +
              (1.0 - m.p_x2_u0) * norm_cdf(sc.beta0);
  m.p_x1_u1 = m.p_x2_u1 * norm_cdf(sc.beta0 + sc.beta1 + sc.beta2) +
              (1.0 - m.p_x2_u1) * norm_cdf(sc.beta0 + sc.beta2);
  m.p_x2 = (1.0 - m.p_u) * m.p_x2_u0 + m.p_u * m.p_x2_u1;
  m.p_x1 = (1.0 - m.p_u) * m.p_x1_u0 + m.p_u * m.p_x1_u1;
  m.item_rate_resp = m.p_x2_u0 * norm_cdf(sc.gamma0 + sc.gamma1) +
                     (1.0 - m.p_x2_u0) * norm_cdf(sc.gamma0);
  return m;
}

inline Population generate_population(const ScenarioConfig& sc, RngStream& rng) {
  Population p;
  p.n = sc.population_size;
  p.u.resize(p.n);
  p.x1.resize(p.n);
  p.x2.resize(p.n);
  p.r1.resize(p.n);
  for (int i = 0; i < p.n; ++i) {
    p.u[i] = rng.uniform() < norm_cdf(sc.nu0);
    p.x2[i] = rng.uniform() < norm_cdf(sc.alpha0 + sc.alpha1 * p.u[i]);
    p.x1[i] = rng.uniform() < norm_cdf(sc.beta0 + sc.beta1 * p.x2[i] + sc.beta2 * p.u[i]);
    p.r1[i] = rng.uniform() < norm_cdf(sc.gamma0 + sc.gamma1 * p.x2[i]);
    p.t_x1 += p.x1[i];
    p.t_x2 += p.x2[i];
  }
  return p;
}

// Base weights are lognormal; inclusion probabilities are inversely
// proportional to them, capped at one, with the constant calibrated by
// bisection so the expected sample size hits the target.
inline void generate_weights(const ScenarioConfig& sc, Population& p, RngStream& rng) {
  p.base_weight.resize(p.n);
  for (int i = 0; i < p.n; ++i) p.base_weight[i] = std::exp(sc.weight_sigma * rng.normal());
  auto expected = [&](double c) {
    double s = 0.0;
    for (int i = 0; i < p.n; ++i) s += std::min(1.0, c / p.base_weight[i]);
    return s;
  };
  double lo = 0.0, hi = 1.0;
  while (expected(hi) < sc.target_sample_size) {
    hi *= 2.0;
    if (hi > 1e12) throw RuntimeError("inclusion-probability calibration failed");
  }
  for (int it = 0; it < 100; ++it) {
    double mid = (lo + hi) / 2;
    (expected(mid) < sc.target_sample_size ? lo : hi) = mid;
  }
  double c = (lo + hi) / 2;
  if (std::abs(expected(c) - sc.target_sample_size) > 0.1)
    throw RuntimeError("inclusion-probability calibration did not reach the target");
  p.incl_prob.resize(p.n);
  p.design_weight.resize(p.n);
  for (int i = 0; i < p.n; ++i) {
    p.incl_prob[i] = std::min(1.0, c / p.base_weight[i]);
    p.design_weight[i] = 1.0 / p.incl_prob[i];
  }
}

// One Poisson sample, as the analyst sees it: unit nonrespondents fully
// blanked with unknown weight, item-missing cells blanked, design weights on
// respondents.  `pop_ix` keeps the population index per row so the harness
// can score against the truth.
struct SampleDraw {
  SurveyDataset ds;          // variables: X2 then X1
  std::vector<int> pop_ix;
};

inline SampleDraw poisson_sample(const Population& p, RngStream& rng) {
  if (p.incl_prob.empty()) throw ConfigError("population has no inclusion probabilities");
  SampleDraw s;
  s.ds.vars = {{"X2", {"0", "1"}, VarRole::MarginBacked},
               {"X1", {"0", "1"}, VarRole::MarginBacked}};
  s.ds.population_size = p.n;
  s.ds.weight_kind = WeightKind::Design;
  for (int i = 0; i < p.n; ++i) {
    if (rng.uniform() >= p.incl_prob[i]) continue;
    s.pop_ix.push_back(i);
    if (p.u[i]) {
      s.ds.cells.insert(s.ds.cells.end(), {kMissing, kMissing});
      s.ds.unit_nr.push_back(1);
      s.ds.weights.push_back(0.0);
    } else {
      s.ds.cells.push_back(p.x2[i]);
      s.ds.cells.push_back(p.r1[i] ? kMissing : static_cast<int>(p.x1[i]));
      s.ds.unit_nr.push_back(0);
      s.ds.weights.push_back(p.design_weight[i]);
    }
  }
  return s;
}

// ---- scenario results ----

struct MethodMetrics {
  double mean_estimate = 0.0;
  double empirical_sd = 0.0;   // SD of pooled estimates across replicates
  double avg_est_sd = 0.0;     // average sqrt(T)
  double avg_sd_between = 0.0; // average sqrt(b/L)
  double coverage_pct = 0.0;
};

struct EstimandRow {
  std::string name;
  double truth = 0.0;
  double pre_mean = 0.0, pre_sd = 0.0;  // pre-missing full-sample estimates
  MethodMetrics mdam, icin;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<EstimandRow> rows;
  int replicates_done = 0;
  int failures = 0;
  double mean_clamp_events = 0.0;  // per margin-constrained run
  long long ridge_events = 0;
};

namespace detail {

// Weighted logit fit -> per-coefficient point estimates with the inverse
// observed information diagonal as the within variance.
inline std::vector<PointEstimate> logit_params(const Eigen::MatrixXd& X,
                                               const std::vector<int>& y,
                                               const std::vector<double>& w) {
  FittedModel fit = fit_logit(X, y, w);
  std::vector<PointEstimate> out;
  for (int c = 0; c < fit.coef.size(); ++c) out.push_back({fit.coef[c], fit.cov(c, c)});
  return out;
}

struct ReplicateEstimates {
  std::vector<PointEstimate> values;  // one per estimand, fixed order
};

}  // namespace detail

// Estimand order: totals, conditional proportions, then the three model
// fits' coefficients (outcome scale is logit; truths are the corresponding
// population-level logit projections).
inline std::vector<std::string> estimand_names() {
  return {"T_X1",        "T_X2",        "P(X1=1|X2=0)", "P(X1=1|X2=1)",
          "P(X2=1|X1=0)", "P(X2=1|X1=1)", "alpha0",       "alpha1",
          "beta0",        "beta1",        "beta2",        "gamma0",
          "gamma1"};
}

namespace detail {

// All thirteen estimands from one completed dataset.  `r1_flags` marks the
// originally item-missing cells (the indicator the gamma model explains);
// `u_flags` the unit nonrespondents.
inline ReplicateEstimates completed_estimates(const SurveyDataset& d,
                                              const std::vector<std::uint8_t>& r1_flags,
                                              const std::vector<std::uint8_t>& u_flags) {
  ReplicateEstimates e;
  e.values.push_back(ht_total(d, "X1", 1));
  e.values.push_back(ht_total(d, "X2", 1));
  e.values.push_back(weighted_proportion(d, {{"X1", 1}}, {{"X2", 0}}));
  e.values.push_back(weighted_proportion(d, {{"X1", 1}}, {{"X2", 1}}));
  e.values.push_back(weighted_proportion(d, {{"X2", 1}}, {{"X1", 0}}));
  e.values.push_back(weighted_proportion(d, {{"X2", 1}}, {{"X1", 1}}));
  const int n = d.n();
  int jx2 = d.var_index("X2"), jx1 = d.var_index("X1");

  Eigen::MatrixXd Xa(n, 2);
  std::vector<int> ya(n);
  for (int i = 0; i < n; ++i) {
    Xa(i, 0) = 1.0;
    Xa(i, 1) = u_flags[i];
    ya[i] = d.cell(i, jx2);
  }
  for (auto pe : logit_params(Xa, ya, d.weights)) e.values.push_back(pe);

  Eigen::MatrixXd Xb(n, 3);
  std::vector<int> yb(n);
  for (int i = 0; i < n; ++i) {
    Xb(i, 0) = 1.0;
    Xb(i, 1) = d.cell(i, jx2);
    Xb(i, 2) = u_flags[i];
    yb[i] = d.cell(i, jx1);
  }
  for (auto pe : logit_params(Xb, yb, d.weights)) e.values.push_back(pe);

  int nr = 0;
  for (int i = 0; i < n; ++i) nr += !u_flags[i];
  Eigen::MatrixXd Xg(nr, 2);
  std::vector<int> yg(nr);
  std::vector<double> wg(nr);
  int r = 0;
  for (int i = 0; i < n; ++i) {
    if (u_flags[i]) continue;
    Xg(r, 0) = 1.0;
    Xg(r, 1) = d.cell(i, jx2);
    yg[r] = r1_flags[i];
    wg[r] = d.weights[i];
    ++r;
  }
  for (auto pe : logit_params(Xg, yg, wg)) e.values.push_back(pe);
  return e;
}

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace detail

inline ScenarioResult run_scenario(const ScenarioConfig& sc) {
  sc.validate();
  ScenarioResult res;
  res.config = sc;

  RngStream pop_rng(sc.seed, 0);
  Population pop = generate_population(sc, pop_rng);
  generate_weights(sc, pop, pop_rng);

  // Population truths.
  const auto names = estimand_names();
  const int n_est = static_cast<int>(names.size());
  std::vector<double> truth(n_est, 0.0);
  truth[0] = pop.t_x1;
  truth[1] = pop.t_x2;
  {
    double n11 = 0, n10 = 0, n01 = 0, n00 = 0;  // (x1, x2) counts
    for (int i = 0; i < pop.n; ++i) {
      if (pop.x1[i] && pop.x2[i]) ++n11;
      else if (pop.x1[i]) ++n10;
      else if (pop.x2[i]) ++n01;
      else ++n00;
    }
    truth[2] = detail::safe_ratio(n10, n10 + n00);
    truth[3] = detail::safe_ratio(n11, n11 + n01);
    truth[4] = detail::safe_ratio(n01, n01 + n00);
    truth[5] = detail::safe_ratio(n11, n11 + n10);
  }
  {
    // Logit projections of the generator at the population level.
    std::vector<double> ones(pop.n, 1.0);
    Eigen::MatrixXd Xa(pop.n, 2), Xb(pop.n, 3);
    std::vector<int> ya(pop.n), yb(pop.n);
    for (int i = 0; i < pop.n; ++i) {
      Xa(i, 0) = 1.0;
      Xa(i, 1) = pop.u[i];
      ya[i] = pop.x2[i];
      Xb(i, 0) = 1.0;
      Xb(i, 1) = pop.x2[i];
      Xb(i, 2) = pop.u[i];
      yb[i] = pop.x1[i];
    }
    auto pa = detail::logit_params(Xa, ya, ones);
    auto pb = detail::logit_params(Xb, yb, ones);
    int nr = 0;
    for (int i = 0; i < pop.n; ++i) nr += !pop.u[i];
    Eigen::MatrixXd Xg(nr, 2);
    std::vector<int> yg(nr);
    std::vector<double> wg(nr, 1.0);
    int r = 0;
    for (int i = 0; i < pop.n; ++i) {
      if (pop.u[i]) continue;
      Xg(r, 0) = 1.0;
      Xg(r, 1) = pop.x2[i];
      yg[r] = pop.r1[i];
      ++r;
    }
    auto pg = detail::logit_params(Xg, yg, wg);
    truth[6] = pa[0].value;
    truth[7] = pa[1].value;
    truth[8] = pb[0].value;
    truth[9] = pb[1].value;
    truth[10] = pb[2].value;
    truth[11] = pg[0].value;
    truth[12] = pg[1].value;
  }

  ModelSpec spec;
  spec.outcomes = {{"X2", {}}, {"X1", {{"X2"}, {}}}};
  spec.item_models = {{"X1", {{"X2"}, {}}}};

  // Per-replicate work writes only its own slot; every random stream is
  // derived from the replicate index, so the result is identical whatever the
  // thread count.
  struct RepResult {
    bool ok = false;
    std::vector<double> pre;
    std::vector<double> q[2], se_t[2], se_b[2];  // [0] margin-constrained, [1] no-margin
    std::vector<std::uint8_t> cover[2];
    long long clamp = 0, ridge = 0;
  };
  std::vector<RepResult> results(sc.replicates);

  auto run_replicate = [&](int rep) {
    RepResult& out = results[rep];
    out.pre.assign(n_est, 0.0);
    RngStream rep_rng(sc.seed, 1 + rep);
    try {
      SampleDraw s = poisson_sample(pop, rep_rng);
      const int n = s.ds.n();
      if (n < 50) throw RuntimeError("sample came back too small");

      // Pre-missing full-sample estimates from the true values.
      {
        double tw1 = 0, tw2 = 0, w11 = 0, w10 = 0, w01 = 0, w00 = 0;
        for (int r = 0; r < n; ++r) {
          int i = s.pop_ix[r];
          double w = pop.design_weight[i];
          tw1 += w * pop.x1[i];
          tw2 += w * pop.x2[i];
          (pop.x1[i] ? (pop.x2[i] ? w11 : w10) : (pop.x2[i] ? w01 : w00)) += w;
        }
        out.pre[0] = tw1;
        out.pre[1] = tw2;
        out.pre[2] = detail::safe_ratio(w10, w10 + w00);
        out.pre[3] = detail::safe_ratio(w11, w11 + w01);
        out.pre[4] = detail::safe_ratio(w01, w01 + w00);
        out.pre[5] = detail::safe_ratio(w11, w11 + w10);
        Eigen::MatrixXd Xa(n, 2), Xb(n, 3);
        std::vector<int> ya(n), yb(n);
        std::vector<double> w(n);
        for (int r = 0; r < n; ++r) {
          int i = s.pop_ix[r];
          w[r] = pop.design_weight[i];
          Xa(r, 0) = 1.0;
          Xa(r, 1) = pop.u[i];
          ya[r] = pop.x2[i];
          Xb(r, 0) = 1.0;
          Xb(r, 1) = pop.x2[i];
          Xb(r, 2) = pop.u[i];
          yb[r] = pop.x1[i];
        }
        auto pa = detail::logit_params(Xa, ya, w);
        auto pb = detail::logit_params(Xb, yb, w);
        int nr = 0;
        for (int r = 0; r < n; ++r) nr += !pop.u[s.pop_ix[r]];
        Eigen::MatrixXd Xg(nr, 2);
        std::vector<int> yg(nr);
        std::vector<double> wg(nr);
        int rr = 0;
        for (int r = 0; r < n; ++r) {
          int i = s.pop_ix[r];
          if (pop.u[i]) continue;
          Xg(rr, 0) = 1.0;
          Xg(rr, 1) = pop.x2[i];
          yg[rr] = pop.r1[i];
          wg[rr] = pop.design_weight[i];
          ++rr;
        }
        auto pg = detail::logit_params(Xg, yg, wg);
        out.pre[6] = pa[0].value;
        out.pre[7] = pa[1].value;
        out.pre[8] = pb[0].value;
        out.pre[9] = pb[1].value;
        out.pre[10] = pb[2].value;
        out.pre[11] = pg[0].value;
        out.pre[12] = pg[1].value;
      }

      // Analysis weights per regime.
      SurveyDataset analysis;
      if (sc.regime == WeightRegime::Design) {
        analysis = with_weights(s.ds, weights_from_design(s.ds, pop.n).weights,
                                WeightKind::Constructed);
      } else {
        std::vector<double> dw(n);
        std::vector<int> cls(n);
        for (int r = 0; r < n; ++r) {
          dw[r] = pop.design_weight[s.pop_ix[r]];
          cls[r] = pop.x1[s.pop_ix[r]];
        }
        auto adj = weighting_class_adjust(dw, cls, s.ds.unit_nr, 2);
        auto dsa = with_weights(s.ds, adj.weights, WeightKind::Adjusted);
        analysis = with_weights(dsa, weights_from_adjusted(dsa).weights,
                                WeightKind::Constructed);
      }

      // Margins: true totals with the sample-estimated constraint variance.
      std::vector<AuxMargin> margins;
      margins.push_back({"X2", {pop.t_x2},
                         {estimate_constraint_variance(analysis, "X2", rep_rng)[0]},
                         "population"});
      margins.push_back({"X1", {pop.t_x1},
                         {estimate_constraint_variance(analysis, "X1", rep_rng)[0]},
                         "population"});

      std::vector<std::uint8_t> r1_flags(n, 0);
      int jx1 = analysis.var_index("X1");
      for (int r = 0; r < n; ++r)
        r1_flags[r] = !analysis.unit_nr[r] && analysis.cell(r, jx1) == kMissing;

      for (int arm = 0; arm < 2; ++arm) {
        SamplerControls ctl = sc.controls;
        std::uint64_t st = sc.seed ^ (0x9e3779b97f4a7c15ULL * (2ull * rep + arm + 1));
        ctl.seed = splitmix64(st);
        ctl.seed_set = true;
        ctl.icin = arm == 1;
        auto mi = arm == 0 ? run_mdam(analysis, spec, margins, ctl)
                           : run_icin(analysis, spec, margins, ctl);
        if (arm == 0) out.clamp += mi.clamp_events;
        out.ridge += mi.ridge_events;

        std::vector<std::vector<PointEstimate>> per_est(n_est);
        for (const auto& d : mi.completed) {
          auto est = detail::completed_estimates(d, r1_flags, analysis.unit_nr);
          for (int q = 0; q < n_est; ++q) per_est[q].push_back(est.values[q]);
        }
        for (int q = 0; q < n_est; ++q) {
          MIEstimate mie = rubin_combine(per_est[q]);
          out.q[arm].push_back(mie.qbar);
          out.cover[arm].push_back(truth[q] >= mie.ci_lo && truth[q] <= mie.ci_hi);
          out.se_t[arm].push_back(mie.se_total);
          out.se_b[arm].push_back(mie.se_between);
        }
      }
      out.ok = true;
    } catch (const std::exception&) {
      out.ok = false;
    }
  };

  if (sc.n_threads <= 1) {
    for (int rep = 0; rep < sc.replicates; ++rep) run_replicate(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    int n_workers = std::min(sc.n_threads, sc.replicates);
    for (int t = 0; t < n_workers; ++t)
      pool.emplace_back([&] {
        for (int rep = next.fetch_add(1); rep < sc.replicates; rep = next.fetch_add(1))
          run_replicate(rep);
      });
    for (auto& th : pool) th.join();
  }

  // Deterministic reduction in replicate order.
  struct Acc {
    std::vector<double> qbars;
    double cover = 0.0, se_t = 0.0, se_b = 0.0;
  };
  std::vector<Acc> acc_mdam(n_est), acc_icin(n_est);
  std::vector<std::vector<double>> pre(n_est);
  long long clamp_total = 0;
  for (int rep = 0; rep < sc.replicates; ++rep) {
    const RepResult& rr = results[rep];
    if (!rr.ok) {
      ++res.failures;
      continue;
    }
    ++res.replicates_done;
    clamp_total += rr.clamp;
    res.ridge_events += rr.ridge;
    for (int q = 0; q < n_est; ++q) {
      pre[q].push_back(rr.pre[q]);
      for (int arm = 0; arm < 2; ++arm) {
        auto& acc = arm == 0 ? acc_mdam : acc_icin;
        acc[q].qbars.push_back(rr.q[arm][q]);
        acc[q].cover += rr.cover[arm][q];
        acc[q].se_t += rr.se_t[arm][q];
        acc[q].se_b += rr.se_b[arm][q];
      }
    }
  }

  if (res.replicates_done == 0 ||
      res.failures * 50 >= sc.replicates)  // >= 2% of replicates
    throw RuntimeError("too many replicate failures in scenario " + sc.label);

  auto summarize = [&](const std::vector<Acc>& acc, int q) {
    MethodMetrics m;
    const auto& a = acc[q];
    int r = static_cast<int>(a.qbars.size());
    for (double v : a.qbars) m.mean_estimate += v / r;
    double ss = 0.0;
    for (double v : a.qbars) ss += (v - m.mean_estimate) * (v - m.mean_estimate);
    m.empirical_sd = r > 1 ? std::sqrt(ss / (r - 1)) : 0.0;
    m.avg_est_sd = a.se_t / r;
    m.avg_sd_between = a.se_b / r;
    m.coverage_pct = 100.0 * a.cover / r;
    return m;
  };
  for (int q = 0; q < n_est; ++q) {
    EstimandRow row;
    row.name = names[q];
    row.truth = truth[q];
    int r = static_cast<int>(pre[q].size());
    for (double v : pre[q]) row.pre_mean += v / r;
    double ss = 0.0;
    for (double v : pre[q]) ss += (v - row.pre_mean) * (v - row.pre_mean);
    row.pre_sd = r > 1 ? std::sqrt(ss / (r - 1)) : 0.0;
    row.mdam = summarize(acc_mdam, q);
    row.icin = summarize(acc_icin, q);
    res.rows.push_back(row);
  }
  res.mean_clamp_events =
      res.replicates_done > 0 ? static_cast<double>(clamp_total) / res.replicates_done : 0.0;
  return res;
}

}  // namespace mdam
