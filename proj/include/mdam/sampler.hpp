#pragma once

// The Gibbs sampler that produces multiple imputations.  Each full scan:
//   (i/ii) for each outcome model in scan order: fit it on the respondents'
//          current completed data, draw coefficients, and (margin-backed
//          variables only) draw a noisy margin target, convert it into level
//          counts for the unit nonrespondents, solve for intercept offsets,
//          and redraw the unit nonrespondents' cells;
//   (iii)  refit and redraw every item-nonresponse model;
//   (iv)   redraw each respondent's item-missing cells from their exact full
//          conditionals (own outcome model times every model that references
//          the variable);
//   (v)    optional reporting-error updates (error rates and latent values).
//
// ICIN mode runs the same scan with every margin step and offset disabled:
// unit nonrespondents are drawn straight from the respondent-fitted models.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mdam/dataset.hpp"
#include "mdam/glm.hpp"
#include "mdam/margins.hpp"
#include "mdam/model_spec.hpp"
#include "mdam/rng.hpp"

namespace mdam {

// Everything needed to reproduce one retained state: the completed data are
// stored separately, these are the parameter draws (used by the replication
// checks).
struct RetainedDraw {
  int iteration = 0;
  std::vector<Eigen::VectorXd> outcome_coefs;        // per outcome model
  std::vector<std::vector<double>> outcome_offsets;  // per model, per non-baseline level
  std::vector<Eigen::VectorXd> item_coefs;           // per item model
  double u_prob = 0.0;                               // P(unit nonresponse) draw
  std::vector<double> theta;                         // reporting-error rates
};

struct IterationDiagnostics {
  int iteration = 0;
  std::vector<double> margin_draws;      // per margin-backed model, per level
  std::vector<int> target_counts;        // same layout
  std::vector<double> offsets;           // same layout
  std::vector<double> completed_totals;  // weighted totals after the scan
  int clamp_events = 0;
};

struct MultipleImputations {
  std::vector<SurveyDataset> completed;
  std::vector<RetainedDraw> draws;
  std::vector<IterationDiagnostics> diagnostics;
  SamplerControls controls;
  bool icin = false;
  long long clamp_events = 0;
  long long ridge_events = 0;
};

class Sampler {
 public:
  static constexpr int kMaxCols = 64;

  struct OutcomeState {
    int var = 0;
    int d = 2;
    DesignInfo info;
    int margin_ix = -1;  // index into margins_, or -1 for margin-free
    FittedModel fit;
    Eigen::VectorXd draw;
    std::vector<double> offsets;  // per non-baseline level; empty/zero without margin
    bool have_fit = false;
  };
  struct ItemState {
    int var = 0;
    int d = 2;
    DesignInfo info;
    std::vector<int> trigger_vars;  // R of these forces this indicator to 1
    FittedModel fit;
    Eigen::VectorXd draw;
    bool have_fit = false;
  };

  Sampler(const SurveyDataset& ds, const ModelSpec& spec,
          const std::vector<AuxMargin>& margins, const SamplerControls& controls)
      : ds_(ds), spec_(spec), controls_(controls), rng_(controls.seed, 0) {
    controls_.validate();
    ds_.validate();
    spec_.validate(ds_, margins);
    if (controls_.measurement_error && !spec_.measurement_error)
      throw ConfigError("measurement-error updates requested but the spec has no error block");
    n_ = ds_.n();
    k_ = ds_.k();

    for (int i = 0; i < n_; ++i)
      (ds_.unit_nr[i] ? unit_rows_ : resp_rows_).push_back(i);
    if (!unit_rows_.empty() && !controls_.icin) {
      for (int i : unit_rows_)
        if (ds_.weights[i] <= 0.0)
          throw ConfigError(
              "unit nonrespondents need constructed analysis weights; "
              "run a weight regime first");
    }

    // Per-model bookkeeping.
    margins_ = margins;
    models_.resize(spec_.outcomes.size());
    for (std::size_t m = 0; m < spec_.outcomes.size(); ++m) {
      auto& st = models_[m];
      st.var = ds_.var_index(spec_.outcomes[m].variable);
      st.info = design_info(ds_.vars, spec_.outcomes[m].terms);
      st.d = ds_.vars[st.var].n_levels();
      if (st.info.n_cols > kMaxCols) throw ConfigError("outcome model is too wide");
      if (st.d > 16) throw ConfigError("variables with more than 16 levels are unsupported");
      st.margin_ix = -1;
      for (std::size_t g = 0; g < margins_.size(); ++g)
        if (margins_[g].variable == spec_.outcomes[m].variable)
          st.margin_ix = static_cast<int>(g);
    }
    item_states_.resize(spec_.item_models.size());
    for (std::size_t im = 0; im < spec_.item_models.size(); ++im) {
      auto& st = item_states_[im];
      st.var = ds_.var_index(spec_.item_models[im].variable);
      st.info = design_info(ds_.vars, spec_.item_models[im].terms);
      st.d = 2;
      if (st.info.n_cols > kMaxCols) throw ConfigError("item model is too wide");
    }
    // Structural rules: triggers per forced item model.
    for (const auto& rule : rules_for(spec_)) {
      int forced = item_index(rule.second);
      item_states_[forced].trigger_vars.push_back(ds_.var_index(rule.first));
    }

    // Which models reference each variable as a predictor (for the item-cell
    // full conditionals).
    outcome_deps_.resize(k_);
    item_deps_.resize(k_);
    for (std::size_t m = 0; m < models_.size(); ++m)
      for (int j : referenced_vars(models_[m].info))
        outcome_deps_[j].push_back(static_cast<int>(m));
    for (std::size_t im = 0; im < item_states_.size(); ++im)
      for (int j : referenced_vars(item_states_[im].info))
        item_deps_[j].push_back(static_cast<int>(im));

    init_state();
  }

  // One full scan; advances the iteration counter.
  void step() {
    ++iteration_;
    cur_diag_ = IterationDiagnostics{};
    cur_diag_.iteration = iteration_;
    for (std::size_t m = 0; m < models_.size(); ++m) update_outcome(static_cast<int>(m));
    update_u_model();
    for (std::size_t im = 0; im < item_states_.size(); ++im)
      update_item_model(static_cast<int>(im));
    for (std::size_t m = 0; m < models_.size(); ++m)
      draw_item_missing(static_cast<int>(m));
    if (me_active()) update_measurement_error();
    if (controls_.keep_diagnostics) {
      for (const auto& st : models_) {
        if (st.margin_ix < 0) continue;
        for (int l = 1; l < st.d; ++l) {
          double tot = 0.0;
          for (int i = 0; i < n_; ++i) tot += ds_.weights[i] * (work(i, st.var) == l);
          cur_diag_.completed_totals.push_back(tot);
        }
      }
    }
  }

  MultipleImputations run() {
    MultipleImputations out;
    out.controls = controls_;
    out.icin = controls_.icin;
    for (int t = 1; t <= controls_.iterations; ++t) {
      step();
      if (t > controls_.burnin && (t - controls_.burnin) % controls_.thin == 0) retain(out);
      if (controls_.keep_diagnostics) out.diagnostics.push_back(cur_diag_);
    }
    out.clamp_events = clamp_events_;
    out.ridge_events = ridge_events_;
    return out;
  }

  // --- introspection (used by the test suite and replication checks) ---

  int iteration() const { return iteration_; }
  const std::vector<int>& working_cells() const { return work_; }
  long long clamp_events() const { return clamp_events_; }

  // Full-conditional probabilities for one item-missing cell, exactly as the
  // scan samples it.
  std::vector<double> item_conditional(int var, int row) const {
    int m = model_index(var);
    const auto& st = models_[m];
    std::vector<int> cells(work_.begin() + static_cast<std::size_t>(row) * k_,
                           work_.begin() + static_cast<std::size_t>(row + 1) * k_);
    std::vector<double> lp(st.d);
    for (int level = 0; level < st.d; ++level) {
      cells[var] = level;
      double v = outcome_logprob(m, cells.data(), level);
      for (int dep : outcome_deps_[var])
        v += outcome_logprob(dep, cells.data(), cells[models_[dep].var]);
      for (int dep : item_deps_[var]) {
        if (item_row_forced(dep, row)) continue;
        v += item_logprob(dep, cells.data(), r_(row, item_states_[dep].var));
      }
      lp[level] = v;
    }
    double lse = logsumexp(lp);
    for (auto& v : lp) v = std::exp(v - lse);
    return lp;
  }

  double current_theta(int c) const { return theta_.at(c); }
  const RetainedDraw& last_draw() const { return last_draw_; }
  int n_outcomes() const { return static_cast<int>(models_.size()); }
  int n_items() const { return static_cast<int>(item_states_.size()); }
  const OutcomeState& outcome_state(int m) const { return models_[m]; }
  const ItemState& item_state(int im) const { return item_states_[im]; }
  bool row_item_missing(int i, int j) const { return r_(i, j) != 0; }
  const std::vector<int>& resp_rows() const { return resp_rows_; }
  const std::vector<int>& unit_rows() const { return unit_rows_; }

 private:
  // --- small helpers ---

  int work(int i, int j) const { return work_[static_cast<std::size_t>(i) * k_ + j]; }
  int& work(int i, int j) { return work_[static_cast<std::size_t>(i) * k_ + j]; }
  std::uint8_t r_(int i, int j) const { return rmat_[static_cast<std::size_t>(i) * k_ + j]; }

  static std::vector<std::pair<std::string, std::string>> rules_for(const ModelSpec& s) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& r : s.rules) out.emplace_back(r.trigger_variable, r.forced_variable);
    return out;
  }

  int model_index(int var) const {
    for (std::size_t m = 0; m < models_.size(); ++m)
      if (models_[m].var == var) return static_cast<int>(m);
    throw RuntimeError("no outcome model for variable index " + std::to_string(var));
  }

  int item_index(const std::string& name) const {
    for (std::size_t im = 0; im < spec_.item_models.size(); ++im)
      if (spec_.item_models[im].variable == name) return static_cast<int>(im);
    throw ConfigError("no item model for " + name);
  }

  static std::vector<int> referenced_vars(const DesignInfo& info) {
    std::vector<int> out = info.main_vars;
    for (auto [a, b] : info.inter_vars) {
      out.push_back(a);
      out.push_back(b);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool me_active() const { return controls_.measurement_error && spec_.measurement_error; }

  // Is this row's indicator forced to 1 by a structural rule?
  bool item_row_forced(int im, int row) const {
    for (int jt : item_states_[im].trigger_vars)
      if (r_(row, jt)) return true;
    return false;
  }

  // log p(variable of model m = level | covariates) under the current draw,
  // without offsets.
  double outcome_logprob(int m, const int* cells, int level) const {
    const auto& st = models_[m];
    std::array<double, kMaxCols> x;
    fill_design_row(x.data(), st.info, cells);
    int p = st.info.n_cols;
    if (st.d == 2) {
      double eta = 0.0;
      for (int c = 0; c < p; ++c) eta += x[c] * st.draw[c];
      return level == 1 ? eta - log1pexp(eta) : -log1pexp(eta);
    }
    std::array<double, 16> eta;
    eta[0] = 0.0;
    for (int lv = 1; lv < st.d; ++lv) {
      double e = 0.0;
      for (int c = 0; c < p; ++c) e += x[c] * st.draw[(lv - 1) * p + c];
      eta[lv] = e;
    }
    double mx = 0.0;
    for (int lv = 1; lv < st.d; ++lv) mx = std::max(mx, eta[lv]);
    double denom = 0.0;
    for (int lv = 0; lv < st.d; ++lv) denom += std::exp(eta[lv] - mx);
    return eta[level] - mx - std::log(denom);
  }

  // log p(R = rv | covariates) for item model im under the current draw.
  double item_logprob(int im, const int* cells, int rv) const {
    const auto& st = item_states_[im];
    std::array<double, kMaxCols> x;
    fill_design_row(x.data(), st.info, cells);
    double eta = 0.0;
    for (int c = 0; c < st.info.n_cols; ++c) eta += x[c] * st.draw[c];
    return rv == 1 ? eta - log1pexp(eta) : -log1pexp(eta);
  }

  // Level probabilities for a unit nonrespondent under model m's draw plus
  // its current offsets.
  void unit_probs(int m, const int* cells, std::vector<double>& probs) const {
    const auto& st = models_[m];
    std::array<double, kMaxCols> x;
    fill_design_row(x.data(), st.info, cells);
    int p = st.info.n_cols;
    probs.assign(st.d, 0.0);
    if (st.d == 2) {
      double eta = 0.0;
      for (int c = 0; c < p; ++c) eta += x[c] * st.draw[c];
      if (!st.offsets.empty()) eta += st.offsets[0];
      probs[1] = inv_logit(eta);
      probs[0] = 1.0 - probs[1];
      return;
    }
    double mx = 0.0;
    std::array<double, 16> eta;
    eta[0] = 0.0;
    for (int lv = 1; lv < st.d; ++lv) {
      double e = 0.0;
      for (int c = 0; c < p; ++c) e += x[c] * st.draw[(lv - 1) * p + c];
      if (!st.offsets.empty()) e += st.offsets[lv - 1];
      eta[lv] = e;
      mx = std::max(mx, e);
    }
    double denom = 0.0;
    for (int lv = 0; lv < st.d; ++lv) {
      probs[lv] = std::exp(eta[lv] - mx);
      denom += probs[lv];
    }
    for (auto& q : probs) q /= denom;
  }

  // Rows an outcome model is fit on: respondents, except that the
  // reporting-error variable is fit only on rows whose report is direct.
  const std::vector<int>& outcome_fit_rows(int m) const {
    if (me_active() && models_[m].var == me_var_) return me_rows_;
    return resp_rows_;
  }

  void fit_outcome(int m) {
    auto& st = models_[m];
    const auto& rows = outcome_fit_rows(m);
    Eigen::MatrixXd X = expand_design(st.info, work_, k_, rows);
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = work(rows[i], st.var);
    std::vector<double> w(rows.size(), 1.0);
    const Eigen::VectorXd* init = st.have_fit ? &st.fit.coef : nullptr;
    st.fit = st.d == 2 ? fit_logit(X, y, w, {}, init)
                       : fit_multinomial(X, y, st.d, w, {}, init);
    st.have_fit = true;
    ridge_events_ += st.fit.ridge_used;
  }

  void fit_item(int im) {
    auto& st = item_states_[im];
    std::vector<int> rows;
    rows.reserve(resp_rows_.size());
    for (int i : resp_rows_)
      if (!item_row_forced(im, i)) rows.push_back(i);
    if (rows.empty()) throw RuntimeError("item model has no unforced rows to fit");
    Eigen::MatrixXd X = expand_design(st.info, work_, k_, rows);
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = r_(rows[i], st.var);
    std::vector<double> w(rows.size(), 1.0);
    const Eigen::VectorXd* init = st.have_fit ? &st.fit.coef : nullptr;
    st.fit = fit_logit(X, y, w, {}, init);
    st.have_fit = true;
    ridge_events_ += st.fit.ridge_used;
  }

  // --- the scan pieces ---

  void update_outcome(int m) {
    auto& st = models_[m];
    fit_outcome(m);
    st.draw = draw_coefficients(st.fit, rng_);

    int n_u = static_cast<int>(unit_rows_.size());
    bool margin_step = st.margin_ix >= 0 && !controls_.icin && n_u > 0;
    st.offsets.assign(st.d - 1, 0.0);

    if (margin_step) {
      auto drawn = margin_draw(margins_[st.margin_ix], rng_);
      // Current respondent totals per non-baseline level.
      std::vector<double> resp_tot(st.d - 1, 0.0);
      for (int i : resp_rows_)
        if (work(i, st.var) > 0) resp_tot[work(i, st.var) - 1] += ds_.weights[i];
      double wbar = 0.0;
      for (int i : unit_rows_) wbar += ds_.weights[i];
      wbar /= n_u;

      auto alloc = allocate_targets(drawn, resp_tot, wbar, n_u);
      if (alloc.clamped) {
        ++clamp_events_;
        ++cur_diag_.clamp_events;
      }

      // Target shares, kept expressible and leaving room for the baseline.
      std::vector<double> q(st.d - 1);
      double qsum = 0.0;
      for (int l = 0; l < st.d - 1; ++l) {
        double p_raw = static_cast<double>(alloc.counts[l + 1]) / n_u;
        q[l] = clamp_probability(p_raw, n_u);
        if (q[l] != p_raw) {
          ++clamp_events_;
          ++cur_diag_.clamp_events;
        }
        qsum += q[l];
      }
      double cap = 1.0 - 0.5 / n_u;
      if (qsum > cap) {
        for (auto& v : q) v *= cap / qsum;
        ++clamp_events_;
        ++cur_diag_.clamp_events;
      }

      // Drawn linear predictors over the unit nonrespondents, then offsets.
      if (st.d == 2) {
        std::vector<double> eta(n_u);
        std::array<double, kMaxCols> x;
        for (int uix = 0; uix < n_u; ++uix) {
          fill_design_row(x.data(), st.info, &work_[static_cast<std::size_t>(unit_rows_[uix]) * k_]);
          double e = 0.0;
          for (int c = 0; c < st.info.n_cols; ++c) e += x[c] * st.draw[c];
          eta[uix] = e;
        }
        st.offsets[0] = solve_bernoulli_offset(eta, q[0]);
      } else {
        Eigen::MatrixXd eta(n_u, st.d - 1);
        std::array<double, kMaxCols> x;
        int p = st.info.n_cols;
        for (int uix = 0; uix < n_u; ++uix) {
          fill_design_row(x.data(), st.info, &work_[static_cast<std::size_t>(unit_rows_[uix]) * k_]);
          for (int lv = 1; lv < st.d; ++lv) {
            double e = 0.0;
            for (int c = 0; c < p; ++c) e += x[c] * st.draw[(lv - 1) * p + c];
            eta(uix, lv - 1) = e;
          }
        }
        st.offsets = solve_multinomial_offsets(eta, q);
      }

      if (controls_.keep_diagnostics) {
        for (int l = 0; l < st.d - 1; ++l) {
          cur_diag_.margin_draws.push_back(drawn[l]);
          cur_diag_.target_counts.push_back(alloc.counts[l + 1]);
          cur_diag_.offsets.push_back(st.offsets[l]);
        }
      }
    }

    // Redraw the unit nonrespondents' cells (no offsets outside margin steps).
    std::vector<double> probs;
    for (int i : unit_rows_) {
      unit_probs(m, &work_[static_cast<std::size_t>(i) * k_], probs);
      work(i, st.var) = st.d == 2 ? (rng_.uniform() < probs[1] ? 1 : 0)
                                  : rng_.categorical(probs);
    }
  }

  void update_u_model() {
    // Intercept-only unit-nonresponse probability, kept for replication.
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(n_, 1);
    std::vector<int> y(unit_flags_.begin(), unit_flags_.end());
    std::vector<double> w(n_, 1.0);
    const Eigen::VectorXd* init = have_u_fit_ ? &u_fit_.coef : nullptr;
    u_fit_ = fit_logit(X, y, w, {}, init);
    have_u_fit_ = true;
    u_prob_ = inv_logit(draw_coefficients(u_fit_, rng_)[0]);
  }

  void update_item_model(int im) {
    auto& st = item_states_[im];
    fit_item(im);
    st.draw = draw_coefficients(st.fit, rng_);
  }

  void draw_item_missing(int m) {
    int var = models_[m].var;
    for (int i : item_rows_[var]) {
      auto probs = item_conditional(var, i);
      work(i, var) = static_cast<int>(probs.size()) == 2
                         ? (rng_.uniform() < probs[1] ? 1 : 0)
                         : rng_.categorical(probs);
    }
  }

  void update_measurement_error() {
    const auto& me = *spec_.measurement_error;
    int jc = ds_.var_index(me.stratum_variable);
    int d = ds_.vars[jc].n_levels();
    // Error-rate posteriors from current latent values.
    std::vector<double> a(me.prior_a), b(me.prior_b);
    for (int i : me_rows_) {
      if (work(i, me_var_) != 0) continue;  // counts condition on true 0
      int c = work(i, jc);
      if (z_[i] == 1) a[c] += 1.0; else b[c] += 1.0;
    }
    theta_.resize(d);
    for (int c = 0; c < d; ++c) theta_[c] = rng_.beta(a[c], b[c]);

    // Latent truths: a 0-report pins the truth at 0; a 1-report mixes the
    // outcome model against the error rate.  The latent variable is never its
    // own predictor, so the design row is safe to evaluate as-is.
    int m = model_index(me_var_);
    for (int i : me_rows_) {
      if (z_[i] == 0) {
        work(i, me_var_) = 0;
        continue;
      }
      double pi1 = std::exp(outcome_logprob(m, &work_[static_cast<std::size_t>(i) * k_], 1));
      double c_theta = theta_[work(i, jc)];
      double p1 = pi1 / (pi1 + c_theta * (1.0 - pi1));
      work(i, me_var_) = rng_.uniform() < p1 ? 1 : 0;
    }
  }

  void retain(MultipleImputations& out) {
    SurveyDataset snap = ds_;
    snap.cells = work_;
    snap.weight_kind = ds_.weight_kind;
    out.completed.push_back(std::move(snap));

    RetainedDraw rd;
    rd.iteration = iteration_;
    for (const auto& st : models_) {
      rd.outcome_coefs.push_back(st.draw);
      rd.outcome_offsets.push_back(st.offsets);
    }
    for (const auto& st : item_states_) rd.item_coefs.push_back(st.draw);
    rd.u_prob = u_prob_;
    rd.theta = theta_;
    last_draw_ = rd;
    out.draws.push_back(std::move(rd));
  }

  // --- initialisation ---

  void init_state() {
    work_ = ds_.cells;
    rmat_.assign(static_cast<std::size_t>(n_) * k_, 0);
    item_rows_.assign(k_, {});
    unit_flags_.assign(n_, 0);
    for (int i = 0; i < n_; ++i) unit_flags_[i] = ds_.unit_nr[i];
    for (int i : resp_rows_)
      for (int j = 0; j < k_; ++j)
        if (ds_.cell(i, j) == kMissing) {
          rmat_[static_cast<std::size_t>(i) * k_ + j] = 1;
          item_rows_[j].push_back(i);
        }

    if (me_active()) {
      me_var_ = ds_.var_index(spec_.measurement_error->variable);
      z_.assign(n_, kMissing);
      for (int i : resp_rows_)
        if (!r_(i, me_var_)) {
          z_[i] = ds_.cell(i, me_var_);
          me_rows_.push_back(i);
        }
      int d = ds_.vars[ds_.var_index(spec_.measurement_error->stratum_variable)].n_levels();
      theta_.resize(d);
      for (int c = 0; c < d; ++c)
        theta_[c] = spec_.measurement_error->prior_a[c] /
                    (spec_.measurement_error->prior_a[c] + spec_.measurement_error->prior_b[c]);
    }

    // Hot-deck starting values for item-missing cells, matched on the
    // recipient's observed earlier-ordered variables (progressively relaxed).
    for (const auto& st : models_) hot_deck_fill(st.var);

    // Starting values for unit nonrespondents: sequential draws from the
    // respondent MLEs, no coefficient noise, no offsets.
    for (std::size_t m = 0; m < models_.size(); ++m) {
      auto& st = models_[m];
      fit_outcome(static_cast<int>(m));
      st.draw = st.fit.coef;
      st.offsets.assign(st.d - 1, 0.0);
      std::vector<double> probs;
      for (int i : unit_rows_) {
        unit_probs(static_cast<int>(m), &work_[static_cast<std::size_t>(i) * k_], probs);
        work(i, st.var) = st.d == 2 ? (rng_.uniform() < probs[1] ? 1 : 0)
                                    : rng_.categorical(probs);
      }
    }
    for (std::size_t im = 0; im < item_states_.size(); ++im) {
      fit_item(static_cast<int>(im));
      item_states_[im].draw = item_states_[im].fit.coef;
    }
  }

  // Earlier-ordered variables for matching: everything before `var` in the
  // scan order.
  std::vector<int> earlier_vars(int var) const {
    std::vector<int> out;
    for (const auto& st : models_) {
      if (st.var == var) break;
      out.push_back(st.var);
    }
    return out;
  }

  void hot_deck_fill(int var) {
    if (item_rows_[var].empty()) return;
    std::vector<int> donors;
    for (int i : resp_rows_)
      if (!r_(i, var)) donors.push_back(i);
    if (donors.empty())
      throw RuntimeError("no observed respondent values for " + ds_.vars[var].name);
    auto match_vars_all = earlier_vars(var);

    for (int i : item_rows_[var]) {
      // Match on the recipient's *observed* earlier variables only.
      std::vector<int> mv;
      for (int j : match_vars_all)
        if (!r_(i, j) && ds_.cell(i, j) != kMissing) mv.push_back(j);
      std::size_t keep = mv.size();
      while (true) {
        std::vector<double> cum;
        std::vector<int> pool;
        double total = 0.0;
        for (int don : donors) {
          bool ok = true;
          for (std::size_t t = 0; t < keep; ++t)
            if (work(don, mv[t]) != ds_.cell(i, mv[t])) {
              ok = false;
              break;
            }
          if (ok) {
            total += ds_.weights[don];
            pool.push_back(don);
            cum.push_back(total);
          }
        }
        if (!pool.empty()) {
          double u = rng_.uniform() * total;
          auto it = std::lower_bound(cum.begin(), cum.end(), u);
          std::size_t pick =
              std::min(static_cast<std::size_t>(it - cum.begin()), pool.size() - 1);
          work(i, var) = work(pool[pick], var);
          break;
        }
        if (keep == 0) throw RuntimeError("hot deck found no donors");
        --keep;
      }
    }
  }

  // --- members ---

  SurveyDataset ds_;
  ModelSpec spec_;
  SamplerControls controls_;
  RngStream rng_;
  int n_ = 0, k_ = 0;
  int iteration_ = 0;

  std::vector<int> resp_rows_, unit_rows_;
  std::vector<std::uint8_t> unit_flags_;
  std::vector<int> work_;
  std::vector<std::uint8_t> rmat_;
  std::vector<std::vector<int>> item_rows_;  // per variable index

  std::vector<OutcomeState> models_;
  std::vector<ItemState> item_states_;
  std::vector<AuxMargin> margins_;
  std::vector<std::vector<int>> outcome_deps_, item_deps_;

  FittedModel u_fit_;
  bool have_u_fit_ = false;
  double u_prob_ = 0.0;

  int me_var_ = -1;
  std::vector<int> z_;
  std::vector<int> me_rows_;
  std::vector<double> theta_;

  long long clamp_events_ = 0;
  long long ridge_events_ = 0;
  IterationDiagnostics cur_diag_;
  RetainedDraw last_draw_;
};

// Convenience wrappers: a full run, and the comparison run with all margin
// machinery disabled.
inline MultipleImputations run_mdam(const SurveyDataset& ds, const ModelSpec& spec,
                                    const std::vector<AuxMargin>& margins,
                                    const SamplerControls& controls) {
  Sampler s(ds, spec, margins, controls);
  return s.run();
}

inline MultipleImputations run_icin(const SurveyDataset& ds, const ModelSpec& spec,
                                    const std::vector<AuxMargin>& margins,
                                    SamplerControls controls) {
  controls.icin = true;
  Sampler s(ds, spec, margins, controls);
  return s.run();
}

}  // namespace mdam
