#pragma once

// Weighted categorical regressions used throughout the sampler: Bernoulli
// logit and baseline-category multinomial logit, fit by Newton-Raphson with
// step halving, plus multivariate-normal coefficient draws from the
// observed-information covariance.
//
// Design matrices are expanded deterministically: intercept first, then for
// each main effect its d-1 non-baseline indicators in level order, then for
// each two-way interaction the (d1-1)(d2-1) indicator products (first
// variable's level in the outer loop).

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "mdam/common.hpp"
#include "mdam/dataset.hpp"
#include "mdam/rng.hpp"

namespace mdam {

struct TermSpec {
  std::vector<std::string> mains;
  std::vector<std::pair<std::string, std::string>> interactions;
};

// Resolved column layout of a term spec against a variable schema.
struct DesignInfo {
  std::vector<int> main_vars;                  // variable index per main effect
  std::vector<std::pair<int, int>> inter_vars;
  std::vector<int> n_levels;                   // per dataset variable
  int n_cols = 1;
  std::vector<std::string> col_names;
};

inline DesignInfo design_info(const std::vector<VariableDef>& vars, const TermSpec& t) {
  DesignInfo d;
  d.n_levels.reserve(vars.size());
  for (const auto& v : vars) d.n_levels.push_back(v.n_levels());
  auto lookup = [&](const std::string& name) {
    for (std::size_t j = 0; j < vars.size(); ++j)
      if (vars[j].name == name) return static_cast<int>(j);
    throw ConfigError("term references unknown variable: " + name);
  };
  d.col_names.push_back("(Intercept)");
  for (const auto& m : t.mains) {
    int j = lookup(m);
    d.main_vars.push_back(j);
    for (int l = 1; l < d.n_levels[j]; ++l)
      d.col_names.push_back(vars[j].name + "=" + vars[j].levels[l]);
    d.n_cols += d.n_levels[j] - 1;
  }
  for (const auto& [a, b] : t.interactions) {
    int ja = lookup(a), jb = lookup(b);
    d.inter_vars.emplace_back(ja, jb);
    for (int la = 1; la < d.n_levels[ja]; ++la)
      for (int lb = 1; lb < d.n_levels[jb]; ++lb)
        d.col_names.push_back(vars[ja].name + "=" + vars[ja].levels[la] + ":" +
                              vars[jb].name + "=" + vars[jb].levels[lb]);
    d.n_cols += (d.n_levels[ja] - 1) * (d.n_levels[jb] - 1);
  }
  return d;
}

// Fill one design row from a complete cell row (`cells` has one entry per
// dataset variable).  Missing predictors are a hard error.
inline void fill_design_row(double* row, const DesignInfo& d, const int* cells) {
  row[0] = 1.0;
  int c = 1;
  for (int j : d.main_vars) {
    int v = cells[j];
    if (v == kMissing) throw RuntimeError("design expansion hit a missing predictor");
    for (int l = 1; l < d.n_levels[j]; ++l) row[c++] = v == l ? 1.0 : 0.0;
  }
  for (auto [ja, jb] : d.inter_vars) {
    int va = cells[ja], vb = cells[jb];
    if (va == kMissing || vb == kMissing)
      throw RuntimeError("design expansion hit a missing predictor");
    for (int la = 1; la < d.n_levels[ja]; ++la)
      for (int lb = 1; lb < d.n_levels[jb]; ++lb)
        row[c++] = (va == la && vb == lb) ? 1.0 : 0.0;
  }
}

// Expand the design for a subset of rows of a flat n x k cell matrix.
inline Eigen::MatrixXd expand_design(const DesignInfo& d, const std::vector<int>& cells,
                                     int k, const std::vector<int>& rows) {
  Eigen::MatrixXd X(rows.size(), d.n_cols);
  std::vector<double> buf(d.n_cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    fill_design_row(buf.data(), d, &cells[static_cast<std::size_t>(rows[r]) * k]);
    for (int c = 0; c < d.n_cols; ++c) X(r, c) = buf[c];
  }
  return X;
}

struct FitOptions {
  int max_iter = 100;
  double tol = 1e-8;      // max-norm of the (penalised) score
  double ridge = 0.0;     // set on the fallback path
};

struct FittedModel {
  Eigen::VectorXd coef;   // multinomial: level-major, all of level 1 first
  Eigen::MatrixXd cov;    // inverse observed information
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ridge_used = false;
  int n_levels = 2;       // 2 for logit
};

namespace detail {

// One Newton pass for the Bernoulli logit.  Returns false if the Hessian is
// numerically singular (caller retries with ridge).
inline bool newton_logit(const Eigen::MatrixXd& X, const std::vector<int>& y,
                         const std::vector<double>& w, const FitOptions& opt,
                         Eigen::VectorXd& beta, FittedModel& out) {
  const int n = static_cast<int>(X.rows()), p = static_cast<int>(X.cols());
  auto penalised_ll = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd eta = X * b;
    double ll = 0.0;
    for (int i = 0; i < n; ++i)
      ll += w[i] * (y[i] * eta[i] - log1pexp(eta[i]));
    return ll - 0.5 * opt.ridge * b.squaredNorm();
  };
  double ll = penalised_ll(beta);
  Eigen::VectorXd grad(p), prob(n);
  Eigen::MatrixXd info(p, p);
  for (int it = 1; it <= opt.max_iter; ++it) {
    Eigen::VectorXd eta = X * beta;
    for (int i = 0; i < n; ++i) prob[i] = inv_logit(eta[i]);
    grad.setZero();
    info.setZero();
    for (int i = 0; i < n; ++i) {
      double r = w[i] * (y[i] - prob[i]);
      double wt = w[i] * prob[i] * (1.0 - prob[i]);
      grad.noalias() += r * X.row(i).transpose();
      info.noalias() += wt * X.row(i).transpose() * X.row(i);
    }
    grad -= opt.ridge * beta;
    info.diagonal().array() += opt.ridge;
    out.iterations = it;
    if (grad.lpNorm<Eigen::Infinity>() <= opt.tol) {
      out.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) return false;
    // Step halving: accept the first scale that does not decrease the
    // penalised log likelihood.  The slack scales with |ll| because the
    // summed likelihood carries round-off of that order near the optimum.
    double scale = 1.0;
    bool moved = false;
    double slack = 1e-12 * (1.0 + std::abs(ll));
    double ll_before = ll;
    for (int half = 0; half < 30; ++half) {
      Eigen::VectorXd cand = beta + scale * step;
      double cll = penalised_ll(cand);
      if (cll >= ll - slack) {
        beta = cand;
        ll = cll;
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    // Unpenalised coefficients this large mean separation: the likelihood
    // flattens and the gradient test would accept a non-finite MLE.  Hand
    // off to the ridge pass, which has a proper interior optimum.
    if (opt.ridge == 0.0 && beta.lpNorm<Eigen::Infinity>() > 15.0) return false;
    if (!moved) break;  // stuck; convergence check next pass decides
    // The summed score has a round-off floor that grows with the total
    // weight, so on big fits the gradient test above can be unreachable.
    // Once an accepted step neither improves the objective beyond the slack
    // nor moves the coefficients, the fit sits on that floor: converged.
    if (std::abs(ll - ll_before) <= slack &&
        scale * step.lpNorm<Eigen::Infinity>() <=
            1e-8 * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
      out.converged = true;
      break;
    }
  }
  out.coef = beta;
  out.loglik = ll + 0.5 * opt.ridge * beta.squaredNorm();
  // Observed information at the final coefficients.
  Eigen::VectorXd eta = X * beta;
  info.setZero();
  for (int i = 0; i < n; ++i) {
    double pi = inv_logit(eta[i]);
    info.noalias() += (w[i] * pi * (1.0 - pi)) * X.row(i).transpose() * X.row(i);
  }
  info.diagonal().array() += opt.ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  out.cov = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  return true;
}

// One Newton pass for the baseline-category multinomial logit with the full
// block Hessian.
inline bool newton_multinomial(const Eigen::MatrixXd& X, const std::vector<int>& y,
                               int d, const std::vector<double>& w, const FitOptions& opt,
                               Eigen::VectorXd& beta, FittedModel& out) {
  const int n = static_cast<int>(X.rows()), p = static_cast<int>(X.cols());
  const int q = p * (d - 1);
  Eigen::MatrixXd P(n, d);  // fitted probabilities, refreshed each pass
  auto probs_at = [&](const Eigen::VectorXd& b, Eigen::MatrixXd& out_p) {
    for (int i = 0; i < n; ++i) {
      double m = 0.0;  // log-sum-exp guard; baseline eta = 0
      double eta[16];
      eta[0] = 0.0;
      for (int c = 1; c < d; ++c) {
        double e = 0.0;
        for (int j = 0; j < p; ++j) e += X(i, j) * b[(c - 1) * p + j];
        eta[c] = e;
        m = std::max(m, e);
      }
      double denom = 0.0;
      for (int c = 0; c < d; ++c) denom += std::exp(eta[c] - m);
      for (int c = 0; c < d; ++c) out_p(i, c) = std::exp(eta[c] - m) / denom;
    }
  };
  auto penalised_ll = [&](const Eigen::VectorXd& b) {
    Eigen::MatrixXd Pl(n, d);
    probs_at(b, Pl);
    double ll = 0.0;
    for (int i = 0; i < n; ++i) ll += w[i] * std::log(std::max(Pl(i, y[i]), 1e-300));
    return ll - 0.5 * opt.ridge * b.squaredNorm();
  };
  if (d - 1 > 15) throw ConfigError("multinomial outcome has too many levels");
  double ll = penalised_ll(beta);
  Eigen::VectorXd grad(q);
  Eigen::MatrixXd info(q, q);
  auto accumulate = [&](const Eigen::VectorXd& b, bool with_grad) {
    probs_at(b, P);
    if (with_grad) grad.setZero();
    info.setZero();
    for (int i = 0; i < n; ++i) {
      for (int c = 1; c < d; ++c) {
        if (with_grad) {
          double r = w[i] * ((y[i] == c ? 1.0 : 0.0) - P(i, c));
          grad.segment((c - 1) * p, p).noalias() += r * X.row(i).transpose();
        }
        for (int c2 = c; c2 < d; ++c2) {
          double wt = w[i] * P(i, c) * ((c == c2 ? 1.0 : 0.0) - P(i, c2));
          info.block((c - 1) * p, (c2 - 1) * p, p, p).noalias() +=
              wt * X.row(i).transpose() * X.row(i);
        }
      }
    }
    for (int a = 0; a < q; ++a)
      for (int b2 = a + 1; b2 < q; ++b2) info(b2, a) = info(a, b2);
    if (with_grad) grad -= opt.ridge * b;
    info.diagonal().array() += opt.ridge;
  };
  for (int it = 1; it <= opt.max_iter; ++it) {
    accumulate(beta, true);
    out.iterations = it;
    if (grad.lpNorm<Eigen::Infinity>() <= opt.tol) {
      out.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) return false;
    double scale = 1.0;
    bool moved = false;
    double slack = 1e-12 * (1.0 + std::abs(ll));
    double ll_before = ll;
    for (int half = 0; half < 30; ++half) {
      Eigen::VectorXd cand = beta + scale * step;
      double cll = penalised_ll(cand);
      if (cll >= ll - slack) {
        beta = cand;
        ll = cll;
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    // Separation guard, as in the Bernoulli fitter.
    if (opt.ridge == 0.0 && beta.lpNorm<Eigen::Infinity>() > 15.0) return false;
    if (!moved) break;
    // Round-off floor of the summed score; see the Bernoulli fitter.
    if (std::abs(ll - ll_before) <= slack &&
        scale * step.lpNorm<Eigen::Infinity>() <=
            1e-8 * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
      out.converged = true;
      break;
    }
  }
  out.coef = beta;
  out.loglik = ll + 0.5 * opt.ridge * beta.squaredNorm();
  accumulate(beta, false);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  out.cov = ldlt.solve(Eigen::MatrixXd::Identity(q, q));
  return true;
}

}  // namespace detail

// Fit the weighted Bernoulli logit.  If the plain fit hits a singular Hessian
// or fails to converge, retry once with a small ridge; failure after that is
// an error.
inline FittedModel fit_logit(const Eigen::MatrixXd& X, const std::vector<int>& y,
                             const std::vector<double>& w, FitOptions opt = {},
                             const Eigen::VectorXd* init = nullptr) {
  if (X.rows() != static_cast<Eigen::Index>(y.size()) || y.size() != w.size())
    throw ConfigError("fit_logit: input sizes differ");
  if (X.rows() == 0) throw RuntimeError("fit_logit: no rows to fit");
  FittedModel out;
  out.n_levels = 2;
  Eigen::VectorXd beta =
      init && init->size() == X.cols() ? *init : Eigen::VectorXd::Zero(X.cols());
  if (opt.ridge == 0.0) {
    Eigen::VectorXd b = beta;
    if (detail::newton_logit(X, y, w, opt, b, out) && out.converged) return out;
    out = FittedModel{};
    out.n_levels = 2;
  }
  FitOptions ropt = opt;
  ropt.ridge = opt.ridge == 0.0 ? 1e-6 : opt.ridge;
  Eigen::VectorXd b = beta;
  bool ok = detail::newton_logit(X, y, w, ropt, b, out);
  out.ridge_used = true;
  if (!ok || !out.converged)
    throw RuntimeError("logit fit failed to converge (ridge fallback exhausted)");
  return out;
}

inline FittedModel fit_multinomial(const Eigen::MatrixXd& X, const std::vector<int>& y,
                                   int n_levels, const std::vector<double>& w,
                                   FitOptions opt = {}, const Eigen::VectorXd* init = nullptr) {
  if (X.rows() != static_cast<Eigen::Index>(y.size()) || y.size() != w.size())
    throw ConfigError("fit_multinomial: input sizes differ");
  if (X.rows() == 0) throw RuntimeError("fit_multinomial: no rows to fit");
  if (n_levels < 2) throw ConfigError("fit_multinomial: need >= 2 levels");
  for (int v : y)
    if (v < 0 || v >= n_levels) throw ConfigError("fit_multinomial: response out of range");
  const int q = static_cast<int>(X.cols()) * (n_levels - 1);
  FittedModel out;
  out.n_levels = n_levels;
  Eigen::VectorXd beta = init && init->size() == q ? *init : Eigen::VectorXd::Zero(q);
  if (opt.ridge == 0.0) {
    Eigen::VectorXd b = beta;
    if (detail::newton_multinomial(X, y, n_levels, w, opt, b, out) && out.converged)
      return out;
    out = FittedModel{};
    out.n_levels = n_levels;
  }
  FitOptions ropt = opt;
  ropt.ridge = opt.ridge == 0.0 ? 1e-6 : opt.ridge;
  Eigen::VectorXd b = beta;
  bool ok = detail::newton_multinomial(X, y, n_levels, w, ropt, b, out);
  out.ridge_used = true;
  if (!ok || !out.converged)
    throw RuntimeError("multinomial fit failed to converge (ridge fallback exhausted)");
  return out;
}

// One multivariate-normal draw centred at the MLE with the inverse observed
// information as covariance (tiny jitter keeps the factorisation stable).
inline Eigen::VectorXd draw_coefficients(const FittedModel& fit, RngStream& rng) {
  int q = static_cast<int>(fit.coef.size());
  Eigen::MatrixXd cov = fit.cov;
  cov.diagonal().array() += 1e-12;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw RuntimeError("coefficient covariance is not positive definite");
  Eigen::VectorXd z(q);
  for (int j = 0; j < q; ++j) z[j] = rng.normal();
  return fit.coef + llt.matrixL() * z;
}

}  // namespace mdam
