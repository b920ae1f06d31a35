#pragma once

// Construction of analysis weights for unit nonrespondents.
//
// Design regime: respondents keep their design weights; the leftover mass
//   (N - sum of respondent weights) is split evenly over unit nonrespondents,
//   so all weights sum to N.
// Adjusted regime: respondent weights already carry a nonresponse adjustment
//   and sum to roughly N on their own.  Respondents are scaled down by
//   (1 - n_U/n) and each nonrespondent gets the average adjusted weight, so
//   the total is preserved.

#include <optional>
#include <string>
#include <vector>

#include "mdam/dataset.hpp"

namespace mdam {

struct WeightReport {
  std::vector<double> weights;
  double respondent_sum = 0.0;
  double nonrespondent_weight = 0.0;  // shared value given to each U=1 row
  double total = 0.0;
  bool sum_warning = false;           // no nonrespondents and total != target
  std::string note;
};

inline SurveyDataset with_weights(const SurveyDataset& ds, const std::vector<double>& w,
                                  WeightKind kind) {
  SurveyDataset out = ds;
  out.weights = w;
  out.weight_kind = kind;
  out.validate();
  return out;
}

// Design-weight regime.  Errors out if respondent weights already exceed N:
// a negative shared weight means the inputs are inconsistent.
inline WeightReport weights_from_design(const SurveyDataset& ds, double population_size) {
  if (ds.weight_kind != WeightKind::Design)
    throw ConfigError("weights_from_design expects design weights");
  if (population_size <= 0.0) throw ConfigError("population size must be positive");
  WeightReport rep;
  rep.weights = ds.weights;
  int n_u = 0;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.unit_nr[i]) {
      ++n_u;
    } else {
      rep.respondent_sum += ds.weights[i];
    }
  }
  if (n_u > 0) {
    rep.nonrespondent_weight = (population_size - rep.respondent_sum) / n_u;
    if (rep.nonrespondent_weight <= 0.0)
      throw RuntimeError("respondent design weights sum to " +
                         std::to_string(rep.respondent_sum) +
                         ", at or above the population size " +
                         std::to_string(population_size) +
                         "; cannot assign positive nonrespondent weights");
    for (int i = 0; i < ds.n(); ++i)
      if (ds.unit_nr[i]) rep.weights[i] = rep.nonrespondent_weight;
  } else if (std::abs(rep.respondent_sum - population_size) >
             1e-6 * population_size) {
    rep.sum_warning = true;
    rep.note = "no unit nonrespondents; weights do not sum to the population size";
  }
  rep.total = 0.0;
  for (double w : rep.weights) rep.total += w;
  return rep;
}

// Adjusted-weight regime.  `rescale_to` switches the nonrespondent share so
// the grand total hits that value (e.g. N) instead of the adjusted-weight sum.
inline WeightReport weights_from_adjusted(const SurveyDataset& ds,
                                          std::optional<double> rescale_to = std::nullopt) {
  if (ds.weight_kind != WeightKind::Adjusted)
    throw ConfigError("weights_from_adjusted expects nonresponse-adjusted weights");
  WeightReport rep;
  rep.weights = ds.weights;
  int n = ds.n(), n_u = 0;
  for (int i = 0; i < n; ++i) {
    if (ds.unit_nr[i]) {
      ++n_u;
    } else {
      rep.respondent_sum += ds.weights[i];
    }
  }
  double shrink = 1.0 - static_cast<double>(n_u) / n;
  double resp_total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!ds.unit_nr[i]) {
      rep.weights[i] *= shrink;
      resp_total += rep.weights[i];
    }
  }
  if (n_u > 0) {
    rep.nonrespondent_weight = rescale_to ? (*rescale_to - resp_total) / n_u
                                          : rep.respondent_sum / n;
    if (rep.nonrespondent_weight <= 0.0)
      throw RuntimeError("adjusted-regime nonrespondent weight is not positive");
    for (int i = 0; i < n; ++i)
      if (ds.unit_nr[i]) rep.weights[i] = rep.nonrespondent_weight;
  }
  rep.total = 0.0;
  for (double w : rep.weights) rep.total += w;
  return rep;
}

struct ClassAdjustment {
  std::vector<double> weights;         // adjusted weights; 0 on unit rows
  std::vector<double> response_rates;  // weighted response rate per class
};

// Weighting-class nonresponse adjustment: divide each respondent design
// weight by the weighted response rate of its class.
inline ClassAdjustment weighting_class_adjust(const std::vector<double>& design_w,
                                              const std::vector<int>& cls,
                                              const std::vector<std::uint8_t>& unit_nr,
                                              int n_classes) {
  if (design_w.size() != cls.size() || cls.size() != unit_nr.size())
    throw ConfigError("weighting_class_adjust: input sizes differ");
  std::vector<double> num(n_classes, 0.0), den(n_classes, 0.0);
  for (std::size_t i = 0; i < cls.size(); ++i) {
    if (cls[i] < 0 || cls[i] >= n_classes)
      throw ConfigError("weighting_class_adjust: class value out of range");
    den[cls[i]] += design_w[i];
    if (!unit_nr[i]) num[cls[i]] += design_w[i];
  }
  ClassAdjustment out;
  out.response_rates.resize(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    if (den[c] <= 0.0) {
      out.response_rates[c] = 1.0;  // empty class: nothing to adjust
    } else {
      out.response_rates[c] = num[c] / den[c];
      if (out.response_rates[c] <= 0.0)
        throw RuntimeError("weighting class " + std::to_string(c) +
                           " has no respondents; adjustment undefined");
    }
  }
  out.weights.assign(design_w.size(), 0.0);
  for (std::size_t i = 0; i < cls.size(); ++i)
    if (!unit_nr[i]) out.weights[i] = design_w[i] / out.response_rates[cls[i]];
  return out;
}

// Dataset wrapper.  The class variable must be observed on every row: the
// response rate denominator needs nonrespondents' class membership, so this
// only applies when class information comes from the frame (or pre-blanking
// simulation data).
inline ClassAdjustment weighting_class_adjust(const SurveyDataset& ds,
                                              const std::string& class_variable) {
  int j = ds.var_index(class_variable);
  std::vector<int> cls(ds.n(), 0);
  for (int i = 0; i < ds.n(); ++i) {
    int c = ds.cell(i, j);
    if (c == kMissing)
      throw ConfigError("weighting class variable " + class_variable +
                        " must be observed on every row (missing at row " +
                        std::to_string(i) + ")");
    cls[i] = c;
  }
  return weighting_class_adjust(ds.weights, cls, ds.unit_nr, ds.vars[j].n_levels());
}

}  // namespace mdam
