#pragma once

// Categorical survey data with unit and item nonresponse.  A dataset is a
// rectangular block of coded cells (level indices, kMissing for holes), one
// weight per row, and a unit-nonresponse flag per row.  Treat instances as
// immutable: every operation that changes content returns a copy.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mdam/common.hpp"

namespace mdam {

enum class VarRole { MarginBacked, MarginFree };

enum class WeightKind { Design, Adjusted, Constructed };

struct VariableDef {
  std::string name;
  std::vector<std::string> levels;  // labels; cell values index into this
  VarRole role = VarRole::MarginFree;

  int n_levels() const { return static_cast<int>(levels.size()); }
};

struct SurveyDataset {
  std::vector<VariableDef> vars;
  std::vector<int> cells;           // n x k row-major
  std::vector<std::uint8_t> unit_nr;
  std::vector<double> weights;      // 0 allowed only on unit-nonrespondent rows
  double population_size = 0.0;     // scale the margins refer to
  WeightKind weight_kind = WeightKind::Design;

  int n() const { return static_cast<int>(unit_nr.size()); }
  int k() const { return static_cast<int>(vars.size()); }

  int cell(int i, int j) const { return cells[static_cast<std::size_t>(i) * k() + j]; }
  int& cell(int i, int j) { return cells[static_cast<std::size_t>(i) * k() + j]; }

  int var_index(const std::string& name) const {
    for (int j = 0; j < k(); ++j)
      if (vars[j].name == name) return j;
    throw ConfigError("unknown variable: " + name);
  }

  int n_unit_nr() const {
    int m = 0;
    for (auto u : unit_nr) m += u;
    return m;
  }

  // Item-nonresponse indicator: defined only on respondent rows.
  bool item_missing(int i, int j) const { return !unit_nr[i] && cell(i, j) == kMissing; }

  void validate() const {
    if (vars.empty()) throw ConfigError("dataset has no variables");
    if (cells.size() != static_cast<std::size_t>(n()) * k() ||
        weights.size() != unit_nr.size())
      throw ConfigError("dataset arrays have inconsistent sizes");
    if (population_size <= 0.0) throw ConfigError("population size must be positive");
    for (const auto& v : vars)
      if (v.n_levels() < 2) throw ConfigError("variable " + v.name + " needs >= 2 levels");
    for (int i = 0; i < n(); ++i) {
      int n_obs = 0;
      for (int j = 0; j < k(); ++j) {
        int c = cell(i, j);
        if (c != kMissing && (c < 0 || c >= vars[j].n_levels()))
          throw ConfigError("cell out of range at row " + std::to_string(i) +
                            ", variable " + vars[j].name);
        n_obs += c != kMissing;
      }
      // Unit nonrespondents are fully missing before imputation and fully
      // filled after it; a partially observed unit row is always an error.
      if (unit_nr[i] && n_obs != 0 && n_obs != k())
        throw ConfigError("unit nonrespondent row " + std::to_string(i) +
                          " is partially observed");
      double w = weights[i];
      if (!std::isfinite(w) || w < 0.0)
        throw ConfigError("weight at row " + std::to_string(i) + " is negative or non-finite");
      if (!unit_nr[i] && w <= 0.0)
        throw ConfigError("respondent row " + std::to_string(i) + " has nonpositive weight");
    }
  }

  bool complete() const {
    return std::find(cells.begin(), cells.end(), kMissing) == cells.end();
  }
};

// Append `m` fully missing rows flagged as unit nonrespondents (weight 0;
// the weights module assigns them weights later).
inline SurveyDataset augment_unit_nonrespondents(const SurveyDataset& ds, int m) {
  if (m < 0) throw ConfigError("cannot append a negative number of rows");
  SurveyDataset out = ds;
  out.cells.resize(out.cells.size() + static_cast<std::size_t>(m) * ds.k(), kMissing);
  out.unit_nr.resize(out.unit_nr.size() + m, 1);
  out.weights.resize(out.weights.size() + m, 0.0);
  return out;
}

struct MissingnessSummary {
  int n = 0;
  int n_unit = 0;                      // unit nonrespondents
  double unit_rate = 0.0;
  std::vector<double> item_rates;      // per variable, among respondents
  std::map<std::string, int> patterns; // respondent missingness patterns, e.g. "0010"
};

inline MissingnessSummary missingness_summary(const SurveyDataset& ds) {
  MissingnessSummary s;
  s.n = ds.n();
  s.n_unit = ds.n_unit_nr();
  s.unit_rate = ds.n() > 0 ? static_cast<double>(s.n_unit) / ds.n() : 0.0;
  s.item_rates.assign(ds.k(), 0.0);
  int n_resp = ds.n() - s.n_unit;
  std::string pat(ds.k(), '0');
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.unit_nr[i]) continue;
    for (int j = 0; j < ds.k(); ++j) {
      bool miss = ds.cell(i, j) == kMissing;
      pat[j] = miss ? '1' : '0';
      if (miss) s.item_rates[j] += 1.0;
    }
    ++s.patterns[pat];
  }
  if (n_resp > 0)
    for (auto& r : s.item_rates) r /= n_resp;
  return s;
}

}  // namespace mdam
