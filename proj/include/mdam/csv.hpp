#pragma once

// CSV reading/writing for survey datasets.  Cells are stored by level label;
// weights round-trip exactly (written with max_digits10 precision).

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mdam/dataset.hpp"

namespace mdam {

struct CsvSchema {
  std::vector<VariableDef> variables;
  std::string weight_column = "weight";
  std::string unit_nr_column;               // empty: infer from all-missing rows
  std::set<std::string> missing_codes = {"", "NA"};
  char delimiter = ',';
  double population_size = 0.0;
  WeightKind weight_kind = WeightKind::Design;
};

namespace detail {

// One CSV record; handles quoted fields with doubled quotes.
inline std::vector<std::string> split_csv_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline int find_column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<int>(j);
  return -1;
}

}  // namespace detail

inline SurveyDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + " is empty");
  auto header = detail::split_csv_line(line, schema.delimiter);

  std::vector<int> var_col(schema.variables.size());
  for (std::size_t j = 0; j < schema.variables.size(); ++j) {
    var_col[j] = detail::find_column(header, schema.variables[j].name);
    if (var_col[j] < 0)
      throw ConfigError(path + ": missing column " + schema.variables[j].name);
  }
  int w_col = detail::find_column(header, schema.weight_column);
  if (w_col < 0) throw ConfigError(path + ": missing column " + schema.weight_column);
  int u_col = schema.unit_nr_column.empty()
                  ? -1
                  : detail::find_column(header, schema.unit_nr_column);
  if (!schema.unit_nr_column.empty() && u_col < 0)
    throw ConfigError(path + ": missing column " + schema.unit_nr_column);

  SurveyDataset ds;
  ds.vars = schema.variables;
  ds.population_size = schema.population_size;
  ds.weight_kind = schema.weight_kind;

  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line, schema.delimiter);
    if (f.size() != header.size())
      throw ConfigError(path + ": row " + std::to_string(row) + " has " +
                        std::to_string(f.size()) + " fields, expected " +
                        std::to_string(header.size()));
    bool all_missing = true;
    for (std::size_t j = 0; j < schema.variables.size(); ++j) {
      const auto& cellv = f[var_col[j]];
      if (schema.missing_codes.count(cellv)) {
        ds.cells.push_back(kMissing);
        continue;
      }
      all_missing = false;
      const auto& levels = schema.variables[j].levels;
      int code = -1;
      for (std::size_t l = 0; l < levels.size(); ++l)
        if (levels[l] == cellv) code = static_cast<int>(l);
      if (code < 0)
        throw ConfigError(path + ": row " + std::to_string(row) + ", column " +
                          schema.variables[j].name + ": unknown level '" + cellv + "'");
      ds.cells.push_back(code);
    }
    bool unit;
    if (u_col >= 0) {
      const auto& uv = f[u_col];
      if (uv != "0" && uv != "1")
        throw ConfigError(path + ": row " + std::to_string(row) +
                          ": unit flag must be 0 or 1, got '" + uv + "'");
      unit = uv == "1";
    } else {
      unit = all_missing;
    }
    ds.unit_nr.push_back(unit ? 1 : 0);
    const auto& wv = f[w_col];
    if (schema.missing_codes.count(wv)) {
      ds.weights.push_back(0.0);
    } else {
      std::size_t pos = 0;
      double w = std::stod(wv, &pos);
      if (pos != wv.size())
        throw ConfigError(path + ": row " + std::to_string(row) + ": bad weight '" + wv + "'");
      ds.weights.push_back(w);
    }
  }
  ds.validate();
  return ds;
}

inline void write_csv(const SurveyDataset& ds, const std::string& path,
                      const std::string& weight_column = "weight",
                      const std::string& unit_nr_column = "unit_nonresponse") {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path);
  for (int j = 0; j < ds.k(); ++j) out << ds.vars[j].name << ',';
  out << weight_column << ',' << unit_nr_column << '\n';
  char buf[40];
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.k(); ++j) {
      int c = ds.cell(i, j);
      if (c != kMissing) out << ds.vars[j].levels[c];
      out << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", ds.weights[i]);
    out << buf << ',' << (ds.unit_nr[i] ? '1' : '0') << '\n';
  }
  if (!out) throw RuntimeError("write failed for " + path);
}

}  // namespace mdam
