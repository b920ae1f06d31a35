#pragma once

// Command-line front door: JSON configs in, reproducible artifact directories
// out.  Subcommands: impute (run the sampler, write completed-data CSVs, the
// parameter draws, and a manifest), analyze (pool estimands over an
// imputation directory), simulate (repeated-sampling study), ppc (replicated
// interval checks).  Every output is a pure function of (config, seed, input
// files); nothing timestamped.  The manifest is written last, so a directory
// with a manifest is complete by construction.
//
// Exit codes: 0 success, 1 validation failure, 2 runtime abort.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdam/csv.hpp"
#include "mdam/dataset.hpp"
#include "mdam/estimate.hpp"
#include "mdam/margins.hpp"
#include "mdam/model_spec.hpp"
#include "mdam/ppc.hpp"
#include "mdam/sampler.hpp"
#include "mdam/simulate.hpp"
#include "mdam/weights.hpp"

namespace mdam {

struct RunConfig {
  std::string data_path;
  std::string spec_path;
  std::string margins_path;
  std::string weights_regime = "design";  // design | adjusted
  double population_size = 0.0;           // 0: take the spec file's value
  SamplerControls controls;
  std::string out_dir;
  int threads = 1;
};

namespace cli_detail {

using nlohmann::json;

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Structural content hash of a config: FNV-1a 64 over the canonical dump
// (nlohmann orders object keys), so formatting changes do not alter it.
inline std::string spec_hash(const json& j) {
  std::string canon = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename T>
T field(const json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("field '" + key + "': " + e.what());
  }
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + " needs a '" + key + "' field");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ", field '" + key + "': " + e.what());
  }
}

inline CsvSchema schema_from_json(const json& j) {
  CsvSchema s;
  if (!j.contains("variables") || !j.at("variables").is_array() || j.at("variables").empty())
    throw ConfigError("spec needs a non-empty 'variables' array");
  for (const auto& v : j.at("variables")) {
    VariableDef def;
    def.name = require<std::string>(v, "name", "variable");
    def.levels = require<std::vector<std::string>>(v, "levels", "variable " + def.name);
    def.role = field<bool>(v, "margin_backed", false) ? VarRole::MarginBacked
                                                      : VarRole::MarginFree;
    s.variables.push_back(def);
  }
  s.weight_column = field<std::string>(j, "weight_column", "weight");
  s.unit_nr_column = field<std::string>(j, "unit_nr_column", "");
  if (j.contains("missing_codes")) {
    s.missing_codes.clear();
    for (const auto& c : j.at("missing_codes")) s.missing_codes.insert(c.get<std::string>());
  }
  s.population_size = field<double>(j, "population_size", 0.0);
  return s;
}

inline TermSpec terms_from_json(const json& j, const std::string& where) {
  TermSpec t;
  t.mains = field<std::vector<std::string>>(j, "mains", {});
  if (j.contains("interactions")) {
    for (const auto& pair : j.at("interactions")) {
      if (!pair.is_array() || pair.size() != 2)
        throw ConfigError(where + ": each interaction must be a [a, b] pair");
      t.interactions.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
    }
  }
  return t;
}

inline ModelSpec modelspec_from_json(const json& j) {
  ModelSpec spec;
  if (!j.contains("outcomes") || !j.at("outcomes").is_array())
    throw ConfigError("spec needs an 'outcomes' array (one model per variable, scan order)");
  for (const auto& m : j.at("outcomes")) {
    OutcomeModel om;
    om.variable = require<std::string>(m, "variable", "outcome model");
    om.terms = terms_from_json(m, "outcome model " + om.variable);
    spec.outcomes.push_back(om);
  }
  if (j.contains("item_models")) {
    for (const auto& m : j.at("item_models")) {
      ItemModel im;
      im.variable = require<std::string>(m, "variable", "item model");
      im.terms = terms_from_json(m, "item model " + im.variable);
      spec.item_models.push_back(im);
    }
  }
  if (j.contains("rules")) {
    for (const auto& r : j.at("rules"))
      spec.rules.push_back({require<std::string>(r, "trigger", "structural rule"),
                            require<std::string>(r, "forced", "structural rule")});
  }
  if (j.contains("measurement_error")) {
    const auto& me = j.at("measurement_error");
    MeasurementErrorSpec ms;
    ms.variable = require<std::string>(me, "variable", "measurement_error");
    ms.stratum_variable = require<std::string>(me, "stratum", "measurement_error");
    ms.prior_a = require<std::vector<double>>(me, "prior_a", "measurement_error");
    ms.prior_b = require<std::vector<double>>(me, "prior_b", "measurement_error");
    spec.measurement_error = ms;
  }
  return spec;
}

inline std::vector<AuxMargin> margins_from_json(const json& root, double population_size) {
  const json& arr = root.is_array() ? root : root.at("margins");
  if (!arr.is_array()) throw ConfigError("margins file must hold an array of margins");
  std::vector<AuxMargin> out;
  for (const auto& m : arr) {
    AuxMargin g;
    g.variable = require<std::string>(m, "variable", "margin");
    if (m.contains("totals") == m.contains("proportions"))
      throw ConfigError("margin for " + g.variable +
                        " needs exactly one of 'totals' or 'proportions'");
    if (m.contains("totals")) {
      g.totals = m.at("totals").get<std::vector<double>>();
    } else {
      if (population_size <= 0.0)
        throw ConfigError("margin proportions for " + g.variable +
                          " need a positive population size");
      for (double p : m.at("proportions").get<std::vector<double>>())
        g.totals.push_back(p * population_size);
    }
    g.variances = field<std::vector<double>>(m, "variances", {});
    if (g.variances.empty()) g.variances.assign(g.totals.size(), 0.0);
    g.source = field<std::string>(m, "source", "");
    out.push_back(g);
  }
  return out;
}

inline int level_code(const VariableDef& v, const std::string& label) {
  for (std::size_t l = 0; l < v.levels.size(); ++l)
    if (v.levels[l] == label) return static_cast<int>(l);
  throw ConfigError("variable " + v.name + " has no level '" + label + "'");
}

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  out << body;
  if (!out) throw RuntimeError("write failed for " + path);
}

inline json draws_to_json(const std::vector<RetainedDraw>& draws) {
  json arr = json::array();
  for (const auto& d : draws) {
    json jd;
    jd["iteration"] = d.iteration;
    jd["u_prob"] = d.u_prob;
    jd["theta"] = d.theta;
    json oc = json::array();
    for (const auto& v : d.outcome_coefs)
      oc.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    jd["outcome_coefs"] = oc;
    jd["outcome_offsets"] = d.outcome_offsets;
    json ic = json::array();
    for (const auto& v : d.item_coefs)
      ic.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    jd["item_coefs"] = ic;
    arr.push_back(jd);
  }
  return json{{"draws", arr}};
}

inline std::vector<RetainedDraw> draws_from_json(const json& j) {
  std::vector<RetainedDraw> out;
  for (const auto& jd : j.at("draws")) {
    RetainedDraw d;
    d.iteration = field<int>(jd, "iteration", 0);
    d.u_prob = require<double>(jd, "u_prob", "draw");
    d.theta = field<std::vector<double>>(jd, "theta", {});
    for (const auto& v : jd.at("outcome_coefs")) {
      auto vec = v.get<std::vector<double>>();
      d.outcome_coefs.push_back(
          Eigen::Map<const Eigen::VectorXd>(vec.data(), static_cast<int>(vec.size())));
    }
    d.outcome_offsets = jd.at("outcome_offsets").get<std::vector<std::vector<double>>>();
    for (const auto& v : jd.at("item_coefs")) {
      auto vec = v.get<std::vector<double>>();
      d.item_coefs.push_back(
          Eigen::Map<const Eigen::VectorXd>(vec.data(), static_cast<int>(vec.size())));
    }
    out.push_back(std::move(d));
  }
  return out;
}

inline std::string imputation_name(int index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "imp_%03d.csv", index + 1);
  return buf;
}

struct LoadedStore {
  json manifest;
  CsvSchema schema;
  ModelSpec spec;
  json spec_json;
  std::filesystem::path dir;
};

// Open an imputation directory and check the supplied spec file matches the
// one the imputations were drawn under.
inline LoadedStore open_store(const std::string& dir, const std::string& spec_path) {
  LoadedStore st;
  st.dir = dir;
  auto mpath = st.dir / "manifest.json";
  if (!std::filesystem::exists(mpath))
    throw ConfigError(dir + " has no manifest.json; not an imputation directory");
  st.manifest = load_json(mpath.string());
  if (field<std::string>(st.manifest, "format", "") != "mdam-imputations-v1")
    throw ConfigError(dir + ": manifest has an unknown format tag");
  st.spec_json = load_json(spec_path);
  if (spec_hash(st.spec_json) != require<std::string>(st.manifest, "spec_hash", "manifest"))
    throw ConfigError("spec file " + spec_path +
                      " does not match the spec these imputations were drawn under");
  st.schema = schema_from_json(st.spec_json);
  st.spec = modelspec_from_json(st.spec_json);
  return st;
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// impute

inline void run_impute(const RunConfig& cfg) {
  namespace cd = cli_detail;
  namespace fs = std::filesystem;
  if (!cfg.controls.seed_set) throw ConfigError("--seed is required");
  if (cfg.weights_regime != "design" && cfg.weights_regime != "adjusted")
    throw ConfigError("--weights must be 'design' or 'adjusted'");
  if (cfg.out_dir.empty()) throw ConfigError("--out directory is required");

  auto spec_json = cd::load_json(cfg.spec_path);
  CsvSchema schema = cd::schema_from_json(spec_json);
  if (cfg.population_size > 0.0) schema.population_size = cfg.population_size;
  if (schema.population_size <= 0.0)
    throw ConfigError("population size must be given in the spec or via --population-size");
  schema.weight_kind =
      cfg.weights_regime == "design" ? WeightKind::Design : WeightKind::Adjusted;
  ModelSpec spec = cd::modelspec_from_json(spec_json);

  SurveyDataset raw = load_csv(cfg.data_path, schema);
  WeightReport wrep = cfg.weights_regime == "design"
                          ? weights_from_design(raw, schema.population_size)
                          : weights_from_adjusted(raw);
  SurveyDataset ds = with_weights(raw, wrep.weights, WeightKind::Constructed);

  std::vector<AuxMargin> margins;
  if (!cfg.margins_path.empty())
    margins = cd::margins_from_json(cd::load_json(cfg.margins_path), schema.population_size);

  SamplerControls ctl = cfg.controls;
  auto result = ctl.icin ? run_icin(ds, spec, margins, ctl) : run_mdam(ds, spec, margins, ctl);

  fs::create_directories(cfg.out_dir);
  fs::path out(cfg.out_dir);
  nlohmann::json names = nlohmann::json::array();
  for (std::size_t l = 0; l < result.completed.size(); ++l) {
    std::string name = cd::imputation_name(static_cast<int>(l));
    write_csv(result.completed[l], (out / name).string(), schema.weight_column,
              schema.unit_nr_column.empty() ? "unit_nonresponse" : schema.unit_nr_column);
    names.push_back(name);
  }
  cd::write_text((out / "params.json").string(), cd::draws_to_json(result.draws).dump(2) + "\n");

  nlohmann::json wj;
  wj["respondent_weight_sum"] = wrep.respondent_sum;
  wj["nonrespondent_weight"] = wrep.nonrespondent_weight;
  wj["total"] = wrep.total;
  wj["note"] = wrep.note;
  cd::write_text((out / "weights.json").string(), wj.dump(2) + "\n");

  if (ctl.keep_diagnostics) {
    std::string csv = "iteration,parameter,value\n";
    for (const auto& it : result.diagnostics) {
      for (std::size_t g = 0; g < it.margin_draws.size(); ++g)
        csv += std::to_string(it.iteration) + ",margin_draw_" + std::to_string(g) + "," +
               cd::fmt(it.margin_draws[g]) + "\n";
      for (std::size_t g = 0; g < it.target_counts.size(); ++g)
        csv += std::to_string(it.iteration) + ",target_count_" + std::to_string(g) + "," +
               std::to_string(it.target_counts[g]) + "\n";
      for (std::size_t g = 0; g < it.offsets.size(); ++g)
        csv += std::to_string(it.iteration) + ",offset_" + std::to_string(g) + "," +
               cd::fmt(it.offsets[g]) + "\n";
      for (std::size_t g = 0; g < it.completed_totals.size(); ++g)
        csv += std::to_string(it.iteration) + ",completed_total_" + std::to_string(g) + "," +
               cd::fmt(it.completed_totals[g]) + "\n";
      csv += std::to_string(it.iteration) + ",clamp_events," +
             std::to_string(it.clamp_events) + "\n";
    }
    cd::write_text((out / "diagnostics.csv").string(), csv);
  }

  nlohmann::json manifest;
  manifest["format"] = "mdam-imputations-v1";
  manifest["mode"] = ctl.icin ? "icin" : "mdam";
  manifest["measurement_error"] = ctl.measurement_error;
  manifest["seed"] = ctl.seed;
  manifest["iterations"] = ctl.iterations;
  manifest["burnin"] = ctl.burnin;
  manifest["thin"] = ctl.thin;
  manifest["n_imputations"] = result.completed.size();
  manifest["spec_hash"] = cd::spec_hash(spec_json);
  manifest["data_path"] = cfg.data_path;
  manifest["weights"] = cfg.weights_regime;
  manifest["population_size"] = schema.population_size;
  manifest["clamp_events"] = result.clamp_events;
  manifest["ridge_events"] = result.ridge_events;
  manifest["imputations"] = names;
  // Written last: its presence marks the directory complete.
  cd::write_text((out / "manifest.json").string(), manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// analyze

inline void run_analyze(const std::string& dir, const std::string& spec_path,
                        const std::string& estimands_path, const std::string& out_csv) {
  namespace cd = cli_detail;
  auto store = cd::open_store(dir, spec_path);
  CsvSchema schema = store.schema;
  schema.weight_kind = WeightKind::Constructed;
  if (schema.unit_nr_column.empty()) schema.unit_nr_column = "unit_nonresponse";
  schema.population_size = cd::require<double>(store.manifest, "population_size", "manifest");

  std::vector<SurveyDataset> completed;
  for (const auto& name : store.manifest.at("imputations"))
    completed.push_back(load_csv((store.dir / name.get<std::string>()).string(), schema));
  if (completed.size() < 2) throw ConfigError("need at least two imputations to pool");

  auto ej = cd::load_json(estimands_path);
  struct Estimand {
    std::string id, type, variable;
    int level;
    CellCondition subgroup;
  };
  std::vector<Estimand> estimands;
  const auto& arr = ej.is_array() ? ej : ej.at("estimands");
  for (const auto& e : arr) {
    Estimand est;
    est.id = cd::require<std::string>(e, "id", "estimand");
    est.type = cd::require<std::string>(e, "type", "estimand " + est.id);
    if (est.type != "total" && est.type != "proportion")
      throw ConfigError("estimand " + est.id + ": type must be 'total' or 'proportion'");
    est.variable = cd::require<std::string>(e, "variable", "estimand " + est.id);
    int j = completed[0].var_index(est.variable);
    est.level = cd::level_code(completed[0].vars[j],
                               cd::require<std::string>(e, "level", "estimand " + est.id));
    if (e.contains("subgroup")) {
      for (const auto& [var, lab] : e.at("subgroup").items()) {
        int js = completed[0].var_index(var);
        est.subgroup.emplace_back(
            var, cd::level_code(completed[0].vars[js], lab.get<std::string>()));
      }
    }
    estimands.push_back(est);
  }
  if (estimands.empty()) throw ConfigError("no estimands given");

  std::string csv =
      "estimand,qbar,se_total,se_between,df,ci_lo,ci_hi,n_imputations,defined\n";
  for (const auto& est : estimands) {
    std::vector<PointEstimate> per;
    bool defined = true;
    for (const auto& d : completed) {
      try {
        per.push_back(est.type == "total"
                          ? ht_total(d, est.variable, est.level)
                          : weighted_proportion(d, {{est.variable, est.level}}, est.subgroup));
      } catch (const RuntimeError&) {
        defined = false;  // e.g. an empty subgroup in some completed dataset
        break;
      }
    }
    if (!defined) {
      csv += est.id + ",,,,,,," + std::to_string(completed.size()) + ",0\n";
      continue;
    }
    MIEstimate mie = rubin_combine(per);
    csv += est.id + "," + cd::fmt(mie.qbar) + "," + cd::fmt(mie.se_total) + "," +
           cd::fmt(mie.se_between) + "," + cd::fmt(mie.df) + "," + cd::fmt(mie.ci_lo) + "," +
           cd::fmt(mie.ci_hi) + "," + std::to_string(mie.n_imputations) + ",1\n";
  }
  cd::write_text(out_csv, csv);
}

// ---------------------------------------------------------------------------
// simulate

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  namespace cd = cli_detail;
  ScenarioConfig sc;
  sc.population_size = cd::field<int>(j, "population_size", sc.population_size);
  sc.nu0 = cd::field<double>(j, "nu0", sc.nu0);
  sc.alpha0 = cd::field<double>(j, "alpha0", sc.alpha0);
  sc.alpha1 = cd::field<double>(j, "alpha1", sc.alpha1);
  sc.beta0 = cd::field<double>(j, "beta0", sc.beta0);
  sc.beta1 = cd::field<double>(j, "beta1", sc.beta1);
  sc.beta2 = cd::field<double>(j, "beta2", sc.beta2);
  sc.gamma0 = cd::field<double>(j, "gamma0", sc.gamma0);
  sc.gamma1 = cd::field<double>(j, "gamma1", sc.gamma1);
  sc.weight_sigma = cd::field<double>(j, "weight_sigma", sc.weight_sigma);
  sc.target_sample_size = cd::field<double>(j, "target_sample_size", sc.target_sample_size);
  sc.replicates = cd::field<int>(j, "replicates", sc.replicates);
  sc.label = cd::field<std::string>(j, "label", sc.label);
  std::string regime = cd::field<std::string>(j, "regime", "design");
  if (regime != "design" && regime != "adjusted")
    throw ConfigError("regime must be 'design' or 'adjusted'");
  sc.regime = regime == "design" ? WeightRegime::Design : WeightRegime::Adjusted;
  sc.controls.iterations = cd::field<int>(j, "iterations", 2000);
  sc.controls.burnin = cd::field<int>(j, "burnin", 1000);
  sc.controls.thin = cd::field<int>(j, "thin", 20);
  return sc;
}

inline std::string scenario_csv(const ScenarioResult& r) {
  namespace cd = cli_detail;
  std::string csv =
      "estimand,truth,pre_mean,pre_sd,"
      "mdam_mean,mdam_coverage_pct,mdam_emp_sd,mdam_avg_est_sd,mdam_avg_sd_between,"
      "icin_mean,icin_coverage_pct,icin_emp_sd,icin_avg_est_sd,icin_avg_sd_between\n";
  for (const auto& row : r.rows) {
    csv += row.name + "," + cd::fmt(row.truth) + "," + cd::fmt(row.pre_mean) + "," +
           cd::fmt(row.pre_sd);
    for (const MethodMetrics* m : {&row.mdam, &row.icin})
      csv += "," + cd::fmt(m->mean_estimate) + "," + cd::fmt(m->coverage_pct) + "," +
             cd::fmt(m->empirical_sd) + "," + cd::fmt(m->avg_est_sd) + "," +
             cd::fmt(m->avg_sd_between);
    csv += "\n";
  }
  return csv;
}

inline void run_simulate(const std::string& config_path, const std::string& scenarios,
                         std::uint64_t seed, bool seed_set, const std::string& out_dir,
                         int threads, bool full) {
  namespace cd = cli_detail;
  namespace fs = std::filesystem;
  if (!seed_set) throw ConfigError("--seed is required");
  if (out_dir.empty()) throw ConfigError("--out directory is required");

  ScenarioConfig base =
      config_path.empty() ? ScenarioConfig{} : scenario_from_json(cd::load_json(config_path));
  if (config_path.empty()) {
    base.controls.iterations = 2000;
    base.controls.burnin = 1000;
    base.controls.thin = 20;
  }
  base.seed = seed;
  base.controls.seed_set = true;
  base.n_threads = threads;
  if (full) {
    base.replicates = 1000;
    base.controls.iterations = 10000;
    base.controls.burnin = 5000;
    base.controls.thin = 100;
    std::cerr << "full-fidelity mode: 1000 replicates at 10000/5000/100; "
                 "expect a multi-hour run\n";
  }

  std::vector<ScenarioConfig> todo;
  if (scenarios == "all") {
    todo = scenario_grid(base);
  } else if (scenarios.size() == 1 && scenarios[0] >= 'a' && scenarios[0] <= 'h') {
    todo = {scenario_grid(base)[scenarios[0] - 'a']};
  } else if (scenarios.empty()) {
    todo = {base};
  } else {
    throw ConfigError("--scenarios must be 'all' or a label a..h");
  }

  fs::create_directories(out_dir);
  for (const auto& sc : todo) {
    ScenarioResult r = run_scenario(sc);
    fs::path out(out_dir);
    cd::write_text((out / ("scenario_" + sc.label + ".csv")).string(), scenario_csv(r));
    nlohmann::json meta;
    meta["label"] = sc.label;
    meta["alpha1"] = sc.alpha1;
    meta["beta1"] = sc.beta1;
    meta["beta2"] = sc.beta2;
    meta["regime"] = sc.regime == WeightRegime::Design ? "design" : "adjusted";
    meta["replicates_done"] = r.replicates_done;
    meta["failures"] = r.failures;
    meta["mean_clamp_events"] = r.mean_clamp_events;
    meta["ridge_events"] = r.ridge_events;
    meta["seed"] = sc.seed;
    cd::write_text((out / ("scenario_" + sc.label + "_run.json")).string(),
                   meta.dump(2) + "\n");
  }
}

// ---------------------------------------------------------------------------
// ppc

inline void run_ppc(const std::string& dir, const std::string& spec_path,
                    const std::string& data_override, const std::string& quantities_path,
                    const std::string& focal, std::uint64_t seed, bool seed_set,
                    const std::string& out_csv) {
  namespace cd = cli_detail;
  if (!seed_set) throw ConfigError("--seed is required");
  auto store = cd::open_store(dir, spec_path);

  CsvSchema schema = store.schema;
  schema.population_size = cd::require<double>(store.manifest, "population_size", "manifest");
  std::string weights_regime = cd::require<std::string>(store.manifest, "weights", "manifest");
  schema.weight_kind =
      weights_regime == "design" ? WeightKind::Design : WeightKind::Adjusted;
  std::string data_path = data_override.empty()
                              ? cd::require<std::string>(store.manifest, "data_path", "manifest")
                              : data_override;
  SurveyDataset ds = load_csv(data_path, schema);

  auto draws =
      cd::draws_from_json(cd::load_json((store.dir / "params.json").string()));

  std::vector<PPCQuantity> quantities;
  if (!quantities_path.empty()) {
    auto qj = cd::load_json(quantities_path);
    if (qj.contains("focal")) {
      quantities = default_quantities(ds, qj.at("focal").get<std::string>());
    } else {
      const auto& arr = qj.is_array() ? qj : qj.at("quantities");
      for (const auto& q : arr) {
        PPCQuantity pq;
        pq.variable = cd::require<std::string>(q, "variable", "quantity");
        int j = ds.var_index(pq.variable);
        pq.level = cd::level_code(ds.vars[j],
                                  cd::require<std::string>(q, "level", "quantity"));
        pq.given_variable = cd::field<std::string>(q, "given_variable", "");
        if (!pq.given_variable.empty()) {
          int jg = ds.var_index(pq.given_variable);
          pq.given_level = cd::level_code(
              ds.vars[jg], cd::require<std::string>(q, "given_level", "quantity"));
        }
        pq.id = cd::field<std::string>(q, "id", "");
        if (pq.id.empty()) {
          pq.id = pq.variable + "=" + ds.vars[j].levels[pq.level];
          if (!pq.given_variable.empty())
            pq.id += "|" + pq.given_variable + "=" +
                     ds.vars[ds.var_index(pq.given_variable)].levels[pq.given_level];
        }
        quantities.push_back(pq);
      }
    }
  } else if (!focal.empty()) {
    quantities = default_quantities(ds, focal);
  } else {
    throw ConfigError("give --quantities or --focal to choose what to check");
  }

  RngStream rng(seed, 0);
  PPCResult res = ppc_intervals(draws, ds, store.spec, quantities, rng);

  std::string csv = "quantity,observed,lower,upper,contained,undefined,empty_draws\n";
  for (const auto& q : res.quantities) {
    csv += "\"" + q.id + "\",";
    csv += std::isnan(q.observed) ? "" : cd::fmt(q.observed);
    csv += ",";
    csv += q.undefined ? "" : cd::fmt(q.lower);
    csv += ",";
    csv += q.undefined ? "" : cd::fmt(q.upper);
    csv += ",";
    csv += q.contained ? "1" : "0";
    csv += ",";
    csv += q.undefined ? "1" : "0";
    csv += "," + std::to_string(q.empty_draws) + "\n";
  }
  cd::write_text(out_csv, csv);
}

// ---------------------------------------------------------------------------
// dispatch

namespace cli_detail {

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace cli_detail

inline int cmd_impute(const RunConfig& cfg) {
  return cli_detail::guarded([&] { run_impute(cfg); });
}

inline int cmd_analyze(const std::string& dir, const std::string& spec_path,
                       const std::string& estimands_path, const std::string& out_csv) {
  return cli_detail::guarded([&] { run_analyze(dir, spec_path, estimands_path, out_csv); });
}

inline int cmd_simulate(const std::string& config_path, const std::string& scenarios,
                        std::uint64_t seed, bool seed_set, const std::string& out_dir,
                        int threads, bool full) {
  return cli_detail::guarded(
      [&] { run_simulate(config_path, scenarios, seed, seed_set, out_dir, threads, full); });
}

inline int cmd_ppc(const std::string& dir, const std::string& spec_path,
                   const std::string& data_override, const std::string& quantities_path,
                   const std::string& focal, std::uint64_t seed, bool seed_set,
                   const std::string& out_csv) {
  return cli_detail::guarded([&] {
    run_ppc(dir, spec_path, data_override, quantities_path, focal, seed, seed_set, out_csv);
  });
}

inline int cli_main(int argc, char** argv) {
  CLI::App app{"Multiple imputation for categorical survey data with unit and item "
               "nonresponse constrained by auxiliary population margins"};
  app.require_subcommand(1);

  // impute
  auto* imp = app.add_subcommand("impute", "Run the sampler and store imputations");
  RunConfig cfg;
  bool icin = false, me = false, diag = false;
  imp->add_option("--data", cfg.data_path, "Survey CSV")->required();
  imp->add_option("--spec", cfg.spec_path, "Schema and model-spec JSON")->required();
  imp->add_option("--margins", cfg.margins_path, "Margins JSON");
  imp->add_option("--weights", cfg.weights_regime, "Input weight kind: design|adjusted")
      ->default_val("design");
  imp->add_option("--population-size", cfg.population_size, "Override the spec's N");
  imp->add_option("--iterations", cfg.controls.iterations, "Total sampler scans");
  imp->add_option("--burnin", cfg.controls.burnin, "Discarded initial scans");
  imp->add_option("--thin", cfg.controls.thin, "Keep every thin-th scan after burnin");
  auto* imp_seed = imp->add_option("--seed", cfg.controls.seed, "RNG seed (required)");
  imp->add_flag("--icin", icin, "Skip margin constraints (comparison mode)");
  imp->add_flag("--measurement-error", me, "Enable the reporting-error updates");
  imp->add_flag("--diagnostics", diag, "Write per-iteration trace CSV");
  imp->add_option("--out", cfg.out_dir, "Output directory")->required();
  imp->add_option("--threads", cfg.threads, "Worker cap (single chain: unused)");

  // analyze
  auto* ana = app.add_subcommand("analyze", "Pool estimands over an imputation directory");
  std::string ana_dir, ana_spec, ana_est, ana_out;
  ana->add_option("--in", ana_dir, "Imputation directory")->required();
  ana->add_option("--spec", ana_spec, "Spec JSON (hash-checked against the manifest)")
      ->required();
  ana->add_option("--estimands", ana_est, "Estimand list JSON")->required();
  ana->add_option("--out", ana_out, "Results CSV path")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Repeated-sampling comparison study");
  std::string sim_cfg, sim_scen, sim_out;
  std::uint64_t sim_seed = 0;
  int sim_threads = 1;
  bool sim_full = false;
  sim->add_option("--config", sim_cfg, "Scenario JSON (defaults used when omitted)");
  sim->add_option("--scenarios", sim_scen, "'all' or one label a..h");
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "RNG seed (required)");
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--threads", sim_threads, "Concurrent replicates");
  sim->add_flag("--full", sim_full, "Full-fidelity mode (1000 reps, 10000/5000/100)");

  // ppc
  auto* ppc = app.add_subcommand("ppc", "Posterior predictive interval checks");
  std::string ppc_dir, ppc_spec, ppc_data, ppc_q, ppc_focal, ppc_out;
  std::uint64_t ppc_seed = 0;
  ppc->add_option("--in", ppc_dir, "Imputation directory")->required();
  ppc->add_option("--spec", ppc_spec, "Spec JSON (hash-checked against the manifest)")
      ->required();
  ppc->add_option("--data", ppc_data, "Original data CSV (defaults to the manifest's path)");
  ppc->add_option("--quantities", ppc_q, "Quantities JSON");
  ppc->add_option("--focal", ppc_focal, "Default quantities around this variable");
  auto* ppc_seed_opt = ppc->add_option("--seed", ppc_seed, "RNG seed (required)");
  ppc->add_option("--out", ppc_out, "PPC CSV path")->required();
  ppc->add_option("--threads", sim_threads, "Worker cap (replication is sequential)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help/version exit 0; bad usage is validation
  }

  if (imp->parsed()) {
    cfg.controls.seed_set = imp_seed->count() > 0;
    cfg.controls.icin = icin;
    cfg.controls.measurement_error = me;
    cfg.controls.keep_diagnostics = diag;
    return cmd_impute(cfg);
  }
  if (ana->parsed()) return cmd_analyze(ana_dir, ana_spec, ana_est, ana_out);
  if (sim->parsed())
    return cmd_simulate(sim_cfg, sim_scen, sim_seed, sim_seed_opt->count() > 0, sim_out,
                        sim_threads, sim_full);
  if (ppc->parsed())
    return cmd_ppc(ppc_dir, ppc_spec, ppc_data, ppc_q, ppc_focal, ppc_seed,
                   ppc_seed_opt->count() > 0, ppc_out);
  return 1;
}

}  // namespace mdam
