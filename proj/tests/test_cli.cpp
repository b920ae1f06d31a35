// End-to-end checks of the command-line layer: impute writes a complete,
// bit-reproducible artifact directory; analyze pools stored imputations and
// refuses mismatched or incomplete stores; simulate replays scenario tables
// byte-for-byte; ppc emits interval rows.  Fixtures live under the system
// temp directory and are rebuilt once per test process.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mdam/cli.hpp"

using namespace mdam;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double invlogit(double e) { return 1.0 / (1.0 + std::exp(-e)); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << body;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string line; std::getline(ss, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> out;
  std::string f;
  for (char c : line) {
    if (c == ',') {
      out.push_back(f);
      f.clear();
    } else if (c != '"') {
      f += c;
    }
  }
  out.push_back(f);
  return out;
}

int run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> hold(args);
  std::vector<char*> argv;
  for (auto& s : hold) argv.push_back(s.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

// Two binary variables: A is margin-backed, B depends on A and carries item
// nonresponse; about a fifth of rows are unit-nonresponse shells.  The store
// is drawn once at 220/20/2 so that the same directory serves the analyze
// and ppc cases (100 imputations and retained draws).
struct CliFixture {
  fs::path root, data_csv, spec_json, margins_json, estimands_json, quantities_json;
  fs::path store;        // margin-constrained run, 100 imputations
  fs::path small_store;  // no-margin run, 20 imputations
  json spec;
};

const CliFixture& fixture() {
  static CliFixture fx = [] {
    CliFixture f;
    f.root = fs::temp_directory_path() / "mdam_cli_fixture";
    fs::remove_all(f.root);
    fs::create_directories(f.root);

    std::string csv = "A,B,w,unr\n";
    RngStream rng(5150, 0);
    for (int i = 0; i < 360; ++i) {
      bool unit = rng.uniform() < 0.2;
      int a = rng.uniform() < 0.55 ? 1 : 0;
      int b = rng.uniform() < invlogit(-0.3 + 0.8 * a) ? 1 : 0;
      bool miss_b = rng.uniform() < 0.15;
      if (unit)
        csv += ",,,1\n";
      else
        csv += std::to_string(a) + "," + (miss_b ? "" : std::to_string(b)) + ",10,0\n";
    }
    f.data_csv = f.root / "data.csv";
    spit(f.data_csv, csv);

    f.spec = json{
        {"population_size", 3600},
        {"weight_column", "w"},
        {"unit_nr_column", "unr"},
        {"variables",
         json::array({json{{"name", "A"},
                           {"levels", json::array({"0", "1"})},
                           {"margin_backed", true}},
                      json{{"name", "B"}, {"levels", json::array({"0", "1"})}}})},
        {"outcomes",
         json::array({json{{"variable", "A"}, {"mains", json::array()}},
                      json{{"variable", "B"}, {"mains", json::array({"A"})}}})},
        {"item_models", json::array({json{{"variable", "B"}, {"mains", json::array({"A"})}}})}};
    f.spec_json = f.root / "spec.json";
    spit(f.spec_json, f.spec.dump(2) + "\n");

    // Margin entries cover the non-baseline levels only; level "0" is implied.
    json margins{{"margins", json::array({json{{"variable", "A"},
                                               {"proportions", json::array({0.55})},
                                               {"variances", json::array({900.0})},
                                               {"source", "census"}}})}};
    f.margins_json = f.root / "margins.json";
    spit(f.margins_json, margins.dump(2) + "\n");

    json est{{"estimands",
              json::array(
                  {json{{"id", "t_A1"}, {"type", "total"}, {"variable", "A"}, {"level", "1"}},
                   json{{"id", "p_B1"}, {"type", "proportion"}, {"variable", "B"}, {"level", "1"}},
                   json{{"id", "p_B1_A1"},
                        {"type", "proportion"},
                        {"variable", "B"},
                        {"level", "1"},
                        {"subgroup", json{{"A", "1"}}}}})}};
    f.estimands_json = f.root / "estimands.json";
    spit(f.estimands_json, est.dump(2) + "\n");

    f.quantities_json = f.root / "quantities.json";
    spit(f.quantities_json, json{{"focal", "B"}}.dump() + "\n");

    RunConfig cfg;
    cfg.data_path = f.data_csv.string();
    cfg.spec_path = f.spec_json.string();
    cfg.margins_path = f.margins_json.string();
    cfg.controls.iterations = 220;
    cfg.controls.burnin = 20;
    cfg.controls.thin = 2;
    cfg.controls.seed = 20260815;
    cfg.controls.seed_set = true;
    f.store = f.root / "store";
    cfg.out_dir = f.store.string();
    run_impute(cfg);

    cfg.controls.iterations = 60;
    cfg.controls.thin = 2;  // 20 retained draws: below the ppc floor
    cfg.controls.icin = true;
    f.small_store = f.root / "store_icin";
    cfg.out_dir = f.small_store.string();
    run_impute(cfg);

    return f;
  }();
  return fx;
}

}  // namespace

TEST_CASE("impute writes a complete artifact directory") {
  const auto& fx = fixture();

  SECTION("all artifacts present and consistent") {
    REQUIRE(fs::exists(fx.store / "manifest.json"));
    REQUIRE(fs::exists(fx.store / "params.json"));
    REQUIRE(fs::exists(fx.store / "weights.json"));
    json man = json::parse(slurp(fx.store / "manifest.json"));
    CHECK(man.at("format") == "mdam-imputations-v1");
    CHECK(man.at("mode") == "mdam");
    CHECK(man.at("measurement_error") == false);
    CHECK(man.at("n_imputations") == 100);
    CHECK(man.at("seed") == 20260815);
    CHECK(man.at("spec_hash") == cli_detail::spec_hash(fx.spec));
    REQUIRE(man.at("imputations").size() == 100);
    for (const auto& name : man.at("imputations"))
      REQUIRE(fs::exists(fx.store / name.get<std::string>()));

    json w = json::parse(slurp(fx.store / "weights.json"));
    CHECK(w.at("total").get<double>() == Catch::Approx(3600.0).margin(1e-6));
    CHECK(w.at("respondent_weight_sum").get<double>() < 3600.0);
    CHECK(w.at("nonrespondent_weight").get<double>() > 0.0);
  }

  SECTION("completed datasets reload with no missing cells") {
    CsvSchema schema = cli_detail::schema_from_json(fx.spec);
    schema.weight_kind = WeightKind::Constructed;
    SurveyDataset imp = load_csv((fx.store / "imp_001.csv").string(), schema);
    REQUIRE(imp.n() == 360);
    int n_unit = 0;
    for (int i = 0; i < imp.n(); ++i) {
      for (int j = 0; j < imp.k(); ++j) REQUIRE(imp.cell(i, j) != kMissing);
      n_unit += imp.unit_nr[i];
    }
    CHECK(n_unit > 30);

    json params = json::parse(slurp(fx.store / "params.json"));
    REQUIRE(params.at("draws").size() == 100);
    auto draws = cli_detail::draws_from_json(params);
    CHECK(draws.front().outcome_coefs.size() == 2);
    CHECK(draws.front().outcome_offsets[0].size() == 1);  // A carries a margin offset
  }

  SECTION("same seed replays byte-for-byte") {
    RunConfig cfg;
    cfg.data_path = fx.data_csv.string();
    cfg.spec_path = fx.spec_json.string();
    cfg.margins_path = fx.margins_json.string();
    cfg.controls.iterations = 220;
    cfg.controls.burnin = 20;
    cfg.controls.thin = 2;
    cfg.controls.seed = 20260815;
    cfg.controls.seed_set = true;
    cfg.out_dir = (fx.root / "store_rerun").string();
    run_impute(cfg);
    for (const char* name : {"manifest.json", "params.json", "imp_001.csv", "imp_100.csv"})
      REQUIRE(slurp(fx.store / name) == slurp(fs::path(cfg.out_dir) / name));
  }

  SECTION("no-margin mode is recorded in the manifest") {
    json man = json::parse(slurp(fx.small_store / "manifest.json"));
    CHECK(man.at("mode") == "icin");
    CHECK(man.at("n_imputations") == 20);
  }

  SECTION("diagnostics flag writes the trace table") {
    RunConfig cfg;
    cfg.data_path = fx.data_csv.string();
    cfg.spec_path = fx.spec_json.string();
    cfg.margins_path = fx.margins_json.string();
    cfg.controls.iterations = 40;
    cfg.controls.burnin = 20;
    cfg.controls.thin = 2;
    cfg.controls.seed = 11;
    cfg.controls.seed_set = true;
    cfg.controls.keep_diagnostics = true;
    cfg.out_dir = (fx.root / "store_diag").string();
    run_impute(cfg);
    std::string diag = slurp(fs::path(cfg.out_dir) / "diagnostics.csv");
    CHECK(diag.rfind("iteration,parameter,value\n", 0) == 0);
    CHECK(diag.find("margin_draw_0") != std::string::npos);
    CHECK(diag.find("offset_0") != std::string::npos);
    CHECK(diag.find("clamp_events") != std::string::npos);
  }
}

TEST_CASE("impute validates its inputs") {
  const auto& fx = fixture();
  RunConfig cfg;
  cfg.data_path = fx.data_csv.string();
  cfg.spec_path = fx.spec_json.string();
  cfg.margins_path = fx.margins_json.string();
  cfg.controls.iterations = 40;
  cfg.controls.burnin = 20;
  cfg.controls.thin = 2;
  cfg.controls.seed = 3;
  cfg.controls.seed_set = true;
  cfg.out_dir = (fx.root / "store_invalid").string();

  SECTION("margin-backed variable without a margin is refused") {
    cfg.margins_path.clear();
    REQUIRE_THROWS_WITH(run_impute(cfg),
                        Catch::Matchers::ContainsSubstring("A has no margin"));
    CHECK(cmd_impute(cfg) == 1);
  }

  SECTION("seed is mandatory") {
    cfg.controls.seed_set = false;
    REQUIRE_THROWS_AS(run_impute(cfg), ConfigError);
    CHECK(cmd_impute(cfg) == 1);
  }

  SECTION("weight regime must be design or adjusted") {
    cfg.weights_regime = "raked";
    CHECK(cmd_impute(cfg) == 1);
  }

  SECTION("unreadable data path is a validation failure") {
    cfg.data_path = (fx.root / "no_such.csv").string();
    CHECK(cmd_impute(cfg) == 1);
  }

  SECTION("impossible population size aborts at runtime") {
    cfg.population_size = 100.0;  // below the respondents' weight sum
    CHECK(cmd_impute(cfg) == 2);
  }
}

TEST_CASE("analyze pools estimands over a store") {
  const auto& fx = fixture();
  fs::path out = fx.root / "results.csv";
  run_analyze(fx.store.string(), fx.spec_json.string(), fx.estimands_json.string(),
              out.string());

  auto rows = lines_of(slurp(out));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "estimand,qbar,se_total,se_between,df,ci_lo,ci_hi,n_imputations,defined");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    auto f = fields_of(rows[r]);
    REQUIRE(f.size() == 9);
    CHECK(f[7] == "100");
    CHECK(f[8] == "1");
    double qbar = std::stod(f[1]);
    CHECK(std::stod(f[5]) < qbar);
    CHECK(qbar < std::stod(f[6]));
  }
  auto f1 = fields_of(rows[1]);
  CHECK(f1[0] == "t_A1");
  CHECK(std::stod(f1[1]) > 1200.0);  // margin centers the total near .55 * 3600
  CHECK(std::stod(f1[1]) < 2700.0);
  auto f2 = fields_of(rows[2]);
  CHECK(f2[0] == "p_B1");
  CHECK(std::stod(f2[1]) > 0.25);
  CHECK(std::stod(f2[1]) < 0.85);

  SECTION("spec with a different hash is refused") {
    json other = fx.spec;
    other["population_size"] = 3601;
    fs::path other_path = fx.root / "spec_other.json";
    spit(other_path, other.dump(2) + "\n");
    REQUIRE_THROWS_WITH(
        run_analyze(fx.store.string(), other_path.string(), fx.estimands_json.string(),
                    (fx.root / "x.csv").string()),
        Catch::Matchers::ContainsSubstring("does not match"));
    CHECK(cmd_analyze(fx.store.string(), other_path.string(), fx.estimands_json.string(),
                      (fx.root / "x.csv").string()) == 1);
  }

  SECTION("directory without a manifest is refused") {
    fs::path bare = fx.root / "not_a_store";
    fs::create_directories(bare);
    CHECK(cmd_analyze(bare.string(), fx.spec_json.string(), fx.estimands_json.string(),
                      (fx.root / "x.csv").string()) == 1);
  }

  SECTION("unknown manifest format tag is refused") {
    fs::path odd = fx.root / "odd_store";
    fs::create_directories(odd);
    spit(odd / "manifest.json", json{{"format", "other"}}.dump() + "\n");
    CHECK(cmd_analyze(odd.string(), fx.spec_json.string(), fx.estimands_json.string(),
                      (fx.root / "x.csv").string()) == 1);
  }
}

TEST_CASE("analyze flags estimands undefined in some imputation") {
  const auto& fx = fixture();
  fs::path dir = fx.root / "handmade_store";
  fs::create_directories(dir);

  json spec{{"population_size", 30},
            {"weight_column", "w"},
            {"unit_nr_column", "unr"},
            {"variables",
             json::array({json{{"name", "A"}, {"levels", json::array({"0", "1"})}},
                          json{{"name", "B"}, {"levels", json::array({"0", "1"})}}})},
            {"outcomes",
             json::array({json{{"variable", "A"}},
                          json{{"variable", "B"}, {"mains", json::array({"A"})}}})}};
  fs::path spec_path = fx.root / "spec_handmade.json";
  spit(spec_path, spec.dump(2) + "\n");

  // Level A=1 never occurs, so any estimand conditioned on it has an empty
  // denominator in every completed dataset.
  std::string imp = "A,B,w,unr\n";
  for (int i = 0; i < 6; ++i)
    imp += "0," + std::to_string(i % 2) + ",5,0\n";
  spit(dir / "imp_001.csv", imp);
  spit(dir / "imp_002.csv", imp);

  json man{{"format", "mdam-imputations-v1"},
           {"mode", "mdam"},
           {"spec_hash", cli_detail::spec_hash(spec)},
           {"population_size", 30.0},
           {"weights", "design"},
           {"data_path", "unused.csv"},
           {"imputations", json::array({"imp_001.csv", "imp_002.csv"})}};
  spit(dir / "manifest.json", man.dump(2) + "\n");

  json est{{"estimands",
            json::array({json{{"id", "pB1"}, {"type", "proportion"}, {"variable", "B"},
                              {"level", "1"}},
                         json{{"id", "pB1_A1"},
                              {"type", "proportion"},
                              {"variable", "B"},
                              {"level", "1"},
                              {"subgroup", json{{"A", "1"}}}}})}};
  fs::path est_path = fx.root / "estimands_handmade.json";
  spit(est_path, est.dump(2) + "\n");

  fs::path out = fx.root / "results_handmade.csv";
  run_analyze(dir.string(), spec_path.string(), est_path.string(), out.string());
  auto rows = lines_of(slurp(out));
  REQUIRE(rows.size() == 3);
  auto defined = fields_of(rows[1]);
  CHECK(defined[0] == "pB1");
  CHECK(defined[8] == "1");
  CHECK(std::stod(defined[1]) == Catch::Approx(0.5));
  CHECK(rows[2] == "pB1_A1,,,,,,,2,0");
}

TEST_CASE("simulate writes scenario tables and replays bit-identically") {
  const auto& fx = fixture();
  json cfg{{"population_size", 6000}, {"target_sample_size", 400}, {"replicates", 3},
           {"iterations", 120},       {"burnin", 20},              {"thin", 5}};
  fs::path cfg_path = fx.root / "scenario_desk.json";
  spit(cfg_path, cfg.dump(2) + "\n");

  fs::path out1 = fx.root / "sim1";
  run_simulate(cfg_path.string(), "", 424242, true, out1.string(), 2, false);
  std::string table = slurp(out1 / "scenario_a.csv");
  auto rows = lines_of(table);
  REQUIRE(rows.size() == 14);  // header + 13 estimand rows
  CHECK(rows[0].rfind("estimand,truth,pre_mean,pre_sd,mdam_mean,", 0) == 0);
  for (std::size_t r = 1; r < rows.size(); ++r) REQUIRE(fields_of(rows[r]).size() == 14);

  json meta = json::parse(slurp(out1 / "scenario_a_run.json"));
  CHECK(meta.at("label") == "a");
  CHECK(meta.at("replicates_done") == 3);
  CHECK(meta.at("failures") == 0);
  CHECK(meta.at("seed") == 424242);

  SECTION("seed replay matches byte-for-byte") {
    fs::path out2 = fx.root / "sim2";
    run_simulate(cfg_path.string(), "", 424242, true, out2.string(), 1, false);
    CHECK(slurp(out2 / "scenario_a.csv") == table);
    CHECK(slurp(out2 / "scenario_a_run.json") == slurp(out1 / "scenario_a_run.json"));
  }

  SECTION("scenario label selection and validation") {
    CHECK(cmd_simulate(cfg_path.string(), "z", 1, true, (fx.root / "sim_bad").string(), 1,
                       false) == 1);
    CHECK(cmd_simulate(cfg_path.string(), "", 1, false, (fx.root / "sim_bad").string(), 1,
                       false) == 1);
  }
}

TEST_CASE("ppc emits one interval row per quantity") {
  const auto& fx = fixture();
  fs::path out = fx.root / "ppc.csv";
  run_ppc(fx.store.string(), fx.spec_json.string(), "", fx.quantities_json.string(), "",
          8086, true, out.string());

  auto rows = lines_of(slurp(out));
  REQUIRE(rows.size() == 9);  // header + 4 marginals + 4 conditionals on the focal
  CHECK(rows[0] == "quantity,observed,lower,upper,contained,undefined,empty_draws");
  int contained = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    auto f = fields_of(rows[r]);
    REQUIRE(f.size() == 7);
    CHECK(f[5] == "0");  // every quantity is well-populated here
    double lo = std::stod(f[2]), hi = std::stod(f[3]), obs = std::stod(f[1]);
    CHECK(lo <= hi);
    CHECK(obs >= 0.0);
    CHECK(obs <= 100.0);
    contained += f[4] == "1";
  }
  CHECK(contained >= 6);

  SECTION("--focal shorthand produces the identical table") {
    fs::path out2 = fx.root / "ppc_focal.csv";
    run_ppc(fx.store.string(), fx.spec_json.string(), "", "", "B", 8086, true,
            out2.string());
    CHECK(slurp(out2) == slurp(out));
  }

  SECTION("a store with too few retained draws is refused") {
    REQUIRE_THROWS_WITH(run_ppc(fx.small_store.string(), fx.spec_json.string(), "",
                                fx.quantities_json.string(), "", 1, true,
                                (fx.root / "ppc_small.csv").string()),
                        Catch::Matchers::ContainsSubstring("at least 100"));
    CHECK(cmd_ppc(fx.small_store.string(), fx.spec_json.string(), "",
                  fx.quantities_json.string(), "", 1, true,
                  (fx.root / "ppc_small.csv").string()) == 1);
  }
}

// The shipped example configuration must stay loadable and internally
// consistent: five variables with margins on three, the trigger/forced rule,
// and the reporting-error block over the three education levels.
TEST_CASE("shipped example configs parse and validate") {
  fs::path dir = fs::path(MDAM_CONFIGS_DIR) / "cps_turnout";
  json spec_json = cli_detail::load_json((dir / "spec.json").string());
  CsvSchema schema = cli_detail::schema_from_json(spec_json);
  ModelSpec spec = cli_detail::modelspec_from_json(spec_json);

  REQUIRE(schema.variables.size() == 5);
  CHECK(schema.variables[0].role == VarRole::MarginBacked);   // sex
  CHECK(schema.variables[1].role == VarRole::MarginBacked);   // race
  CHECK(schema.variables[2].role == VarRole::MarginFree);     // educ
  CHECK(schema.variables[3].role == VarRole::MarginFree);     // age
  CHECK(schema.variables[3].levels.size() == 7);
  CHECK(schema.variables[4].role == VarRole::MarginBacked);   // vote
  REQUIRE(spec.outcomes.size() == 5);
  CHECK(spec.outcomes[4].terms.interactions.size() == 3);
  REQUIRE(spec.item_models.size() == 4);
  for (const auto& im : spec.item_models)
    for (const auto& main : im.terms.mains)
      CHECK(main != im.variable);  // a variable never predicts its own indicator
  // the age indicator's model cannot see vote: missing age forces missing vote
  for (const auto& main : spec.item_models[2].terms.mains) CHECK(main != "vote");
  REQUIRE(spec.rules.size() == 1);
  CHECK(spec.rules[0].trigger_variable == "age");
  CHECK(spec.rules[0].forced_variable == "vote");
  REQUIRE(spec.measurement_error.has_value());
  CHECK(spec.measurement_error->stratum_variable == "educ");
  CHECK(spec.measurement_error->prior_a == std::vector<double>{60, 130, 190});
  CHECK(spec.measurement_error->prior_b == std::vector<double>{940, 870, 810});

  auto margins = cli_detail::margins_from_json(
      cli_detail::load_json((dir / "margins.json").string()), schema.population_size);
  REQUIRE(margins.size() == 3);
  CHECK(margins[0].totals.size() == 1);
  CHECK(margins[1].totals.size() == 3);
  CHECK(margins[2].totals[0] == Catch::Approx(0.49 * schema.population_size));

  schema.weight_kind = WeightKind::Adjusted;
  SurveyDataset raw = load_csv((dir / "demo_data.csv").string(), schema);
  REQUIRE(raw.n() == 1500);
  int n_unit = 0;
  for (int i = 0; i < raw.n(); ++i) n_unit += raw.unit_nr[i];
  CHECK(n_unit > 300);
  SurveyDataset ds = with_weights(raw, weights_from_adjusted(raw).weights,
                                  WeightKind::Constructed);
  REQUIRE_NOTHROW(spec.validate(ds, margins));

  auto est = cli_detail::load_json((dir / "estimands.json").string());
  CHECK(est.at("estimands").size() == 8);
  auto quant = cli_detail::load_json((dir / "quantities.json").string());
  CHECK(quant.at("focal") == "vote");
  REQUIRE_NOTHROW(
      scenario_from_json(cli_detail::load_json(
          (fs::path(MDAM_CONFIGS_DIR) / "scenario_desk.json").string())));
}

TEST_CASE("argv dispatch and exit codes") {
  const auto& fx = fixture();

  SECTION("help and usage errors") {
    CHECK(run_cli({"mdam", "--help"}) == 0);
    CHECK(run_cli({"mdam"}) == 1);
    CHECK(run_cli({"mdam", "transmogrify"}) == 1);
    CHECK(run_cli({"mdam", "impute", "--out", "x"}) == 1);  // missing required options
  }

  SECTION("a full impute invocation wires every flag through") {
    fs::path out = fx.root / "store_argv";
    int code = run_cli({"mdam", "impute", "--data", fx.data_csv.string(), "--spec",
                        fx.spec_json.string(), "--margins", fx.margins_json.string(),
                        "--iterations", "40", "--burnin", "20", "--thin", "2", "--seed",
                        "77", "--out", out.string()});
    REQUIRE(code == 0);
    json man = json::parse(slurp(out / "manifest.json"));
    CHECK(man.at("seed") == 77);
    CHECK(man.at("n_imputations") == 10);
    CHECK(man.at("mode") == "mdam");
  }

  SECTION("omitting --seed fails validation through the parser path") {
    CHECK(run_cli({"mdam", "impute", "--data", fx.data_csv.string(), "--spec",
                   fx.spec_json.string(), "--margins", fx.margins_json.string(), "--out",
                   (fx.root / "store_noseed").string()}) == 1);
  }
}
