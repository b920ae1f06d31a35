#include <catch2/catch_amalgamated.hpp>
#include <numeric>

#include "mdam/weights.hpp"

using namespace mdam;

namespace {

SurveyDataset simple(WeightKind kind, std::vector<double> w, std::vector<std::uint8_t> u) {
  SurveyDataset ds;
  ds.vars = {{"x", {"a", "b"}, VarRole::MarginBacked}};
  ds.unit_nr = u;
  ds.weights = std::move(w);
  ds.cells.assign(ds.unit_nr.size(), 0);
  for (std::size_t i = 0; i < ds.unit_nr.size(); ++i)
    if (ds.unit_nr[i]) ds.cells[i] = kMissing;
  ds.population_size = 1000.0;
  ds.weight_kind = kind;
  ds.validate();
  return ds;
}

double total(const std::vector<double>& w) {
  return std::accumulate(w.begin(), w.end(), 0.0);
}

}  // namespace

TEST_CASE("design regime splits the leftover mass evenly and hits N exactly") {
  auto ds = simple(WeightKind::Design, {100.0, 240.0, 60.0, 0.0, 0.0}, {0, 0, 0, 1, 1});
  auto rep = weights_from_design(ds, 1000.0);
  CHECK(rep.nonrespondent_weight == Catch::Approx((1000.0 - 400.0) / 2).epsilon(1e-12));
  CHECK(std::abs(total(rep.weights) - 1000.0) < 1e-9);
  CHECK(rep.weights[0] == 100.0);
  CHECK(rep.weights[3] == rep.weights[4]);
  CHECK_FALSE(rep.sum_warning);
}

TEST_CASE("design regime refuses negative nonrespondent weights") {
  auto ds = simple(WeightKind::Design, {600.0, 500.0, 0.0}, {0, 0, 1});
  CHECK_THROWS_AS(weights_from_design(ds, 1000.0), RuntimeError);
}

TEST_CASE("design regime with no nonrespondents only warns on a sum mismatch") {
  auto ds = simple(WeightKind::Design, {600.0, 300.0}, {0, 0});
  auto rep = weights_from_design(ds, 1000.0);
  CHECK(rep.sum_warning);
  CHECK(rep.weights == ds.weights);
  auto exact = simple(WeightKind::Design, {600.0, 400.0}, {0, 0});
  CHECK_FALSE(weights_from_design(exact, 1000.0).sum_warning);
}

TEST_CASE("adjusted regime preserves the adjusted-weight total exactly") {
  auto ds = simple(WeightKind::Adjusted, {120.0, 330.0, 50.0, 0.0, 0.0}, {0, 0, 0, 1, 1});
  auto rep = weights_from_adjusted(ds);
  double s = 120.0 + 330.0 + 50.0;
  // Hand check: shrink factor 1 - 2/5, shared nonrespondent weight s/5.
  CHECK(rep.weights[0] == Catch::Approx(120.0 * 0.6).epsilon(1e-14));
  CHECK(rep.nonrespondent_weight == Catch::Approx(s / 5.0).epsilon(1e-14));
  CHECK(std::abs(total(rep.weights) - s) < 1e-9);
}

TEST_CASE("adjusted regime can rescale to the population size instead") {
  auto ds = simple(WeightKind::Adjusted, {120.0, 330.0, 50.0, 0.0, 0.0}, {0, 0, 0, 1, 1});
  auto rep = weights_from_adjusted(ds, 1000.0);
  CHECK(std::abs(total(rep.weights) - 1000.0) < 1e-9);
  CHECK(rep.weights[0] == Catch::Approx(120.0 * 0.6).epsilon(1e-14));
}

TEST_CASE("regime functions check the incoming weight kind") {
  auto ds = simple(WeightKind::Adjusted, {10.0, 0.0}, {0, 1});
  CHECK_THROWS_AS(weights_from_design(ds, 100.0), ConfigError);
  auto dd = simple(WeightKind::Design, {10.0, 0.0}, {0, 1});
  CHECK_THROWS_AS(weights_from_adjusted(dd), ConfigError);
}

TEST_CASE("weighting-class adjustment divides by the class response rate") {
  std::vector<double> w = {2.0, 2.0, 3.0, 1.0};
  std::vector<int> cls = {0, 0, 1, 1};
  std::vector<std::uint8_t> unr = {0, 1, 0, 0};
  auto adj = weighting_class_adjust(w, cls, unr, 2);
  CHECK(adj.response_rates[0] == Catch::Approx(0.5));
  CHECK(adj.response_rates[1] == Catch::Approx(1.0));
  CHECK(adj.weights[0] == Catch::Approx(4.0));
  CHECK(adj.weights[1] == 0.0);  // unit rows carry no adjusted weight
  CHECK(adj.weights[2] == Catch::Approx(3.0));

  // The adjustment preserves each class's design-weight total.
  for (int c = 0; c < 2; ++c) {
    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (cls[i] == c) before += w[i];
      if (cls[i] == c && !unr[i]) after += adj.weights[i];
    }
    CHECK(after == Catch::Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("weighting-class adjustment rejects classes without respondents") {
  std::vector<double> w = {2.0, 2.0};
  std::vector<int> cls = {0, 1};
  std::vector<std::uint8_t> unr = {0, 1};
  CHECK_THROWS_AS(weighting_class_adjust(w, cls, unr, 2), RuntimeError);
  // A class absent from the sample entirely is fine.
  std::vector<int> cls2 = {0, 0};
  CHECK_NOTHROW(weighting_class_adjust(w, cls2, unr, 3));
}

TEST_CASE("dataset wrapper requires the class variable everywhere") {
  SurveyDataset ds;
  ds.vars = {{"c", {"u", "v"}, VarRole::MarginFree}};
  ds.cells = {0, kMissing};
  ds.unit_nr = {0, 1};
  ds.weights = {2.0, 1.0};
  ds.population_size = 10.0;
  CHECK_THROWS_AS(weighting_class_adjust(ds, "c"), ConfigError);
}
