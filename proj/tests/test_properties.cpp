#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dddiv/inference.hpp"
#include "helpers.hpp"

using namespace dddiv;
using namespace testutil;

namespace {

PanelDataset grid_dataset(std::mt19937_64& rng, std::size_t per_cell) {
  return grid_two_period(rng, per_cell);
}

}  // namespace

TEST_CASE("per-unit constant shifts leave the estimator bit-identical") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> shift(-8, 8);
  for (int rep = 0; rep < 60; ++rep) {
    auto ds = grid_dataset(rng, 8);
    auto base = triple_wald_did(ds);
    auto base_se = se_and_ci(influence_two_period(ds, base));

    auto records = ds.to_records();
    std::map<std::string, int> unit_shift;
    for (auto& r : records) {
      auto [it, fresh] = unit_shift.try_emplace(r.unit_id, shift(rng));
      (void)fresh;
      r.outcome += it->second;
    }
    auto shifted_ds = PanelDataset::from_records(records, PanelMode::TwoPeriod, 1);
    auto shifted = triple_wald_did(shifted_ds);
    CHECK(shifted.numerator == base.numerator);
    CHECK(shifted.denominator == base.denominator);
    CHECK(shifted.estimate == base.estimate);
    auto shifted_se = se_and_ci(influence_two_period(shifted_ds, shifted));
    CHECK(shifted_se.se == base_se.se);
  }
}

TEST_CASE("additive cohort-plus-group trend shifts cancel exactly in the DDD") {
  std::mt19937_64 rng(103);
  std::uniform_int_distribution<int> shift(-4, 4);
  for (int rep = 0; rep < 60; ++rep) {
    auto ds = grid_dataset(rng, 8);
    auto base = triple_wald_did(ds);

    const int f0 = shift(rng), f1 = shift(rng), g0 = shift(rng), g1 = shift(rng);
    auto records = ds.to_records();
    for (auto& r : records) {
      if (r.time != 1) continue;
      r.outcome += (r.cohort.value() == 1 ? f1 : f0) + (r.group_a == 1 ? g1 : g0);
    }
    auto shifted = triple_wald_did(PanelDataset::from_records(records, PanelMode::TwoPeriod, 1));
    CHECK(shifted.numerator == base.numerator);
    CHECK(shifted.denominator == base.denominator);
    CHECK(shifted.estimate == base.estimate);
  }
}

TEST_CASE("trend shifts cancel per staggered target as well") {
  std::mt19937_64 rng(107);
  std::uniform_int_distribution<int> shift(-4, 4);
  for (int rep = 0; rep < 25; ++rep) {
    std::vector<StaggeredUnit> units;
    const int T = 4;
    for (Cohort c : {Cohort::of(2), Cohort::of(3), Cohort::never()}) {
      for (int a = 0; a <= 1; ++a) {
        for (int k = 0; k < 8; ++k) {
          StaggeredUnit su{c, a, {}, {}};
          int e = c.is_never() ? T + 1 : c.value();
          for (int t = 1; t <= T; ++t) {
            su.y.push_back(grid_value(rng));
            su.d.push_back((a == 1 && k < 4 && t >= e) ? 1 : 0);
          }
          units.push_back(su);
        }
      }
    }
    auto ds = staggered_dataset(units);
    StaggeredTarget target{2, 1, ControlPolicy::NeverExposed};  // pre=1, post=3
    auto base = staggered_triple_wald(ds, target);

    std::map<std::string, int> f;  // by cohort token
    f["2"] = shift(rng);
    f["3"] = shift(rng);
    f["inf"] = shift(rng);
    const int g0 = shift(rng), g1 = shift(rng);
    auto records = ds.to_records();
    for (auto& r : records) {
      if (r.time != target.post_period()) continue;
      r.outcome += f[r.cohort.to_string()] + (r.group_a == 1 ? g1 : g0);
    }
    auto shifted = staggered_triple_wald(
        PanelDataset::from_records(records, PanelMode::Staggered, 1), target);
    CHECK(shifted.numerator == base.numerator);
    CHECK(shifted.estimate == base.estimate);
  }
}

TEST_CASE("A-label swap preserves estimate and se bit for bit") {
  std::mt19937_64 rng(109);
  for (int rep = 0; rep < 60; ++rep) {
    auto ds = grid_dataset(rng, 8);
    auto base = triple_wald_did(ds);
    auto base_se = se_and_ci(influence_two_period(ds, base));

    auto records = ds.to_records();
    for (auto& r : records) r.group_a = 1 - r.group_a;
    auto swapped_ds = PanelDataset::from_records(records, PanelMode::TwoPeriod, 1);
    auto swapped = triple_wald_did(swapped_ds);
    CHECK(swapped.numerator == -base.numerator);
    CHECK(swapped.denominator == -base.denominator);
    CHECK(swapped.estimate == base.estimate);
    CHECK(se_and_ci(influence_two_period(swapped_ds, swapped)).se == base_se.se);
  }
}

TEST_CASE("input row order is irrelevant to every output") {
  std::mt19937_64 rng(113);
  for (int rep = 0; rep < 60; ++rep) {
    // arbitrary (non-grid) outcomes: canonical internal ordering makes this
    // exact regardless of value pattern
    auto ds = random_two_period(rng, 8);
    auto base = triple_wald_did(ds);
    auto base_se = se_and_ci(influence_two_period(ds, base));

    auto records = ds.to_records();
    std::shuffle(records.begin(), records.end(), rng);
    auto shuffled_ds = PanelDataset::from_records(records, PanelMode::TwoPeriod, 1);
    auto shuffled = triple_wald_did(shuffled_ds);
    CHECK(shuffled.numerator == base.numerator);
    CHECK(shuffled.denominator == base.denominator);
    CHECK(shuffled.estimate == base.estimate);
    CHECK(se_and_ci(influence_two_period(shuffled_ds, shuffled)).se == base_se.se);
  }
}

TEST_CASE("power-of-two rescaling is exactly equivariant") {
  std::mt19937_64 rng(127);
  for (double k : {0.25, 0.5, 2.0, 4.0, 8.0}) {
    auto ds = grid_dataset(rng, 8);
    auto base = triple_wald_did(ds);

    auto records = ds.to_records();
    for (auto& r : records) r.outcome *= k;
    auto scaled = triple_wald_did(PanelDataset::from_records(records, PanelMode::TwoPeriod, 1));
    CHECK(scaled.estimate == k * base.estimate);
  }
  SUBCASE("treatment rescaling divides the estimate") {
    auto ds = grid_dataset(rng, 8);
    auto base = triple_wald_did(ds);
    auto records = ds.to_records();
    for (auto& r : records) r.treatment *= 2;
    auto scaled =
        triple_wald_did(PanelDataset::from_records(records, PanelMode::TwoPeriod, 2));
    CHECK(scaled.estimate == base.estimate / 2.0);
  }
}

TEST_CASE("arbitrary-scale multiplication stays within relative tolerance") {
  std::mt19937_64 rng(131);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int rep = 0; rep < 40; ++rep) {
    auto ds = random_two_period(rng, 8);
    auto base = triple_wald_did(ds);
    double k = scale(rng);
    auto records = ds.to_records();
    for (auto& r : records) r.outcome *= k;
    auto scaled = triple_wald_did(PanelDataset::from_records(records, PanelMode::TwoPeriod, 1));
    CHECK(scaled.estimate == doctest::Approx(k * base.estimate).epsilon(1e-12));
  }
}
