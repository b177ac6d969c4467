#include <doctest.h>

#include <cmath>
#include <random>

#include "dddiv/inference.hpp"
#include "dddiv/simulation.hpp"
#include "helpers.hpp"

using namespace dddiv;
using namespace testutil;

namespace {

double abs_sum(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += std::abs(x);
  return s;
}

double signed_sum(const std::vector<double>& xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

DgpSpec conforming_two_period() {
  DgpSpec spec;
  spec.mode = PanelMode::TwoPeriod;
  spec.periods = 2;
  spec.cohort_shares = {{Cohort::of(0), 0.5}, {Cohort::of(1), 0.5}};
  spec.group_a_share = 0.5;
  spec.uptake_base = 0.2;
  spec.complier_share = 0.4;
  spec.unit_effect_sd = 1.0;
  spec.noise_sd = 1.0;
  spec.period_effects = {0.0, 0.3};
  spec.outcome_cohort_slope = {{Cohort::of(1), 0.25}};
  spec.outcome_group_slope = {0.0, 0.15};
  spec.effect_mean = 2.0;
  spec.effect_sd = 1.0;
  spec.seed = 91;
  return spec;
}

}  // namespace

TEST_CASE("influence values sum to zero within accumulation ulps") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    auto ds = random_two_period(rng);
    auto est = triple_wald_did(ds);
    auto iv = influence_two_period(ds, est);
    CHECK(iv.values.size() == ds.n_units());
    double bound = 8.0 * std::numeric_limits<double>::epsilon() * abs_sum(iv.values);
    CHECK(std::abs(signed_sum(iv.values)) <= bound);
  }
}

TEST_CASE("identical units within a cell contribute zero influence") {
  std::vector<UnitSpec> units;
  for (int k = 0; k < 4; ++k) units.push_back({1, 1, 1.0, 2.0, 0, 1});
  for (int k = 0; k < 3; ++k) units.push_back({0, 1, 0.0, 0.5, 0, 0});
  for (int k = 0; k < 3; ++k) units.push_back({1, 0, 0.0, 0.25, 0, 0});
  for (int k = 0; k < 3; ++k) units.push_back({0, 0, 0.0, 0.1, 0, 0});
  auto ds = two_period_dataset(units);
  auto iv = influence_two_period(ds, triple_wald_did(ds));
  for (double v : iv.values) CHECK(v == 0.0);
}

TEST_CASE("two-point influence vector gives unit standard error") {
  InfluenceVector iv;
  iv.values = {-1.0, 1.0};
  iv.point = 0.0;
  auto res = se_and_ci(iv, 0.95);
  CHECK(res.se == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_FALSE(res.degenerate);
}

TEST_CASE("all-zero influence vector is degenerate with zero se") {
  InfluenceVector iv;
  iv.values = {0.0, 0.0, 0.0};
  iv.point = 1.5;
  auto res = se_and_ci(iv, 0.95);
  CHECK(res.se == 0.0);
  CHECK(res.degenerate);
  CHECK(res.ci_lo == 1.5);
  CHECK(res.ci_hi == 1.5);
}

TEST_CASE("normal quantile at 0.975 matches 1.959964") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(5e-7));
}

TEST_CASE("single-unit target is a degenerate sample") {
  InfluenceVector iv;
  iv.values = {0.3};
  CHECK_THROWS_AS(se_and_ci(iv, 0.95), Error);
}

TEST_CASE("confidence interval is centered at the point estimate") {
  std::mt19937_64 rng(23);
  auto ds = random_two_period(rng);
  auto est = triple_wald_did(ds);
  auto res = se_and_ci(influence_two_period(ds, est), 0.9);
  CHECK(res.ci_lo + res.ci_hi == doctest::Approx(2.0 * est.estimate).epsilon(1e-12));
  CHECK(res.ci_hi - res.ci_lo ==
        doctest::Approx(2.0 * normal_quantile(0.95) * res.se).epsilon(1e-12));
}

TEST_CASE("swapping the A labels flips the contrasts but not estimate or se") {
  std::mt19937_64 rng(41);
  auto ds = random_two_period(rng);
  auto est = triple_wald_did(ds);
  auto se = se_and_ci(influence_two_period(ds, est));

  auto records = ds.to_records();
  for (auto& r : records) r.group_a = 1 - r.group_a;
  auto swapped = PanelDataset::from_records(records, PanelMode::TwoPeriod, 1);
  auto est2 = triple_wald_did(swapped);
  auto se2 = se_and_ci(influence_two_period(swapped, est2));

  CHECK(est2.numerator == -est.numerator);
  CHECK(est2.denominator == -est.denominator);
  CHECK(est2.estimate == est.estimate);
  CHECK(se2.se == se.se);
}

TEST_CASE("staggered reduction reproduces the two-period influence function") {
  // Same data expressed both ways: staggered T=2 with cohorts {2, never}
  // and two-period with C in {0,1}.
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> y(-2.0, 2.0);
  std::vector<StaggeredUnit> stag;
  std::vector<UnitSpec> twop;
  for (int c = 0; c <= 1; ++c) {
    for (int a = 0; a <= 1; ++a) {
      for (int k = 0; k < 8; ++k) {
        double y1 = y(rng), y2 = y(rng);
        int complier = (c == 1 && a == 1 && k < 4) ? 1 : 0;
        stag.push_back({c == 1 ? Cohort::of(2) : Cohort::never(), a, {y1, y2}, {0, complier}});
        twop.push_back({c, a, y1, y2 - y1, 0, complier});
      }
    }
  }
  auto ds_stag = staggered_dataset(stag);
  auto ds_two = two_period_dataset(twop);

  auto est_stag = staggered_triple_wald(ds_stag, {2, 0, ControlPolicy::NeverExposed});
  auto est_two = triple_wald_did(ds_two);
  CHECK(est_stag.estimate == est_two.estimate);

  auto iv_stag = influence_staggered(ds_stag, est_stag);
  auto iv_two = influence_two_period(ds_two, est_two);
  REQUIRE(iv_stag.values.size() == iv_two.values.size());
  for (std::size_t i = 0; i < iv_two.values.size(); ++i) {
    CHECK(iv_stag.values[i] == iv_two.values[i]);
  }
}

TEST_CASE("IF standard error tracks the Monte Carlo dispersion") {
  auto spec = conforming_two_period();
  auto mc = run_monte_carlo(spec, 800, 300, {true, false, false, false}, 4242);
  REQUIRE(mc.rows.size() == 1);
  const auto& row = mc.rows[0];
  CHECK(row.reps_ok == 300);
  CHECK(std::abs(row.mean_if_se - row.empirical_sd) <= 0.15 * row.empirical_sd);
}

TEST_CASE("bootstrap is deterministic and cross-checks the IF se") {
  auto spec = conforming_two_period();
  auto pop = generate(spec, 600);

  BootstrapEstimator kind;
  kind.kind = BootstrapEstimator::Kind::TwoPeriodTriple;
  BootstrapOptions opts;
  opts.replications = 200;
  opts.seed = 7;
  auto b1 = bootstrap_se(pop.dataset, kind, opts);
  auto b2 = bootstrap_se(pop.dataset, kind, opts);
  CHECK(b1.se == b2.se);
  CHECK(b1.ci_lo == b2.ci_lo);

  auto est = triple_wald_did(pop.dataset);
  auto ifres = se_and_ci(influence_two_period(pop.dataset, est));
  CHECK(std::abs(b1.se - ifres.se) <= 0.30 * ifres.se);

  SUBCASE("too few replications is a precondition error") {
    opts.replications = 10;
    CHECK_THROWS_AS(bootstrap_se(pop.dataset, kind, opts), Error);
  }
}

TEST_CASE("degenerate resamples are redrawn and counted") {
  // A lone unit in one cell makes resamples that miss it invalid.
  std::vector<UnitSpec> units;
  for (int k = 0; k < 6; ++k) units.push_back({1, 1, 0.0, k % 2 ? 1.5 : 0.5, 0, k % 2});
  for (int k = 0; k < 6; ++k) units.push_back({0, 1, 0.0, k % 2 ? 0.5 : 0.25, 0, 0});
  for (int k = 0; k < 6; ++k) units.push_back({1, 0, 0.0, k % 2 ? 0.3 : 0.1, 0, 0});
  units.push_back({0, 0, 0.0, 0.1, 0, 0});
  auto ds = two_period_dataset(units);

  BootstrapEstimator kind;
  kind.kind = BootstrapEstimator::Kind::TwoPeriodTriple;
  BootstrapOptions opts;
  opts.replications = 150;
  opts.seed = 3;
  auto res = bootstrap_se(ds, kind, opts);
  CHECK(res.resamples_rejected > 0);
  CHECK(res.se > 0.0);
}
