#include "dddiv/simulation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace dddiv {

namespace {

using nlohmann::json;

double slope_of(const std::map<Cohort, double>& slopes, Cohort c) {
  auto it = slopes.find(c);
  return it == slopes.end() ? 0.0 : it->second;
}

// Two-period mode treats the C=1 group as the cohort exposed at t=1; the
// C=0 group plays the never-exposed role.
bool is_exposable(const DgpSpec& spec, Cohort c) {
  if (c.is_never()) return false;
  if (spec.mode == PanelMode::TwoPeriod) return c.value() == 1;
  return true;
}

double uptake_prob(const DgpSpec& spec, Cohort c, int a, int t) {
  double rel = static_cast<double>(t - spec.first_period());
  double p = spec.uptake_base + slope_of(spec.uptake_cohort_slope, c) * rel +
             spec.uptake_group_slope[static_cast<std::size_t>(a)] * rel;
  if (a == 1) p += slope_of(spec.uptake_interaction_slope, c) * rel;
  return p;
}

double complier_share_of(const DgpSpec& spec, Cohort c) {
  auto it = spec.complier_share_by_cohort.find(c);
  return it == spec.complier_share_by_cohort.end() ? spec.complier_share : it->second;
}

double group_share_of(const DgpSpec& spec, Cohort c) {
  auto it = spec.group_a_share_by_cohort.find(c);
  return it == spec.group_a_share_by_cohort.end() ? spec.group_a_share : it->second;
}

double trend_term(const DgpSpec& spec, Cohort c, int a, int t) {
  double rel = static_cast<double>(t - spec.first_period());
  double v = slope_of(spec.outcome_cohort_slope, c) * rel +
             spec.outcome_group_slope[static_cast<std::size_t>(a)] * rel;
  if (a == 1) v += slope_of(spec.outcome_interaction_slope, c) * rel;
  return v;
}

std::vector<std::pair<double, double>> effect_steps_of(const DgpSpec& spec) {
  if (!spec.effect_steps.empty()) return spec.effect_steps;
  return std::vector<std::pair<double, double>>(static_cast<std::size_t>(spec.treatment_levels),
                                                {spec.effect_mean, spec.effect_sd});
}

int ordered_level(const std::vector<double>& shares, double u) {
  double cum = 0.0;
  for (std::size_t j = 0; j < shares.size(); ++j) {
    cum += shares[j];
    if (u < cum) return static_cast<int>(j);
  }
  return static_cast<int>(shares.size()) - 1;
}

}  // namespace

void validate_spec(const DgpSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); };

  if (spec.periods < 2) fail("need at least two periods");
  if (spec.mode == PanelMode::TwoPeriod && spec.periods != 2) fail("two-period mode has periods=2");
  if (spec.treatment_levels < 1 || spec.treatment_levels > 10) fail("treatment_levels must be in 1..10");
  if (spec.cohort_shares.empty()) fail("cohort_shares empty");

  double total = 0.0;
  bool any_exposable = false;
  for (const auto& [c, share] : spec.cohort_shares) {
    if (share < 0.0 || share > 1.0) fail("cohort share outside [0,1]");
    total += share;
    if (!c.is_never()) {
      if (spec.mode == PanelMode::TwoPeriod) {
        if (c.value() != 0 && c.value() != 1) fail("two-period cohorts must be 0/1");
      } else if (c.value() < 2 || c.value() > spec.periods) {
        fail("staggered cohorts must lie in {2,...,T}");
      }
    }
    if (is_exposable(spec, c)) any_exposable = true;
  }
  if (std::abs(total - 1.0) > 1e-9) fail("cohort shares must sum to 1");
  if (!any_exposable) fail("no exposable cohort");

  auto check_prob = [&](double p, const char* what) {
    if (p < 0.0 || p > 1.0) fail(std::string(what) + " outside [0,1]");
  };
  check_prob(spec.group_a_share, "group_a_share");
  for (const auto& [_, p] : spec.group_a_share_by_cohort) check_prob(p, "group_a_share");

  if (!spec.period_effects.empty() &&
      spec.period_effects.size() != static_cast<std::size_t>(spec.periods)) {
    fail("period_effects must have one entry per period");
  }
  if (spec.unit_effect_sd < 0.0 || spec.noise_sd < 0.0 || spec.effect_sd < 0.0) fail("negative sd");
  if (spec.anticipation < 0) fail("anticipation must be >= 0");
  if (spec.defier_share < 0.0 || spec.defier_share > 1.0) fail("defier_share outside [0,1]");

  if (spec.ordered()) {
    if (spec.defier_share != 0.0) fail("ordered mode does not support defiers");
    if (spec.uptake_level_shares.size() != static_cast<std::size_t>(spec.treatment_levels) + 1) {
      fail("uptake.level_shares must have J+1 entries");
    }
    if (spec.lift_shares.empty()) fail("compliance.lift_shares required in ordered mode");
    for (const auto& shares : {spec.uptake_level_shares, spec.lift_shares}) {
      double s = 0.0;
      for (double v : shares) {
        if (v < 0.0) fail("negative share");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) fail("level/lift shares must sum to 1");
    }
    auto zero = [](const std::map<Cohort, double>& m) {
      return std::all_of(m.begin(), m.end(), [](const auto& kv) { return kv.second == 0.0; });
    };
    if (spec.uptake_base != 0.0 || !zero(spec.uptake_cohort_slope) ||
        spec.uptake_group_slope[0] != 0.0 || spec.uptake_group_slope[1] != 0.0 ||
        !zero(spec.uptake_interaction_slope)) {
      fail("ordered mode drives uptake through level_shares; binary uptake knobs must be zero");
    }
    auto steps = effect_steps_of(spec);
    if (steps.size() != static_cast<std::size_t>(spec.treatment_levels)) {
      fail("effect.per_step must have J entries");
    }
    return;
  }

  // Binary: the uptake probability and the compliance ladder must stay a
  // valid partition at every (cohort, group, period), and uptake must be
  // non-decreasing over the exposed horizon for the monotone type coupling.
  for (const auto& [c, share] : spec.cohort_shares) {
    (void)share;
    double kappa = complier_share_of(spec, c);
    if (kappa < 0.0 || kappa > 1.0) fail("complier_share outside [0,1]");
    for (int a = 0; a <= 1; ++a) {
      double prev = -1.0;
      for (int t = spec.first_period(); t < spec.first_period() + spec.periods; ++t) {
        double p = uptake_prob(spec, c, a, t);
        check_prob(p, "uptake probability");
        if (is_exposable(spec, c)) {
          if (p < spec.defier_share) fail("defier_share exceeds uptake probability");
          if (1.0 - kappa - p < 0.0) fail("complier_share plus uptake exceeds 1");
          if (t > spec.first_period() && p < prev) {
            fail("uptake must be non-decreasing over time for exposable cohorts");
          }
        }
        prev = p;
      }
    }
  }
}

GeneratedPopulation generate(const DgpSpec& spec, std::size_t n_units) {
  validate_spec(spec);
  if (n_units < 1) throw Error(ErrorCode::InvalidSpec, "n_units must be >= 1");

  const int t0 = spec.first_period();
  const int P = spec.periods;
  const int J = spec.treatment_levels;
  std::vector<int> periods(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) periods[static_cast<std::size_t>(p)] = t0 + p;

  std::vector<double> lambda = spec.period_effects;
  if (lambda.empty()) lambda.assign(static_cast<std::size_t>(P), 0.0);

  const auto steps = effect_steps_of(spec);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  int width = 1;
  for (std::size_t v = n_units; v >= 10; v /= 10) ++width;

  LatentTable table;
  table.mode = spec.mode;
  table.treatment_levels = J;
  table.periods = periods;
  table.units.reserve(n_units);

  std::vector<PanelRecord> records;
  records.reserve(n_units * static_cast<std::size_t>(P));

  for (std::size_t i = 0; i < n_units; ++i) {
    LatentUnit lu;
    double u_cohort = unif(rng);
    double cum = 0.0;
    lu.cohort = spec.cohort_shares.rbegin()->first;
    for (const auto& [c, share] : spec.cohort_shares) {
      cum += share;
      if (u_cohort < cum) {
        lu.cohort = c;
        break;
      }
    }
    lu.group_a = unif(rng) < group_share_of(spec, lu.cohort) ? 1 : 0;
    lu.u = unif(rng);
    double u_lift = unif(rng);
    lu.alpha = gauss(rng) * spec.unit_effect_sd;
    lu.tau.resize(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
      lu.tau[static_cast<std::size_t>(j)] = steps[static_cast<std::size_t>(j)].first +
                                            gauss(rng) * steps[static_cast<std::size_t>(j)].second;
    }
    lu.y0.resize(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
      double eps = gauss(rng) * spec.noise_sd;
      lu.y0[static_cast<std::size_t>(p)] = lu.alpha + lambda[static_cast<std::size_t>(p)] +
                                           trend_term(spec, lu.cohort, lu.group_a, t0 + p) + eps;
    }

    const bool exposable = is_exposable(spec, lu.cohort);
    const int e = exposable ? spec.exposure_time(lu.cohort) : 0;
    const double kappa = complier_share_of(spec, lu.cohort);
    const int lift = spec.ordered() ? ordered_level(spec.lift_shares, u_lift) : 0;

    lu.d_never.resize(static_cast<std::size_t>(P));
    if (exposable) lu.d_exposed.resize(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
      const int t = t0 + p;
      int d_inf;
      if (spec.ordered()) {
        d_inf = ordered_level(spec.uptake_level_shares, lu.u);
      } else {
        d_inf = lu.u >= 1.0 - uptake_prob(spec, lu.cohort, lu.group_a, t) ? 1 : 0;
      }
      lu.d_never[static_cast<std::size_t>(p)] = d_inf;
      if (!exposable) continue;

      int d_exp;
      const bool behaves_exposed = (t >= e) || (spec.anticipation > 0 && t >= e - spec.anticipation);
      if (!behaves_exposed) {
        d_exp = d_inf;
      } else if (spec.ordered()) {
        d_exp = std::min(J, d_inf + lift);
      } else {
        double sh_nt = 1.0 - kappa - uptake_prob(spec, lu.cohort, lu.group_a, t);
        d_exp = (lu.u >= sh_nt && lu.u < 1.0 - spec.defier_share) ? 1 : 0;
      }
      lu.d_exposed[static_cast<std::size_t>(p)] = d_exp;
    }

    lu.ever_exposed = exposable && lu.group_a == 1;
    lu.z.resize(static_cast<std::size_t>(P));
    lu.d_obs.resize(static_cast<std::size_t>(P));
    lu.y_obs.resize(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
      const int t = t0 + p;
      lu.z[static_cast<std::size_t>(p)] = (lu.ever_exposed && t >= e) ? 1 : 0;
      lu.d_obs[static_cast<std::size_t>(p)] =
          lu.ever_exposed ? lu.d_exposed[static_cast<std::size_t>(p)]
                          : lu.d_never[static_cast<std::size_t>(p)];
      lu.y_obs[static_cast<std::size_t>(p)] =
          lu.potential_outcome(static_cast<std::size_t>(p), lu.d_obs[static_cast<std::size_t>(p)]);
    }

    std::string id = std::to_string(i);
    id = "u" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    for (int p = 0; p < P; ++p) {
      PanelRecord r;
      r.unit_id = id;
      r.time = t0 + p;
      r.outcome = lu.y_obs[static_cast<std::size_t>(p)];
      r.treatment = lu.d_obs[static_cast<std::size_t>(p)];
      r.instrument = lu.z[static_cast<std::size_t>(p)];
      r.group_a = lu.group_a;
      r.cohort = lu.cohort;
      records.push_back(std::move(r));
    }
    table.units.push_back(std::move(lu));
  }

  GeneratedPopulation pop{PanelDataset::from_records(std::move(records), spec.mode, J),
                          std::move(table)};
  return pop;
}

namespace {

// Counts complier step crossings in one (cohort, a=1) cell at post-period
// index, returning the weighted mean of per-step effects.
std::optional<OracleTarget> oracle_cell(const LatentTable& table, Cohort cohort,
                                        std::size_t post_p) {
  const int J = table.treatment_levels;
  std::vector<std::size_t> cover_n(static_cast<std::size_t>(J), 0);
  std::vector<CompensatedSum> cover_tau(static_cast<std::size_t>(J));
  std::size_t cell_n = 0, any_cover = 0;
  for (const auto& lu : table.units) {
    if (lu.cohort != cohort || lu.group_a != 1) continue;
    ++cell_n;
    if (lu.d_exposed.empty()) continue;
    const int lo = lu.d_never[post_p];
    const int hi = lu.d_exposed[post_p];
    if (hi > lo) ++any_cover;
    for (int j = lo + 1; j <= hi; ++j) {
      ++cover_n[static_cast<std::size_t>(j - 1)];
      cover_tau[static_cast<std::size_t>(j - 1)].add(lu.tau[static_cast<std::size_t>(j - 1)]);
    }
  }
  if (cell_n == 0) return std::nullopt;
  std::size_t total = 0;
  for (std::size_t n : cover_n) total += n;
  if (total == 0) return std::nullopt;

  OracleTarget target;
  target.cell_n = cell_n;
  target.weights.resize(static_cast<std::size_t>(J));
  CompensatedSum value;
  for (int j = 0; j < J; ++j) {
    const auto n = cover_n[static_cast<std::size_t>(j)];
    double w = static_cast<double>(n) / static_cast<double>(total);
    target.weights[static_cast<std::size_t>(j)] = w;
    if (n > 0) value.add(w * (cover_tau[static_cast<std::size_t>(j)].value() / static_cast<double>(n)));
  }
  target.value = value.value();
  target.complier_mass = static_cast<double>(total) / static_cast<double>(cell_n);
  target.complier_share = static_cast<double>(any_cover) / static_cast<double>(cell_n);
  return target;
}

}  // namespace

OracleReport compute_oracle(const LatentTable& table) {
  OracleReport report;
  if (table.mode == PanelMode::TwoPeriod) {
    auto target = oracle_cell(table, Cohort::of(1), 1);
    if (!target) throw Error(ErrorCode::NoCompliers, "cell C=1,A=1 has no compliers");
    report.two_period = *target;
    return report;
  }
  const int T = static_cast<int>(table.periods.size());
  std::set<int> finite;
  for (const auto& lu : table.units) {
    if (!lu.cohort.is_never()) finite.insert(lu.cohort.value());
  }
  for (int c : finite) {
    for (int l = 0; c + l <= T; ++l) {
      auto post_p = static_cast<std::size_t>(c + l - 1);  // periods start at 1
      auto target = oracle_cell(table, Cohort::of(c), post_p);
      if (target) report.staggered[{c, l}] = *target;
    }
  }
  return report;
}

double population_parameter(const DgpSpec& spec) {
  const auto steps = effect_steps_of(spec);
  if (!spec.ordered()) return steps[0].first;
  const int J = spec.treatment_levels;
  double total = 0.0, value = 0.0;
  for (int j = 1; j <= J; ++j) {
    double p_cover = 0.0;
    for (std::size_t v = 0; v < spec.uptake_level_shares.size(); ++v) {
      for (std::size_t k = 0; k < spec.lift_shares.size(); ++k) {
        int lo = static_cast<int>(v);
        int hi = std::min(J, lo + static_cast<int>(k));
        if (lo < j && j <= hi) p_cover += spec.uptake_level_shares[v] * spec.lift_shares[k];
      }
    }
    total += p_cover;
    value += p_cover * steps[static_cast<std::size_t>(j - 1)].first;
  }
  if (total <= 0.0) throw Error(ErrorCode::NoCompliers, "spec implies zero complier mass");
  return value / total;
}

namespace {

PopulationIdentity identity_from(const CellQuad& cells, const OracleTarget& target) {
  auto contrast = ddd(cells);
  PopulationIdentity id;
  id.ddd_y = contrast.ddd_y;
  id.ddd_d = contrast.ddd_d;
  id.oracle_value = target.value;
  id.complier_mass = target.complier_mass;
  id.numerator_gap = contrast.ddd_y - target.value * target.complier_mass;
  id.denominator_gap = contrast.ddd_d - target.complier_mass;
  return id;
}

}  // namespace

PopulationIdentity population_identity_two_period(const GeneratedPopulation& pop) {
  auto oracle = compute_oracle(pop.latents);
  CellQuad cells;
  cells.exposed_a1 = cell_stats(pop.dataset, Cohort::of(1), 1, 0, 1);
  cells.control_a1 = cell_stats(pop.dataset, Cohort::of(0), 1, 0, 1);
  cells.exposed_a0 = cell_stats(pop.dataset, Cohort::of(1), 0, 0, 1);
  cells.control_a0 = cell_stats(pop.dataset, Cohort::of(0), 0, 0, 1);
  return identity_from(cells, *oracle.two_period);
}

PopulationIdentity population_identity_staggered(const GeneratedPopulation& pop, int cohort,
                                              int rel_period, ControlPolicy policy) {
  auto oracle = compute_oracle(pop.latents);
  auto it = oracle.staggered.find({cohort, rel_period});
  if (it == oracle.staggered.end()) {
    throw Error(ErrorCode::NoCompliers, "no compliers for the requested (c,l)");
  }
  StaggeredTarget target{cohort, rel_period, policy};
  auto idx = cohort_index(pop.dataset);
  Cohort control = target.control_cohort(idx.last_exposed);
  const auto pre_p = static_cast<std::size_t>(pop.dataset.period_index(target.pre_period()));
  const auto post_p = static_cast<std::size_t>(pop.dataset.period_index(target.post_period()));
  CellQuad cells;
  cells.exposed_a1 = cell_stats(pop.dataset, Cohort::of(cohort), 1, pre_p, post_p);
  cells.control_a1 = cell_stats(pop.dataset, control, 1, pre_p, post_p);
  cells.exposed_a0 = cell_stats(pop.dataset, Cohort::of(cohort), 0, pre_p, post_p);
  cells.control_a0 = cell_stats(pop.dataset, control, 0, pre_p, post_p);
  return identity_from(cells, it->second);
}

namespace {

struct CellDeltaMean {
  CompensatedSum sum;
  std::size_t n = 0;
  bool ok() const { return n > 0; }
  double mean() const { return sum.value() / static_cast<double>(n); }
};

}  // namespace

AuditReport assumption_audit(const LatentTable& table, double tol) {
  AuditReport report;
  report.monotonicity.name = "monotonicity";
  report.no_anticipation.name = "no_anticipation";
  report.common_accel_treatment.name = "common_accel_treatment";
  report.common_accel_outcome.name = "common_accel_outcome";

  const int t0 = table.periods.front();
  const int P = static_cast<int>(table.periods.size());

  std::set<int> exposable;
  bool has_never = false;
  int max_finite = 0;
  for (const auto& lu : table.units) {
    if (lu.cohort.is_never()) {
      has_never = true;
    } else if (!lu.d_exposed.empty()) {
      exposable.insert(table.mode == PanelMode::TwoPeriod ? 1 : lu.cohort.value());
    }
    if (!lu.cohort.is_never()) max_finite = std::max(max_finite, lu.cohort.value());
  }

  // Monotonicity and first-stage no-anticipation are per unit-period facts.
  for (const auto& lu : table.units) {
    if (lu.d_exposed.empty()) continue;
    const int e = table.mode == PanelMode::TwoPeriod ? 1 : lu.cohort.value();
    for (int p = 0; p < P; ++p) {
      const int t = t0 + p;
      const int gap = lu.d_exposed[static_cast<std::size_t>(p)] -
                      lu.d_never[static_cast<std::size_t>(p)];
      if (t >= e) {
        if (gap < 0) {
          report.monotonicity.count++;
          report.monotonicity.magnitude = std::max(report.monotonicity.magnitude,
                                                   static_cast<double>(-gap));
        }
      } else if (gap != 0) {
        report.no_anticipation.count++;
        report.no_anticipation.magnitude =
            std::max(report.no_anticipation.magnitude, std::abs(static_cast<double>(gap)));
      }
    }
  }
  report.monotonicity.pass = report.monotonicity.count == 0;
  report.no_anticipation.pass = report.no_anticipation.count == 0;

  // Common acceleration: contrast each exposable cohort against the control
  // cohort over the post-exposure steps, on never-exposed potentials.
  Cohort control = Cohort::never();
  int last_usable_t = t0 + P - 1;
  if (table.mode == PanelMode::TwoPeriod) {
    control = Cohort::of(0);
    report.control_used = "never";
  } else if (has_never) {
    control = Cohort::never();
    report.control_used = "never";
  } else if (exposable.size() >= 2) {
    control = Cohort::of(max_finite);
    last_usable_t = max_finite - 1;
    report.control_used = "last";
  } else {
    report.control_used = "none";
  }

  if (report.control_used != "none") {
    for (int c : exposable) {
      if (report.control_used == "last" && c == max_finite) continue;
      const int e = table.mode == PanelMode::TwoPeriod ? 1 : c;
      for (int t = std::max(e, t0 + 1); t <= last_usable_t; ++t) {
        const auto p = static_cast<std::size_t>(t - t0);
        // cell means of one-step changes in never-exposed potentials
        std::array<CellDeltaMean, 4> dmean, ymean;  // [exposed a1, exposed a0, ctrl a1, ctrl a0]
        for (const auto& lu : table.units) {
          int slot;
          Cohort cc = lu.cohort;
          bool is_exposed_cell = !cc.is_never() &&
                                 (table.mode == PanelMode::TwoPeriod ? cc.value() == 1
                                                                     : cc.value() == c);
          if (is_exposed_cell) {
            slot = lu.group_a == 1 ? 0 : 1;
          } else if (cc == control) {
            slot = lu.group_a == 1 ? 2 : 3;
          } else {
            continue;
          }
          double dd = static_cast<double>(lu.d_never[p] - lu.d_never[p - 1]);
          double dy = lu.potential_outcome(p, lu.d_never[p]) -
                      lu.potential_outcome(p - 1, lu.d_never[p - 1]);
          dmean[static_cast<std::size_t>(slot)].sum.add(dd);
          dmean[static_cast<std::size_t>(slot)].n++;
          ymean[static_cast<std::size_t>(slot)].sum.add(dy);
          ymean[static_cast<std::size_t>(slot)].n++;
        }
        bool all_ok = true;
        for (const auto& m : dmean) all_ok = all_ok && m.ok();
        if (!all_ok) continue;
        double dgap = (dmean[0].mean() - dmean[1].mean()) - (dmean[2].mean() - dmean[3].mean());
        double ygap = (ymean[0].mean() - ymean[1].mean()) - (ymean[2].mean() - ymean[3].mean());
        report.treatment_gaps.push_back({c, t, dgap});
        report.outcome_gaps.push_back({c, t, ygap});
        report.common_accel_treatment.magnitude =
            std::max(report.common_accel_treatment.magnitude, std::abs(dgap));
        report.common_accel_outcome.magnitude =
            std::max(report.common_accel_outcome.magnitude, std::abs(ygap));
      }
    }
  }
  report.common_accel_treatment.pass = report.common_accel_treatment.magnitude <= tol;
  report.common_accel_outcome.pass = report.common_accel_outcome.magnitude <= tol;
  report.common_accel_treatment.count = report.treatment_gaps.size();
  report.common_accel_outcome.count = report.outcome_gaps.size();
  return report;
}

std::string render_audit_report(const AuditReport& report) {
  std::ostringstream os;
  os << "audit control=" << report.control_used << "\n";
  for (const AuditCheck* check : {&report.monotonicity, &report.no_anticipation,
                                  &report.common_accel_treatment, &report.common_accel_outcome}) {
    os << "check " << check->name << " pass=" << (check->pass ? 1 : 0) << " count=" << check->count
       << " magnitude=" << format_double(check->magnitude) << "\n";
  }
  for (const auto& g : report.outcome_gaps) {
    os << "gap outcome c=" << g.cohort << " t=" << g.period << " gap=" << format_double(g.gap)
       << "\n";
  }
  return os.str();
}

std::string render_oracle_report(const OracleReport& report, int treatment_levels) {
  std::ostringstream os;
  auto line = [&](const std::string& head, const OracleTarget& t) {
    os << head << (treatment_levels > 1 ? " acrt=" : " latet=") << format_double(t.value)
       << " complier_share=" << format_double(t.complier_share)
       << " complier_mass=" << format_double(t.complier_mass) << " n_cell=" << t.cell_n;
    if (treatment_levels > 1) {
      for (std::size_t j = 0; j < t.weights.size(); ++j) {
        os << " w_" << (j + 1) << "=" << format_double(t.weights[j]);
      }
    }
    os << "\n";
  };
  if (report.two_period) line("two_period", *report.two_period);
  for (const auto& [key, target] : report.staggered) {
    std::ostringstream head;
    head << "staggered c=" << key.first << " l=" << key.second;
    line(head.str(), target);
  }
  return os.str();
}

McSummary run_monte_carlo(const DgpSpec& spec, std::size_t n_units, std::size_t reps,
                          const McSelection& selection, std::uint64_t seed) {
  if (reps < 2) throw Error(ErrorCode::InvalidSpec, "reps must be >= 2");
  validate_spec(spec);

  struct Acc {
    std::vector<double> est, se, realized, fstage;
    std::size_t failed = 0;
    bool has_se = true;
  };
  std::map<std::string, Acc> accs;
  const double pop = population_parameter(spec);
  const double z95 = normal_quantile(0.975);

  for (std::size_t r = 0; r < reps; ++r) {
    DgpSpec rep_spec = spec;
    rep_spec.seed = mix_seed(seed, r);
    auto popn = generate(rep_spec, n_units);
    OracleReport oracle;
    bool oracle_ok = true;
    try {
      oracle = compute_oracle(popn.latents);
    } catch (const Error&) {
      oracle_ok = false;
    }

    if (spec.mode == PanelMode::TwoPeriod) {
      if (selection.triple) {
        auto& acc = accs["triple"];
        try {
          if (!oracle_ok) throw Error(ErrorCode::NoCompliers, "no compliers");
          auto est = triple_wald_did(popn.dataset);
          auto se = se_and_ci(influence_two_period(popn.dataset, est));
          acc.est.push_back(est.estimate);
          acc.se.push_back(se.se);
          acc.realized.push_back(oracle.two_period->value);
          acc.fstage.push_back(est.denominator);
        } catch (const Error&) {
          acc.failed++;
        }
      }
      if (selection.plain) {
        auto& acc = accs["plain_a1"];
        acc.has_se = false;
        try {
          if (!oracle_ok) throw Error(ErrorCode::NoCompliers, "no compliers");
          acc.est.push_back(plain_wald_did(popn.dataset, 1));
          acc.realized.push_back(oracle.two_period->value);
        } catch (const Error&) {
          acc.failed++;
        }
      }
    } else {
      for (ControlPolicy policy : {ControlPolicy::NeverExposed, ControlPolicy::LastExposed}) {
        if (policy == ControlPolicy::NeverExposed && !selection.staggered_never) continue;
        if (policy == ControlPolicy::LastExposed && !selection.staggered_last) continue;
        std::vector<StaggeredBatchEntry> entries;
        try {
          entries = estimate_all(popn.dataset, policy);
        } catch (const Error&) {
          continue;
        }
        for (const auto& entry : entries) {
          std::ostringstream key;
          key << control_policy_name(policy) << " c=" << entry.target.cohort
              << " l=" << entry.target.rel_period;
          auto& acc = accs[key.str()];
          if (!entry.estimate) {
            acc.failed++;
            continue;
          }
          auto it = oracle.staggered.find({entry.target.cohort, entry.target.rel_period});
          if (!oracle_ok || it == oracle.staggered.end()) {
            acc.failed++;
            continue;
          }
          try {
            auto se = se_and_ci(influence_staggered(popn.dataset, *entry.estimate));
            acc.est.push_back(entry.estimate->estimate);
            acc.se.push_back(se.se);
            acc.realized.push_back(it->second.value);
            acc.fstage.push_back(entry.estimate->denominator);
          } catch (const Error&) {
            acc.failed++;
          }
        }
      }
    }
  }

  McSummary summary;
  summary.reps = reps;
  summary.n_units = n_units;
  for (auto& [label, acc] : accs) {
    McRow row;
    row.label = label;
    row.population_param = pop;
    row.reps_ok = acc.est.size();
    row.reps_failed = acc.failed;
    if (acc.est.empty()) {
      summary.rows.push_back(std::move(row));
      continue;
    }
    row.mean_estimate = compensated_mean(acc.est);
    row.bias_population = row.mean_estimate - pop;
    CompensatedSum ssq;
    for (double e : acc.est) ssq.add((e - row.mean_estimate) * (e - row.mean_estimate));
    row.empirical_sd = acc.est.size() > 1
                           ? std::sqrt(ssq.value() / static_cast<double>(acc.est.size() - 1))
                           : 0.0;
    std::vector<double> paired(acc.est.size());
    for (std::size_t i = 0; i < acc.est.size(); ++i) paired[i] = acc.est[i] - acc.realized[i];
    row.bias_paired = compensated_mean(paired);
    CompensatedSum psq;
    for (double d : paired) psq.add((d - row.bias_paired) * (d - row.bias_paired));
    row.sd_paired = paired.size() > 1
                        ? std::sqrt(psq.value() / static_cast<double>(paired.size() - 1))
                        : 0.0;
    if (acc.has_se) {
      row.mean_if_se = compensated_mean(acc.se);
      std::size_t covered = 0;
      for (std::size_t i = 0; i < acc.est.size(); ++i) {
        if (std::abs(acc.est[i] - pop) <= z95 * acc.se[i]) ++covered;
      }
      row.coverage = static_cast<double>(covered) / static_cast<double>(acc.est.size());
      row.mean_first_stage = compensated_mean(acc.fstage);
    } else {
      row.mean_if_se = std::numeric_limits<double>::quiet_NaN();
      row.coverage = std::numeric_limits<double>::quiet_NaN();
      row.mean_first_stage = std::numeric_limits<double>::quiet_NaN();
    }
    summary.rows.push_back(std::move(row));
  }
  return summary;
}

std::string render_mc_summary(const McSummary& summary) {
  std::ostringstream os;
  os << "monte_carlo reps=" << summary.reps << " n=" << summary.n_units << "\n";
  auto num = [](double v) {
    return std::isnan(v) ? std::string("na") : format_double(v);
  };
  for (const auto& row : summary.rows) {
    os << "target=" << row.label << " reps_ok=" << row.reps_ok << " reps_failed=" << row.reps_failed
       << " pop=" << num(row.population_param) << " mean=" << num(row.mean_estimate)
       << " bias_pop=" << num(row.bias_population) << " bias_paired=" << num(row.bias_paired)
       << " emp_sd=" << num(row.empirical_sd) << " mean_if_se=" << num(row.mean_if_se)
       << " coverage=" << num(row.coverage) << " mean_first_stage=" << num(row.mean_first_stage)
       << "\n";
  }
  return os.str();
}

namespace {

Cohort cohort_from_key(const std::string& key) {
  if (key == "inf" || key == "Inf" || key == "INF" || key.empty()) return Cohort::never();
  try {
    std::size_t used = 0;
    int v = std::stoi(key, &used);
    if (used != key.size()) throw std::invalid_argument(key);
    return Cohort::of(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidSpec, "bad cohort key '" + key + "' (integer or \"inf\")");
  }
}

std::map<Cohort, double> cohort_map_from_json(const json& j, const char* what) {
  std::map<Cohort, double> out;
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, std::string(what) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    out[cohort_from_key(key)] = value.get<double>();
  }
  return out;
}

std::array<double, 2> group_pair_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) {
    throw Error(ErrorCode::InvalidSpec, std::string(what) + " must be a two-entry array [a0, a1]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

DgpSpec dgp_spec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("config parse failure: ") + e.what());
  }
  try {
    DgpSpec spec;
    if (j.value("version", 1) != 1) throw Error(ErrorCode::InvalidSpec, "unsupported config version");
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "two_period") {
      spec.mode = PanelMode::TwoPeriod;
    } else if (mode == "staggered") {
      spec.mode = PanelMode::Staggered;
    } else {
      throw Error(ErrorCode::InvalidSpec, "mode must be two_period or staggered");
    }
    spec.periods = j.value("periods", spec.mode == PanelMode::TwoPeriod ? 2 : 0);
    spec.units = j.value("units", std::size_t{1000});
    spec.seed = j.value("seed", std::uint64_t{1});
    spec.treatment_levels = j.value("treatment_levels", 1);
    spec.cohort_shares = cohort_map_from_json(j.at("cohort_shares"), "cohort_shares");
    if (j.contains("group_a_share")) {
      if (j["group_a_share"].is_object()) {
        spec.group_a_share_by_cohort = cohort_map_from_json(j["group_a_share"], "group_a_share");
      } else {
        spec.group_a_share = j["group_a_share"].get<double>();
      }
    }
    if (j.contains("uptake")) {
      const auto& u = j["uptake"];
      spec.uptake_base = u.value("base", 0.0);
      if (u.contains("cohort_slope")) {
        spec.uptake_cohort_slope = cohort_map_from_json(u["cohort_slope"], "uptake.cohort_slope");
      }
      if (u.contains("group_slope")) {
        spec.uptake_group_slope = group_pair_from_json(u["group_slope"], "uptake.group_slope");
      }
      if (u.contains("interaction_slope")) {
        spec.uptake_interaction_slope =
            cohort_map_from_json(u["interaction_slope"], "uptake.interaction_slope");
      }
      if (u.contains("level_shares")) {
        spec.uptake_level_shares = u["level_shares"].get<std::vector<double>>();
      }
    }
    if (j.contains("compliance")) {
      const auto& c = j["compliance"];
      if (c.contains("complier_share") && c["complier_share"].is_object()) {
        spec.complier_share_by_cohort =
            cohort_map_from_json(c["complier_share"], "compliance.complier_share");
      } else {
        spec.complier_share = c.value("complier_share", 0.4);
      }
      spec.defier_share = c.value("defier_share", 0.0);
      spec.anticipation = c.value("anticipation", 0);
      if (c.contains("lift_shares")) spec.lift_shares = c["lift_shares"].get<std::vector<double>>();
    }
    if (j.contains("outcome")) {
      const auto& o = j["outcome"];
      spec.unit_effect_sd = o.value("unit_effect_sd", 1.0);
      spec.noise_sd = o.value("noise_sd", 1.0);
      if (o.contains("period_effects")) {
        if (o["period_effects"].is_object()) {
          double slope = o["period_effects"].value("slope", 0.0);
          spec.period_effects.resize(static_cast<std::size_t>(spec.periods));
          for (int p = 0; p < spec.periods; ++p) {
            spec.period_effects[static_cast<std::size_t>(p)] = slope * p;
          }
        } else {
          spec.period_effects = o["period_effects"].get<std::vector<double>>();
        }
      }
      if (o.contains("cohort_trend_slope")) {
        spec.outcome_cohort_slope = cohort_map_from_json(o["cohort_trend_slope"], "outcome.cohort_trend_slope");
      }
      if (o.contains("group_trend_slope")) {
        spec.outcome_group_slope = group_pair_from_json(o["group_trend_slope"], "outcome.group_trend_slope");
      }
      if (o.contains("interaction_trend_slope")) {
        spec.outcome_interaction_slope =
            cohort_map_from_json(o["interaction_trend_slope"], "outcome.interaction_trend_slope");
      }
    }
    if (j.contains("effect")) {
      const auto& e = j["effect"];
      if (e.contains("per_step")) {
        for (const auto& step : e["per_step"]) {
          spec.effect_steps.emplace_back(step.at("mean").get<double>(), step.value("sd", 0.0));
        }
      } else {
        spec.effect_mean = e.value("mean", 1.0);
        spec.effect_sd = e.value("sd", 0.0);
      }
    }
    validate_spec(spec);
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("config field error: ") + e.what());
  }
}

}  // namespace dddiv
