#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dddiv/inference.hpp"

namespace dddiv {

// Synthetic-population parameterization. Units draw a cohort, a group flag,
// a single latent uniform u that couples compliance and never-exposed uptake
// across periods (a unit's type rank can only rise over time), a unit effect,
// per-step treatment effects, and per-period outcome noise.
//
// Never-exposed uptake is P(D=1) = uptake_base + cohort_slope[c]*(t-t0)
// + group_slope[a]*(t-t0) + interaction_slope[c]*1{a=1}*(t-t0); the
// interaction term is the knob that breaks the treatment-side common
// acceleration. Untreated outcomes are alpha_i + lambda_t + f(c,t) + g(a,t)
// + h(c,a,t) + noise, with h the outcome-side violation knob. Defier share
// and anticipation are the remaining violation knobs; with all three at
// zero the identifying assumptions hold by construction.
struct DgpSpec {
  PanelMode mode = PanelMode::TwoPeriod;
  int periods = 2;
  std::size_t units = 1000;
  std::uint64_t seed = 1;
  int treatment_levels = 1;

  std::map<Cohort, double> cohort_shares;
  double group_a_share = 0.5;
  std::map<Cohort, double> group_a_share_by_cohort;  // overrides per cohort

  double uptake_base = 0.2;
  std::map<Cohort, double> uptake_cohort_slope;
  std::array<double, 2> uptake_group_slope{0.0, 0.0};
  std::map<Cohort, double> uptake_interaction_slope;
  std::vector<double> uptake_level_shares;  // ordered mode: P(never-exposed level = j)

  double complier_share = 0.4;
  std::map<Cohort, double> complier_share_by_cohort;
  double defier_share = 0.0;
  int anticipation = 0;
  std::vector<double> lift_shares;  // ordered mode: P(exposure lifts level by k)

  double unit_effect_sd = 1.0;
  std::vector<double> period_effects;  // lambda_t, one per period
  double noise_sd = 1.0;
  std::map<Cohort, double> outcome_cohort_slope;        // f
  std::array<double, 2> outcome_group_slope{0.0, 0.0};  // g
  std::map<Cohort, double> outcome_interaction_slope;   // h, applied when a=1

  double effect_mean = 1.0;
  double effect_sd = 0.0;
  std::vector<std::pair<double, double>> effect_steps;  // ordered: per-step (mean, sd)

  int first_period() const { return mode == PanelMode::TwoPeriod ? 0 : 1; }
  int exposure_time(Cohort c) const {
    return mode == PanelMode::TwoPeriod ? 1 : c.value();
  }
  bool ordered() const { return treatment_levels > 1; }
};

DgpSpec dgp_spec_from_json_text(const std::string& text);
void validate_spec(const DgpSpec& spec);

struct LatentUnit {
  Cohort cohort = Cohort::never();
  int group_a = 0;
  double u = 0.0;
  double alpha = 0.0;
  std::vector<double> tau;      // per-step effects, size J
  std::vector<double> y0;       // untreated outcome per period (incl. noise)
  std::vector<int> d_never;     // never-exposed potential treatment path
  std::vector<int> d_exposed;   // own-cohort potential path; empty if cohort never/control
  std::vector<int> z;           // realized instrument
  std::vector<int> d_obs;
  std::vector<double> y_obs;
  bool ever_exposed = false;    // E_i finite

  double potential_outcome(std::size_t p, int d) const {
    double y = y0[p];
    for (int j = 0; j < d; ++j) y += tau[static_cast<std::size_t>(j)];
    return y;
  }
};

struct LatentTable {
  PanelMode mode = PanelMode::TwoPeriod;
  int treatment_levels = 1;
  std::vector<int> periods;
  std::vector<LatentUnit> units;
};

struct GeneratedPopulation {
  PanelDataset dataset;
  LatentTable latents;
};

GeneratedPopulation generate(const DgpSpec& spec, std::size_t n_units);

// Ground-truth parameters enumerated over the latent table: complier means
// of per-step effects at the target period, with ordered-treatment weights
// counted directly. For J = 1 the weighted average collapses to the LATET.
struct OracleTarget {
  double value = 0.0;                 // LATET / CLATT (or ACRT / CACRT when J > 1)
  std::vector<double> weights;        // w_j, size J
  double complier_mass = 0.0;         // sum_j Pr(step j crossed | exposed cell)
  double complier_share = 0.0;        // Pr(any step crossed | exposed cell)
  std::size_t cell_n = 0;
};

struct OracleReport {
  std::optional<OracleTarget> two_period;
  std::map<std::pair<int, int>, OracleTarget> staggered;  // (c, l)
};

OracleReport compute_oracle(const LatentTable& table);

std::string render_oracle_report(const OracleReport& report, int treatment_levels);

// Analytic population parameter implied by the spec: per-step effects are
// drawn independently of types, so the complier mean equals the step mean
// and the ordered weights follow from the level/lift distributions.
double population_parameter(const DgpSpec& spec);

// Observed-data DDD (full population as the sample) against the enumerated
// oracle: under the identifying assumptions the numerator equals the target
// parameter times the complier step mass and the denominator the mass.
struct PopulationIdentity {
  double ddd_y = 0.0;
  double ddd_d = 0.0;
  double oracle_value = 0.0;
  double complier_mass = 0.0;
  double numerator_gap = 0.0;   // ddd_y - oracle*mass
  double denominator_gap = 0.0; // ddd_d - mass
};

PopulationIdentity population_identity_two_period(const GeneratedPopulation& pop);
PopulationIdentity population_identity_staggered(const GeneratedPopulation& pop, int cohort,
                                              int rel_period, ControlPolicy policy);

struct AuditCheck {
  std::string name;
  bool pass = true;
  double magnitude = 0.0;  // max violated quantity
  std::size_t count = 0;   // violating (unit, period) pairs where applicable
};

struct AuditGap {
  int cohort = 0;
  int period = 0;
  double gap = 0.0;
};

struct AuditReport {
  AuditCheck monotonicity;
  AuditCheck no_anticipation;
  AuditCheck common_accel_treatment;
  AuditCheck common_accel_outcome;
  std::vector<AuditGap> treatment_gaps;
  std::vector<AuditGap> outcome_gaps;
  std::string control_used;  // "never" or "last"
};

AuditReport assumption_audit(const LatentTable& table, double tol = 1e-9);

std::string render_audit_report(const AuditReport& report);

struct McSelection {
  bool triple = true;
  bool plain = false;
  bool staggered_never = true;
  bool staggered_last = false;
};

struct McRow {
  std::string label;
  double population_param = 0.0;
  std::size_t reps_ok = 0;
  std::size_t reps_failed = 0;
  double mean_estimate = 0.0;
  double bias_population = 0.0;
  double bias_paired = 0.0;  // mean of estimate minus per-replication enumerated oracle
  double sd_paired = 0.0;
  double empirical_sd = 0.0;
  double mean_if_se = 0.0;
  double coverage = 0.0;     // CI covers the population parameter
  double mean_first_stage = 0.0;
};

struct McSummary {
  std::vector<McRow> rows;
  std::size_t reps = 0;
  std::size_t n_units = 0;
};

McSummary run_monte_carlo(const DgpSpec& spec, std::size_t n_units, std::size_t reps,
                          const McSelection& selection, std::uint64_t seed);

std::string render_mc_summary(const McSummary& summary);

}  // namespace dddiv
