#pragma once

#include <optional>
#include <span>
#include <string>

#include "dddiv/panel.hpp"

namespace dddiv {

// First-difference means for one (cohort, group) cell between a fixed pair
// of periods: did_y = mean of Y_post - Y_pre, did_d likewise for treatment.
struct CellStats {
  Cohort cohort = Cohort::never();
  int group_a = 0;
  std::size_t n = 0;
  double did_y = 0.0;
  double did_d = 0.0;
};

// The four cells of one triple contrast. "exposed" is the cohort whose
// instrument turns on between the two periods, "control" the comparison
// cohort (two-period: the C=0 group; staggered: never- or last-exposed).
struct CellQuad {
  CellStats exposed_a1;
  CellStats control_a1;
  CellStats exposed_a0;
  CellStats control_a0;
};

struct EstimateDiagnostics {
  bool weak_first_stage = false;  // |ddd_d| below warn threshold
  bool sign_warning = false;      // ddd_d < 0: relevance is posited positive
};

struct InferenceResult {
  double se = 0.0;
  double ci_level = 0.95;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::string variance_estimator;  // "influence_function" or "bootstrap"
  std::size_t n = 0;
  bool degenerate = false;
  std::size_t resamples_rejected = 0;  // bootstrap only
};

struct TripleWaldEstimate {
  double estimate = 0.0;
  double numerator = 0.0;    // DDD of Y
  double denominator = 0.0;  // DDD of D
  CellQuad cells;
  std::size_t n_total = 0;
  EstimateDiagnostics diagnostics;
  std::optional<InferenceResult> inference;
};

struct EstimandOptions {
  double relevance_tol = 1e-10;  // |ddd_d| below this is a zero first stage
  double weak_tol = 0.01;        // warning threshold, surfaced as a flag
};

// Sample means of within-unit changes over the (cohort, group) cell, taken
// between period_index pre_p and post_p. Computed with compensated sums.
CellStats cell_stats(const PanelDataset& dataset, Cohort cohort, int group_a, std::size_t pre_p,
                     std::size_t post_p);

// Same, restricted to a multiset of unit indices (bootstrap resamples).
CellStats cell_stats_over(const PanelDataset& dataset, std::span<const std::uint32_t> units,
                          Cohort cohort, int group_a, std::size_t pre_p, std::size_t post_p);

struct DddContrast {
  double ddd_y = 0.0;
  double ddd_d = 0.0;
};

// (exposed,1) - (control,1) - [(exposed,0) - (control,0)], for Y and D.
DddContrast ddd(const CellQuad& cells);

// Two-period triple Wald-DID point estimate: ratio of the outcome DDD to the
// treatment DDD over the four (C,A) cells. Inference fields are left empty.
TripleWaldEstimate triple_wald_did(const PanelDataset& dataset, const EstimandOptions& opts = {});
TripleWaldEstimate triple_wald_did_over(const PanelDataset& dataset,
                                        std::span<const std::uint32_t> units,
                                        const EstimandOptions& opts = {});

// Two-group Wald-DID within group a (no third difference); comparison
// baseline only.
double plain_wald_did(const PanelDataset& dataset, int group_a, const EstimandOptions& opts = {});
double plain_wald_did_over(const PanelDataset& dataset, std::span<const std::uint32_t> units,
                           int group_a, const EstimandOptions& opts = {});

std::string render_estimate_report(const TripleWaldEstimate& est, const std::string& title,
                                   const std::string& target_line = "");

}  // namespace dddiv
