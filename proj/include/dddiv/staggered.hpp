#pragma once

#include <optional>
#include <vector>

#include "dddiv/estimand.hpp"

namespace dddiv {

enum class ControlPolicy { NeverExposed, LastExposed };

const char* control_policy_name(ControlPolicy policy);

// One estimable (cohort, relative period) contrast. Differences run from
// the cohort's last pre-exposure period c-1 to c+l; the control cohort is
// never-exposed or the last exposed cohort, which must itself still be
// unexposed at the post period (c+l <= max{C}-1).
struct StaggeredTarget {
  int cohort = 0;
  int rel_period = 0;
  ControlPolicy control = ControlPolicy::NeverExposed;
  int pre_period() const { return cohort - 1; }
  int post_period() const { return cohort + rel_period; }
  Cohort control_cohort(const std::optional<int>& last_exposed) const {
    if (control == ControlPolicy::NeverExposed) return Cohort::never();
    return Cohort::of(*last_exposed);
  }
};

struct StaggeredEstimate {
  StaggeredTarget target;
  Cohort control_cohort = Cohort::never();
  double estimate = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  CellQuad cells;
  std::size_t n_total = 0;
  EstimateDiagnostics diagnostics;
  std::optional<InferenceResult> inference;
};

// Batch entries keep per-target failures inline so one empty cell cannot
// abort the rest of the run.
struct StaggeredBatchEntry {
  StaggeredTarget target;
  std::optional<StaggeredEstimate> estimate;
  std::optional<ErrorCode> error;
  std::string error_detail;
};

// All (c, l) pairs whose four cells are populated, c ascending then l
// ascending. NeverExposed: l in 0..T-c. LastExposed: c and c+l both at most
// max{C}-1.
std::vector<StaggeredTarget> enumerate_targets(const PanelDataset& dataset, ControlPolicy policy);

StaggeredEstimate staggered_triple_wald(const PanelDataset& dataset, const StaggeredTarget& target,
                                        const EstimandOptions& opts = {});
StaggeredEstimate staggered_triple_wald_over(const PanelDataset& dataset,
                                             std::span<const std::uint32_t> units,
                                             const StaggeredTarget& target,
                                             const EstimandOptions& opts = {});

std::vector<StaggeredBatchEntry> estimate_all(const PanelDataset& dataset, ControlPolicy policy,
                                              const EstimandOptions& opts = {});

// Convenience summaries over a batch; the per-target contrasts are the
// estimands, these are just descriptive averages of them.
struct BatchAggregate {
  double unweighted = 0.0;
  double cohort_size_weighted = 0.0;
  std::size_t n_targets = 0;
};

BatchAggregate aggregate_estimates(const std::vector<StaggeredBatchEntry>& batch);

std::string render_batch_line(const StaggeredBatchEntry& entry);

}  // namespace dddiv
