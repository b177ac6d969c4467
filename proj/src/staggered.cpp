#include "dddiv/staggered.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dddiv {

namespace {

std::vector<std::uint32_t> all_units(const PanelDataset& ds) {
  std::vector<std::uint32_t> idx(ds.n_units());
  std::iota(idx.begin(), idx.end(), 0u);
  return idx;
}

bool cell_nonempty(const CohortIndex& idx, const PanelDataset& ds, Cohort c, int a) {
  auto it = idx.units.find(c);
  if (it == idx.units.end()) return false;
  for (std::size_t u : it->second) {
    if (ds.group_a(u) == a) return true;
  }
  return false;
}

}  // namespace

const char* control_policy_name(ControlPolicy policy) {
  return policy == ControlPolicy::NeverExposed ? "never" : "last";
}

std::vector<StaggeredTarget> enumerate_targets(const PanelDataset& dataset, ControlPolicy policy) {
  auto idx = cohort_index(dataset);
  const int T = static_cast<int>(dataset.n_periods());
  if (!idx.last_exposed) {
    throw Error(ErrorCode::NoControlCohort, "no exposed cohorts to contrast");
  }

  Cohort control = Cohort::never();
  int last_usable_post = T;
  if (policy == ControlPolicy::NeverExposed) {
    if (!idx.has_never) {
      throw Error(ErrorCode::NoControlCohort, "no never-exposed units; consider --control last");
    }
  } else {
    std::size_t finite = idx.units.size() - (idx.has_never ? 1 : 0);
    if (finite < 2) {
      throw Error(ErrorCode::NoControlCohort, "last-exposed control needs two distinct finite cohorts");
    }
    control = Cohort::of(*idx.last_exposed);
    last_usable_post = *idx.last_exposed - 1;
  }

  std::vector<StaggeredTarget> out;
  for (const auto& [cohort, _] : idx.units) {
    if (cohort.is_never()) continue;
    const int c = cohort.value();
    if (policy == ControlPolicy::LastExposed && c > *idx.last_exposed - 1) continue;
    bool cells_ok = cell_nonempty(idx, dataset, cohort, 1) && cell_nonempty(idx, dataset, cohort, 0) &&
                    cell_nonempty(idx, dataset, control, 1) && cell_nonempty(idx, dataset, control, 0);
    if (!cells_ok) continue;
    for (int l = 0; c + l <= last_usable_post; ++l) {
      out.push_back({c, l, policy});
    }
  }
  return out;
}

StaggeredEstimate staggered_triple_wald_over(const PanelDataset& dataset,
                                             std::span<const std::uint32_t> units,
                                             const StaggeredTarget& target,
                                             const EstimandOptions& opts) {
  if (dataset.mode() != PanelMode::Staggered) {
    throw Error(ErrorCode::ModeMismatch, "staggered_triple_wald requires staggered mode");
  }
  auto idx = cohort_index(dataset);
  Cohort exposed = Cohort::of(target.cohort);
  Cohort control = target.control_cohort(idx.last_exposed);
  if (target.control == ControlPolicy::LastExposed) {
    // Both periods read must predate the control cohort's own exposure.
    if (target.post_period() > control.value() - 1) {
      throw Error(ErrorCode::NoControlCohort,
                  "post period " + std::to_string(target.post_period()) +
                      " reaches the control cohort's exposure");
    }
  }
  const std::size_t pre_p = static_cast<std::size_t>(dataset.period_index(target.pre_period()));
  const std::size_t post_p = static_cast<std::size_t>(dataset.period_index(target.post_period()));

  CellQuad cells;
  cells.exposed_a1 = cell_stats_over(dataset, units, exposed, 1, pre_p, post_p);
  cells.control_a1 = cell_stats_over(dataset, units, control, 1, pre_p, post_p);
  cells.exposed_a0 = cell_stats_over(dataset, units, exposed, 0, pre_p, post_p);
  cells.control_a0 = cell_stats_over(dataset, units, control, 0, pre_p, post_p);

  auto contrast = ddd(cells);
  if (std::abs(contrast.ddd_d) < opts.relevance_tol) {
    throw Error(ErrorCode::WeakOrZeroFirstStage,
                "|ddd_d| = " + format_double(std::abs(contrast.ddd_d)) + " below relevance tolerance");
  }
  StaggeredEstimate est;
  est.target = target;
  est.control_cohort = control;
  est.numerator = contrast.ddd_y;
  est.denominator = contrast.ddd_d;
  est.estimate = contrast.ddd_y / contrast.ddd_d;
  est.cells = cells;
  est.n_total =
      cells.exposed_a1.n + cells.control_a1.n + cells.exposed_a0.n + cells.control_a0.n;
  est.diagnostics.weak_first_stage = std::abs(contrast.ddd_d) < opts.weak_tol;
  est.diagnostics.sign_warning = contrast.ddd_d < 0.0;
  return est;
}

StaggeredEstimate staggered_triple_wald(const PanelDataset& dataset, const StaggeredTarget& target,
                                        const EstimandOptions& opts) {
  auto idx = all_units(dataset);
  return staggered_triple_wald_over(dataset, idx, target, opts);
}

std::vector<StaggeredBatchEntry> estimate_all(const PanelDataset& dataset, ControlPolicy policy,
                                              const EstimandOptions& opts) {
  auto targets = enumerate_targets(dataset, policy);
  std::vector<StaggeredBatchEntry> out;
  out.reserve(targets.size());
  for (const auto& target : targets) {
    StaggeredBatchEntry entry;
    entry.target = target;
    try {
      entry.estimate = staggered_triple_wald(dataset, target, opts);
    } catch (const Error& e) {
      entry.error = e.code();
      entry.error_detail = e.what();
    }
    out.push_back(std::move(entry));
  }
  return out;
}

BatchAggregate aggregate_estimates(const std::vector<StaggeredBatchEntry>& batch) {
  BatchAggregate agg;
  CompensatedSum sum, wsum, wtotal;
  for (const auto& entry : batch) {
    if (!entry.estimate) continue;
    const auto& est = *entry.estimate;
    double w = static_cast<double>(est.cells.exposed_a1.n + est.cells.exposed_a0.n);
    sum.add(est.estimate);
    wsum.add(w * est.estimate);
    wtotal.add(w);
    ++agg.n_targets;
  }
  if (agg.n_targets == 0) return agg;
  agg.unweighted = sum.value() / static_cast<double>(agg.n_targets);
  agg.cohort_size_weighted = wsum.value() / wtotal.value();
  return agg;
}

std::string render_batch_line(const StaggeredBatchEntry& entry) {
  std::ostringstream os;
  os << "c=" << entry.target.cohort << " l=" << entry.target.rel_period
     << " control=" << control_policy_name(entry.target.control);
  if (entry.estimate) {
    const auto& est = *entry.estimate;
    os << " est=" << format_double(est.estimate);
    os << " se=" << (est.inference ? format_double(est.inference->se) : "na");
    os << " n=" << est.n_total;
    if (est.diagnostics.weak_first_stage) os << " [weak_first_stage]";
    if (est.diagnostics.sign_warning) os << " [negative_first_stage]";
  } else {
    os << " est=na se=na n=0 [" << error_code_name(*entry.error) << "]";
  }
  return os.str();
}

}  // namespace dddiv
