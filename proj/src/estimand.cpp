#include "dddiv/estimand.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

namespace dddiv {

namespace {

std::vector<std::uint32_t> all_units(const PanelDataset& ds) {
  std::vector<std::uint32_t> idx(ds.n_units());
  std::iota(idx.begin(), idx.end(), 0u);
  return idx;
}

}  // namespace

CellStats cell_stats_over(const PanelDataset& dataset, std::span<const std::uint32_t> units,
                          Cohort cohort, int group_a, std::size_t pre_p, std::size_t post_p) {
  CompensatedSum sum_dy, sum_dd;
  std::size_t n = 0;
  for (std::uint32_t u : units) {
    if (dataset.cohort(u) != cohort || dataset.group_a(u) != group_a) continue;
    sum_dy.add(dataset.outcome(u, post_p) - dataset.outcome(u, pre_p));
    sum_dd.add(static_cast<double>(dataset.treatment(u, post_p) - dataset.treatment(u, pre_p)));
    ++n;
  }
  if (n == 0) {
    throw Error(ErrorCode::EmptyCell, "cohort=" + cohort.to_string() + " a=" + std::to_string(group_a));
  }
  CellStats cs;
  cs.cohort = cohort;
  cs.group_a = group_a;
  cs.n = n;
  cs.did_y = sum_dy.value() / static_cast<double>(n);
  cs.did_d = sum_dd.value() / static_cast<double>(n);
  return cs;
}

CellStats cell_stats(const PanelDataset& dataset, Cohort cohort, int group_a, std::size_t pre_p,
                     std::size_t post_p) {
  auto idx = all_units(dataset);
  return cell_stats_over(dataset, idx, cohort, group_a, pre_p, post_p);
}

DddContrast ddd(const CellQuad& cells) {
  DddContrast c;
  c.ddd_y = (cells.exposed_a1.did_y - cells.control_a1.did_y) -
            (cells.exposed_a0.did_y - cells.control_a0.did_y);
  c.ddd_d = (cells.exposed_a1.did_d - cells.control_a1.did_d) -
            (cells.exposed_a0.did_d - cells.control_a0.did_d);
  return c;
}

TripleWaldEstimate triple_wald_did_over(const PanelDataset& dataset,
                                        std::span<const std::uint32_t> units,
                                        const EstimandOptions& opts) {
  if (dataset.mode() != PanelMode::TwoPeriod) {
    throw Error(ErrorCode::ModeMismatch, "triple_wald_did requires two-period mode");
  }
  CellQuad cells;
  cells.exposed_a1 = cell_stats_over(dataset, units, Cohort::of(1), 1, 0, 1);
  cells.control_a1 = cell_stats_over(dataset, units, Cohort::of(0), 1, 0, 1);
  cells.exposed_a0 = cell_stats_over(dataset, units, Cohort::of(1), 0, 0, 1);
  cells.control_a0 = cell_stats_over(dataset, units, Cohort::of(0), 0, 0, 1);

  auto c = ddd(cells);
  if (std::abs(c.ddd_d) < opts.relevance_tol) {
    throw Error(ErrorCode::WeakOrZeroFirstStage,
                "|ddd_d| = " + format_double(std::abs(c.ddd_d)) + " below relevance tolerance");
  }
  TripleWaldEstimate est;
  est.numerator = c.ddd_y;
  est.denominator = c.ddd_d;
  est.estimate = c.ddd_y / c.ddd_d;
  est.cells = cells;
  est.n_total =
      cells.exposed_a1.n + cells.control_a1.n + cells.exposed_a0.n + cells.control_a0.n;
  est.diagnostics.weak_first_stage = std::abs(c.ddd_d) < opts.weak_tol;
  est.diagnostics.sign_warning = c.ddd_d < 0.0;
  return est;
}

TripleWaldEstimate triple_wald_did(const PanelDataset& dataset, const EstimandOptions& opts) {
  auto idx = all_units(dataset);
  return triple_wald_did_over(dataset, idx, opts);
}

double plain_wald_did_over(const PanelDataset& dataset, std::span<const std::uint32_t> units,
                           int group_a, const EstimandOptions& opts) {
  if (dataset.mode() != PanelMode::TwoPeriod) {
    throw Error(ErrorCode::ModeMismatch, "plain_wald_did requires two-period mode");
  }
  auto exposed = cell_stats_over(dataset, units, Cohort::of(1), group_a, 0, 1);
  auto control = cell_stats_over(dataset, units, Cohort::of(0), group_a, 0, 1);
  double num = exposed.did_y - control.did_y;
  double den = exposed.did_d - control.did_d;
  if (std::abs(den) < opts.relevance_tol) {
    throw Error(ErrorCode::WeakOrZeroFirstStage, "plain Wald-DID first stage is zero");
  }
  return num / den;
}

double plain_wald_did(const PanelDataset& dataset, int group_a, const EstimandOptions& opts) {
  auto idx = all_units(dataset);
  return plain_wald_did_over(dataset, idx, group_a, opts);
}

namespace {

void render_cell(std::ostream& os, const char* role, const CellStats& cs) {
  os << "cell role=" << role << " cohort=" << cs.cohort.to_string() << " a=" << cs.group_a
     << " n=" << cs.n << " did_y=" << format_double(cs.did_y)
     << " did_d=" << format_double(cs.did_d) << "\n";
}

}  // namespace

std::string render_estimate_report(const TripleWaldEstimate& est, const std::string& title,
                                   const std::string& target_line) {
  std::ostringstream os;
  os << "report " << title << "\n";
  if (!target_line.empty()) os << target_line << "\n";
  os << "estimate " << format_double(est.estimate) << "\n";
  os << "numerator " << format_double(est.numerator) << "\n";
  os << "denominator " << format_double(est.denominator) << "\n";
  os << "n_total " << est.n_total << "\n";
  render_cell(os, "exposed_a1", est.cells.exposed_a1);
  render_cell(os, "control_a1", est.cells.control_a1);
  render_cell(os, "exposed_a0", est.cells.exposed_a0);
  render_cell(os, "control_a0", est.cells.control_a0);
  if (est.inference) {
    const auto& inf = *est.inference;
    os << "se " << format_double(inf.se) << "\n";
    os << "ci_level " << format_double(inf.ci_level) << "\n";
    os << "ci_lo " << format_double(inf.ci_lo) << "\n";
    os << "ci_hi " << format_double(inf.ci_hi) << "\n";
    os << "variance_estimator " << inf.variance_estimator << "\n";
    if (inf.degenerate) os << "flag degenerate_sample\n";
    if (inf.resamples_rejected > 0) os << "resamples_rejected " << inf.resamples_rejected << "\n";
  }
  if (est.diagnostics.weak_first_stage) os << "flag weak_first_stage\n";
  if (est.diagnostics.sign_warning) os << "flag negative_first_stage\n";
  return os.str();
}

}  // namespace dddiv
