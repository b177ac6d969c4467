#include "dddiv/iv_regression.hpp"

#include <sstream>

namespace dddiv {

namespace {

// Appends the rows of one unit-period observation.
void fill_row(Eigen::MatrixXd& x, Eigen::Index row, double c, double t, double a) {
  x(row, 0) = 1.0;
  x(row, 1) = c;
  x(row, 2) = t;
  x(row, 3) = a;
  x(row, 4) = c * t;
  x(row, 5) = c * a;
  x(row, 6) = t * a;
  x(row, 7) = c * t * a;
}

DesignMatrix build_core(const PanelDataset& ds, Cohort exposed, Cohort control, std::size_t pre_p,
                        std::size_t post_p, const std::string& label) {
  std::vector<std::uint32_t> keep;
  for (std::uint32_t u = 0; u < ds.n_units(); ++u) {
    if (ds.cohort(u) == exposed || ds.cohort(u) == control) keep.push_back(u);
  }
  DesignMatrix dm;
  dm.label = label;
  const Eigen::Index n = static_cast<Eigen::Index>(keep.size()) * 2;
  dm.x_first.resize(n, 8);
  dm.y.resize(n);
  dm.d.resize(n);

  Eigen::Index row = 0;
  for (std::uint32_t u : keep) {
    const double c = (ds.cohort(u) == exposed) ? 1.0 : 0.0;
    const double a = static_cast<double>(ds.group_a(u));
    for (std::size_t p : {pre_p, post_p}) {
      const double t = (p == post_p) ? 1.0 : 0.0;
      fill_row(dm.x_first, row, c, t, a);
      dm.y(row) = ds.outcome(u, p);
      dm.d(row) = static_cast<double>(ds.treatment(u, p));
      dm.cell_counts[static_cast<std::size_t>(c) * 4 + static_cast<std::size_t>(t) * 2 +
                     static_cast<std::size_t>(a)] += 1;
      ++row;
    }
  }
  for (std::size_t k = 0; k < 8; ++k) {
    if (dm.cell_counts[k] == 0) {
      std::ostringstream os;
      os << "empty (C,T,A) cell (" << (k >> 2) << "," << ((k >> 1) & 1) << "," << (k & 1) << ")";
      throw Error(ErrorCode::EmptyCell, os.str());
    }
  }
  return dm;
}

}  // namespace

DesignMatrix build_design(const PanelDataset& dataset) {
  if (dataset.mode() != PanelMode::TwoPeriod) {
    throw Error(ErrorCode::ModeMismatch, "two-period design requires two-period mode");
  }
  return build_core(dataset, Cohort::of(1), Cohort::of(0), 0, 1, "two_period");
}

DesignMatrix build_design(const PanelDataset& dataset, const StaggeredTarget& target) {
  if (dataset.mode() != PanelMode::Staggered) {
    throw Error(ErrorCode::ModeMismatch, "staggered design requires staggered mode");
  }
  auto idx = cohort_index(dataset);
  Cohort control = target.control_cohort(idx.last_exposed);
  if (target.control == ControlPolicy::LastExposed && target.post_period() > control.value() - 1) {
    throw Error(ErrorCode::NoControlCohort, "post period reaches the control cohort's exposure");
  }
  const auto pre_p = static_cast<std::size_t>(dataset.period_index(target.pre_period()));
  const auto post_p = static_cast<std::size_t>(dataset.period_index(target.post_period()));
  std::ostringstream label;
  label << "c=" << target.cohort << " l=" << target.rel_period;
  return build_core(dataset, Cohort::of(target.cohort), control, pre_p, post_p, label.str());
}

IvFit two_stage_ls(const DesignMatrix& design) {
  const auto& x1 = design.x_first;

  Eigen::Matrix<double, 8, 8> xtx = x1.transpose() * x1;
  Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 8, 8>> qr1(xtx);
  if (qr1.rank() < 8) {
    throw Error(ErrorCode::SingularDesign, "first-stage normal equations are rank deficient");
  }
  IvFit fit;
  fit.pi = qr1.solve(x1.transpose() * design.d);
  Eigen::VectorXd d_hat = x1 * fit.pi;
  fit.first_stage_rss = (design.d - d_hat).squaredNorm();

  Eigen::MatrixXd x2(x1.rows(), 8);
  x2.leftCols(7) = x1.leftCols(7);
  x2.col(7) = d_hat;
  Eigen::Matrix<double, 8, 8> xtx2 = x2.transpose() * x2;
  Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 8, 8>> qr2(xtx2);
  if (qr2.rank() < 8) {
    throw Error(ErrorCode::SingularDesign, "second stage is rank deficient (no first-stage variation)");
  }
  fit.beta = qr2.solve(x2.transpose() * design.y);
  fit.beta_iv = fit.beta(7);
  fit.second_stage_rss = (design.y - x2 * fit.beta).squaredNorm();
  return fit;
}

}  // namespace dddiv
