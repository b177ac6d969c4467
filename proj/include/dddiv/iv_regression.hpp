#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>

#include "dddiv/staggered.hpp"

namespace dddiv {

// Stacked unit-period rows for the saturated triple-interaction regression.
// First stage: intercept, C, T, A, CT, CA, TA, CTA (the excluded instrument
// is the triple interaction). Second stage drops CTA and adds treatment.
struct DesignMatrix {
  Eigen::MatrixXd x_first;  // n x 8
  Eigen::VectorXd y;
  Eigen::VectorXd d;
  std::array<std::size_t, 8> cell_counts{};  // index = C*4 + T*2 + A
  std::string label;
};

struct IvFit {
  Eigen::Matrix<double, 8, 1> pi;    // first-stage coefficients
  Eigen::Matrix<double, 8, 1> beta;  // 7 indicators + fitted-treatment slope
  double beta_iv = 0.0;
  double first_stage_rss = 0.0;
  double second_stage_rss = 0.0;
};

DesignMatrix build_design(const PanelDataset& dataset);
DesignMatrix build_design(const PanelDataset& dataset, const StaggeredTarget& target);

// Two-stage least squares on the saturated design, solved through the
// normal equations with a rank-revealing factorization. beta_iv reproduces
// the cell-mean triple Wald-DID ratio exactly up to roundoff.
IvFit two_stage_ls(const DesignMatrix& design);

}  // namespace dddiv
