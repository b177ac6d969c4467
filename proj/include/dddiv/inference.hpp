#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dddiv/staggered.hpp"

namespace dddiv {

// Per-unit linearization of a triple Wald-DID ratio. Values are deviations
// from sample cell means, so they sum to zero by construction; only units in
// the target's four cells contribute.
struct InfluenceVector {
  std::vector<double> values;
  std::vector<std::uint32_t> unit_index;
  double point = 0.0;
  std::string target_label;
};

InfluenceVector influence_two_period(const PanelDataset& dataset, const TripleWaldEstimate& est);
InfluenceVector influence_staggered(const PanelDataset& dataset, const StaggeredEstimate& est);

// se = sd(psi)/sqrt(n) with the n-1 divisor; CI from normal quantiles around
// the point estimate the vector was built for.
InferenceResult se_and_ci(const InfluenceVector& iv, double level = 0.95);

double normal_quantile(double p);

// Estimator rerun on each bootstrap resample.
struct BootstrapEstimator {
  enum class Kind { TwoPeriodTriple, Staggered, PlainWald };
  Kind kind = Kind::TwoPeriodTriple;
  StaggeredTarget target;  // Kind::Staggered
  int group_a = 1;         // Kind::PlainWald
};

struct BootstrapOptions {
  std::size_t replications = 500;  // B >= 100
  std::uint64_t seed = 0;
  double level = 0.95;
  std::size_t max_rejections_factor = 100;  // give up after factor*B degenerate draws
};

// Nonparametric bootstrap resampling whole unit paths with replacement.
// Draws that empty a needed cell are rejected and redrawn; the count is
// reported. Deterministic under a fixed seed.
InferenceResult bootstrap_se(const PanelDataset& dataset, const BootstrapEstimator& estimator,
                             const BootstrapOptions& opts);

}  // namespace dddiv
