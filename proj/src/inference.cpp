#include "dddiv/inference.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <random>
#include <sstream>

namespace dddiv {

namespace {

struct CellKey {
  Cohort cohort;
  int group_a;
  double sign;  // +1 exposed_a1 / control_a0, -1 otherwise
  double share; // sample share among contributing units
};

// Shared core: psi_i = sign(cell) * (delta_i - mean_cell(delta)) / (share * ddd_d)
// with delta_i = dY_i - w * dD_i over the target's period pair. Cell means are
// refined once so the vector sums to zero at machine precision even when the
// outcome scale dwarfs the deviations.
InfluenceVector influence_core(const PanelDataset& ds, const std::array<CellKey, 4>& cells,
                               std::size_t pre_p, std::size_t post_p, double w, double ddd_d,
                               const std::string& label) {
  std::array<std::vector<std::uint32_t>, 4> members;
  for (std::uint32_t u = 0; u < ds.n_units(); ++u) {
    for (std::size_t k = 0; k < 4; ++k) {
      if (ds.cohort(u) == cells[k].cohort && ds.group_a(u) == cells[k].group_a) {
        members[k].push_back(u);
        break;
      }
    }
  }
  std::size_t n_contrib = 0;
  for (const auto& m : members) n_contrib += m.size();

  InfluenceVector iv;
  iv.point = w;
  iv.target_label = label;
  iv.values.reserve(n_contrib);
  iv.unit_index.reserve(n_contrib);

  auto delta_of = [&](std::uint32_t u) {
    double dy = ds.outcome(u, post_p) - ds.outcome(u, pre_p);
    double dd = static_cast<double>(ds.treatment(u, post_p) - ds.treatment(u, pre_p));
    return dy - w * dd;
  };

  for (std::size_t k = 0; k < 4; ++k) {
    const auto& m = members[k];
    std::vector<double> delta(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) delta[j] = delta_of(m[j]);
    double mean1 = compensated_mean(delta);
    CompensatedSum resid;
    for (double d : delta) resid.add(d - mean1);
    double mean2 = resid.value() / static_cast<double>(delta.size());

    double share = static_cast<double>(m.size()) / static_cast<double>(n_contrib);
    double scale = cells[k].sign / (share * ddd_d);
    for (std::size_t j = 0; j < m.size(); ++j) {
      iv.values.push_back(scale * ((delta[j] - mean1) - mean2));
      iv.unit_index.push_back(m[j]);
    }
  }
  return iv;
}

}  // namespace

InfluenceVector influence_two_period(const PanelDataset& dataset, const TripleWaldEstimate& est) {
  if (est.denominator == 0.0) throw Error(ErrorCode::ZeroDenominator, "triple Wald-DID denominator is zero");
  std::array<CellKey, 4> cells = {{
      {Cohort::of(1), 1, +1.0, 0.0},
      {Cohort::of(0), 1, -1.0, 0.0},
      {Cohort::of(1), 0, -1.0, 0.0},
      {Cohort::of(0), 0, +1.0, 0.0},
  }};
  return influence_core(dataset, cells, 0, 1, est.estimate, est.denominator, "two_period");
}

InfluenceVector influence_staggered(const PanelDataset& dataset, const StaggeredEstimate& est) {
  if (est.denominator == 0.0) throw Error(ErrorCode::ZeroDenominator, "triple Wald-DID denominator is zero");
  Cohort exposed = Cohort::of(est.target.cohort);
  std::array<CellKey, 4> cells = {{
      {exposed, 1, +1.0, 0.0},
      {est.control_cohort, 1, -1.0, 0.0},
      {exposed, 0, -1.0, 0.0},
      {est.control_cohort, 0, +1.0, 0.0},
  }};
  std::ostringstream label;
  label << "c=" << est.target.cohort << " l=" << est.target.rel_period
        << " control=" << control_policy_name(est.target.control);
  const auto pre_p = static_cast<std::size_t>(dataset.period_index(est.target.pre_period()));
  const auto post_p = static_cast<std::size_t>(dataset.period_index(est.target.post_period()));
  return influence_core(dataset, cells, pre_p, post_p, est.estimate, est.denominator, label.str());
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard_normal(0.0, 1.0);
  return boost::math::quantile(standard_normal, p);
}

InferenceResult se_and_ci(const InfluenceVector& iv, double level) {
  const std::size_t n = iv.values.size();
  if (n < 2) throw Error(ErrorCode::DegenerateSample, "need at least two contributing units");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidSpec, "ci level must be in (0,1)");

  double mean = compensated_mean(iv.values);
  CompensatedSum ssq;
  for (double v : iv.values) ssq.add((v - mean) * (v - mean));
  double sd = std::sqrt(ssq.value() / static_cast<double>(n - 1));

  InferenceResult res;
  res.n = n;
  res.ci_level = level;
  res.variance_estimator = "influence_function";
  res.se = sd / std::sqrt(static_cast<double>(n));
  res.degenerate = (sd == 0.0);
  double z = normal_quantile(0.5 + level / 2.0);
  res.ci_lo = iv.point - z * res.se;
  res.ci_hi = iv.point + z * res.se;
  return res;
}

InferenceResult bootstrap_se(const PanelDataset& dataset, const BootstrapEstimator& estimator,
                             const BootstrapOptions& opts) {
  if (opts.replications < 100) {
    throw Error(ErrorCode::InvalidSpec, "bootstrap needs at least 100 replications");
  }
  auto run = [&](std::span<const std::uint32_t> units) -> double {
    switch (estimator.kind) {
      case BootstrapEstimator::Kind::TwoPeriodTriple:
        return triple_wald_did_over(dataset, units).estimate;
      case BootstrapEstimator::Kind::Staggered:
        return staggered_triple_wald_over(dataset, units, estimator.target).estimate;
      case BootstrapEstimator::Kind::PlainWald:
        return plain_wald_did_over(dataset, units, estimator.group_a);
    }
    throw Error(ErrorCode::Usage, "unknown bootstrap estimator");
  };

  std::vector<std::uint32_t> full(dataset.n_units());
  for (std::uint32_t u = 0; u < full.size(); ++u) full[u] = u;
  const double point = run(full);

  const std::size_t n = dataset.n_units();
  std::vector<double> estimates;
  estimates.reserve(opts.replications);
  std::size_t rejected = 0;
  const std::size_t max_rejections = opts.max_rejections_factor * opts.replications;
  std::vector<std::uint32_t> sample(n);

  for (std::size_t b = 0; b < opts.replications; ++b) {
    // One generator per replicate: results do not depend on draw order.
    std::mt19937_64 rng(mix_seed(opts.seed, b));
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
    for (;;) {
      for (std::size_t j = 0; j < n; ++j) sample[j] = pick(rng);
      try {
        estimates.push_back(run(sample));
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyCell && e.code() != ErrorCode::WeakOrZeroFirstStage) throw;
        if (++rejected > max_rejections) {
          throw Error(ErrorCode::ResampleDegenerate,
                      "rejected " + std::to_string(rejected) + " resamples");
        }
      }
    }
  }

  double mean = compensated_mean(estimates);
  CompensatedSum ssq;
  for (double v : estimates) ssq.add((v - mean) * (v - mean));
  double sd = std::sqrt(ssq.value() / static_cast<double>(estimates.size() - 1));

  InferenceResult res;
  res.n = n;
  res.ci_level = opts.level;
  res.variance_estimator = "bootstrap";
  res.se = sd;
  res.degenerate = (sd == 0.0);
  res.resamples_rejected = rejected;
  double z = normal_quantile(0.5 + opts.level / 2.0);
  res.ci_lo = point - z * res.se;
  res.ci_hi = point + z * res.se;
  return res;
}

}  // namespace dddiv
