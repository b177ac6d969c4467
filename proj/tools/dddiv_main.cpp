// Command-line front end: validate panel designs, run the triple Wald-DID
// estimators with influence-function or bootstrap inference, cross-check
// against the saturated IV regression, and drive simulation studies.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dddiv/inference.hpp"
#include "dddiv/iv_regression.hpp"
#include "dddiv/simulation.hpp"

namespace fs = std::filesystem;
using namespace dddiv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;

int exit_code_for(const Error& e) {
  return (e.code() == ErrorCode::Io || e.code() == ErrorCode::Usage) ? kExitIo : kExitDomain;
}

struct CommonArgs {
  std::string input;
  std::string mode = "two-period";
  std::string delim = "comma";
  int treatment_levels = 1;
  ColumnMap columns;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--input", args.input, "panel data file (delimited text)")->required();
  cmd->add_option("--mode", args.mode, "two-period | staggered")
      ->check(CLI::IsMember({"two-period", "staggered"}));
  cmd->add_option("--delim", args.delim, "field delimiter")->check(CLI::IsMember({"comma", "tab"}));
  cmd->add_option("--treatment-levels", args.treatment_levels, "max treatment level J (1 = binary)");
  cmd->add_option("--col-unit", args.columns.unit, "unit id column");
  cmd->add_option("--col-time", args.columns.time, "time column");
  cmd->add_option("--col-y", args.columns.outcome, "outcome column");
  cmd->add_option("--col-d", args.columns.treatment, "treatment column");
  cmd->add_option("--col-z", args.columns.instrument, "instrument column (optional in the file)");
  cmd->add_option("--col-a", args.columns.group_a, "group flag column");
  cmd->add_option("--col-cohort", args.columns.cohort, "cohort column ('inf' or empty = never)");
  cmd->add_option("--out", args.out_dir, "output directory (default: stdout)");
}

PanelMode mode_of(const CommonArgs& args) {
  return args.mode == "two-period" ? PanelMode::TwoPeriod : PanelMode::Staggered;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

PanelDataset load_input(const CommonArgs& args) {
  std::string text = read_file(args.input);
  std::istringstream in(text);
  auto ds = load_panel(in, args.columns, mode_of(args), args.delim == "tab" ? '\t' : ',',
                       args.treatment_levels);
  return ds.has_instrument() ? ds : derive_instrument(ds);
}

// Echoes enough to rerun the command and pin the inputs it saw.
std::string render_manifest(const std::vector<std::string>& argv_echo,
                            const std::vector<std::string>& input_paths, std::uint64_t seed) {
  std::ostringstream os;
  os << "tool dddiv " << kToolkitVersion << "\n";
  os << "argv";
  for (const auto& a : argv_echo) os << " " << a;
  os << "\n";
  for (const auto& path : input_paths) {
    std::string bytes = read_file(path);
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    os << "input " << path << " bytes=" << bytes.size() << " fnv1a64=" << hex << "\n";
  }
  os << "seed " << seed << "\n";
  return os.str();
}

void emit(const std::string& out_dir, const std::string& filename, const std::string& content) {
  if (out_dir.empty()) {
    std::cout << content;
    return;
  }
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / filename, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + filename + " under " + out_dir);
  out << content;
}

int run_validate(const CommonArgs& args, const std::vector<std::string>& argv_echo) {
  auto ds = load_input(args);
  auto violations = validate_design(ds);
  std::ostringstream report;
  for (const auto& v : violations) report << format_violation(v) << "\n";
  report << "violations " << violations.size() << "\n";
  std::cout << report.str();
  if (!args.out_dir.empty()) {
    emit(args.out_dir, "validation.txt", report.str());
    emit(args.out_dir, "manifest.txt", render_manifest(argv_echo, {args.input}, 0));
  }
  return violations.empty() ? kExitOk : kExitDomain;
}

struct EstimateArgs {
  CommonArgs common;
  std::string control = "never";
  std::string engine = "cells";
  std::string variance = "if";
  double ci_level = 0.95;
  std::size_t boot_reps = 500;
  std::uint64_t seed = 1;
  bool skip_validate = false;
};

void require_valid_design(const PanelDataset& ds) {
  auto violations = validate_design(ds);
  if (violations.empty()) return;
  std::ostringstream os;
  for (std::size_t i = 0; i < std::min<std::size_t>(violations.size(), 10); ++i) {
    os << format_violation(violations[i]) << "\n";
  }
  os << "design validation failed with " << violations.size() << " violations";
  throw Error(ErrorCode::MalformedValue, os.str());
}

InferenceResult run_inference_two_period(const PanelDataset& ds, const TripleWaldEstimate& est,
                                         const EstimateArgs& args) {
  if (args.variance == "bootstrap") {
    BootstrapEstimator kind;
    kind.kind = BootstrapEstimator::Kind::TwoPeriodTriple;
    return bootstrap_se(ds, kind, {args.boot_reps, args.seed, args.ci_level});
  }
  auto iv = influence_two_period(ds, est);
  return se_and_ci(iv, args.ci_level);
}

InferenceResult run_inference_staggered(const PanelDataset& ds, const StaggeredEstimate& est,
                                        const EstimateArgs& args) {
  if (args.variance == "bootstrap") {
    BootstrapEstimator kind;
    kind.kind = BootstrapEstimator::Kind::Staggered;
    kind.target = est.target;
    return bootstrap_se(ds, kind, {args.boot_reps, args.seed, args.ci_level});
  }
  auto iv = influence_staggered(ds, est);
  return se_and_ci(iv, args.ci_level);
}

double equivalence_gap(double beta_iv, double estimate) {
  return std::abs(beta_iv - estimate) / std::max(1.0, std::abs(estimate));
}

int run_estimate(const EstimateArgs& args, const std::vector<std::string>& argv_echo) {
  auto ds = load_input(args.common);
  if (!args.skip_validate) require_valid_design(ds);

  std::ostringstream report;
  int status = kExitOk;
  if (ds.mode() == PanelMode::TwoPeriod) {
    auto est = triple_wald_did(ds);
    std::ostringstream target_line;
    target_line << "engine " << args.engine;
    if (args.engine != "cells") {
      auto fit = two_stage_ls(build_design(ds));
      target_line << "\nbeta_iv " << format_double(fit.beta_iv);
      if (args.engine == "both") {
        target_line << "\nequivalence_gap " << format_double(equivalence_gap(fit.beta_iv, est.estimate));
      }
      if (args.engine == "iv") est.estimate = fit.beta_iv;
    }
    est.inference = run_inference_two_period(ds, est, args);
    report << render_estimate_report(est, "triple_wald_did", target_line.str());
  } else {
    ControlPolicy policy =
        args.control == "never" ? ControlPolicy::NeverExposed : ControlPolicy::LastExposed;
    auto batch = estimate_all(ds, policy);
    for (auto& entry : batch) {
      if (entry.estimate) {
        entry.estimate->inference = run_inference_staggered(ds, *entry.estimate, args);
      } else {
        status = kExitDomain;
      }
    }
    for (const auto& entry : batch) report << render_batch_line(entry) << "\n";
    auto agg = aggregate_estimates(batch);
    if (agg.n_targets > 0) {
      report << "aggregate_unweighted " << format_double(agg.unweighted)
             << " (descriptive average, not a design estimand)\n";
      report << "aggregate_cohort_weighted " << format_double(agg.cohort_size_weighted)
             << " (descriptive average, not a design estimand)\n";
    }
    report << "\n";
    for (const auto& entry : batch) {
      if (!entry.estimate) {
        report << "report target c=" << entry.target.cohort << " l=" << entry.target.rel_period
               << "\nerror " << error_code_name(*entry.error) << "\n\n";
        continue;
      }
      const auto& est = *entry.estimate;
      std::ostringstream target_line;
      target_line << "target c=" << est.target.cohort << " l=" << est.target.rel_period
                  << " control=" << control_policy_name(est.target.control)
                  << " pre=" << est.target.pre_period() << " post=" << est.target.post_period();
      if (args.engine != "cells") {
        auto fit = two_stage_ls(build_design(ds, est.target));
        target_line << "\nbeta_iv " << format_double(fit.beta_iv);
        if (args.engine == "both") {
          target_line << "\nequivalence_gap "
                      << format_double(equivalence_gap(fit.beta_iv, est.estimate));
        }
      }
      TripleWaldEstimate flat;
      flat.estimate = est.estimate;
      flat.numerator = est.numerator;
      flat.denominator = est.denominator;
      flat.cells = est.cells;
      flat.n_total = est.n_total;
      flat.diagnostics = est.diagnostics;
      flat.inference = est.inference;
      report << render_estimate_report(flat, "staggered_triple_wald", target_line.str()) << "\n";
    }
  }
  emit(args.common.out_dir, "estimate.txt", report.str());
  if (!args.common.out_dir.empty()) {
    emit(args.common.out_dir, "manifest.txt",
         render_manifest(argv_echo, {args.common.input}, args.seed));
  }
  return status;
}

int run_compare(const EstimateArgs& args, const std::vector<std::string>& argv_echo) {
  auto ds = load_input(args.common);
  if (ds.mode() != PanelMode::TwoPeriod) {
    throw Error(ErrorCode::ModeMismatch, "compare runs on two-period data");
  }
  if (!args.skip_validate) require_valid_design(ds);

  auto est = triple_wald_did(ds);
  est.inference = run_inference_two_period(ds, est, args);
  std::ostringstream report;
  report << render_estimate_report(est, "triple_wald_did", "");
  for (int a = 1; a >= 0; --a) {
    report << "plain_wald_did a=" << a << " ";
    try {
      double plain = plain_wald_did(ds, a);
      report << "est=" << format_double(plain)
             << " diff_vs_triple=" << format_double(plain - est.estimate) << "\n";
    } catch (const Error& e) {
      report << "error=" << error_code_name(e.code()) << "\n";
    }
  }
  emit(args.common.out_dir, "compare.txt", report.str());
  if (!args.common.out_dir.empty()) {
    emit(args.common.out_dir, "manifest.txt",
         render_manifest(argv_echo, {args.common.input}, args.seed));
  }
  return kExitOk;
}

struct SimulateArgs {
  std::string spec_path;
  std::size_t n = 0;  // 0 = take from spec
  std::size_t reps = 100;
  std::uint64_t seed = 0;  // 0 = take from spec
  std::string out_dir;
};

int run_simulate(const SimulateArgs& args, const std::vector<std::string>& argv_echo) {
  auto spec = dgp_spec_from_json_text(read_file(args.spec_path));
  if (args.seed != 0) spec.seed = args.seed;
  const std::size_t n = args.n != 0 ? args.n : spec.units;

  auto pop = generate(spec, n);
  std::ostringstream csv;
  write_panel_csv(csv, pop.dataset);
  emit(args.out_dir, "dataset.csv", csv.str());

  std::ostringstream oracle;
  oracle << "population_parameter " << format_double(population_parameter(spec)) << "\n";
  oracle << render_oracle_report(compute_oracle(pop.latents), spec.treatment_levels);
  oracle << render_audit_report(assumption_audit(pop.latents));
  emit(args.out_dir, "oracle.txt", oracle.str());

  McSelection selection;
  selection.plain = spec.mode == PanelMode::TwoPeriod;
  selection.staggered_last = true;
  auto mc = run_monte_carlo(spec, n, args.reps, selection, spec.seed);
  emit(args.out_dir, "mc_summary.txt", render_mc_summary(mc));

  if (!args.out_dir.empty()) {
    emit(args.out_dir, "manifest.txt", render_manifest(argv_echo, {args.spec_path}, spec.seed));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"triple difference-in-differences IV estimation toolkit"};
  app.require_subcommand(1);

  CommonArgs validate_args;
  auto* validate_cmd = app.add_subcommand("validate", "check the instrument against the design");
  add_common(validate_cmd, validate_args);

  EstimateArgs est_args;
  auto* estimate_cmd = app.add_subcommand("estimate", "triple Wald-DID estimates with inference");
  add_common(estimate_cmd, est_args.common);
  estimate_cmd->add_option("--control", est_args.control, "staggered control cohort")
      ->check(CLI::IsMember({"never", "last"}));
  estimate_cmd->add_option("--engine", est_args.engine, "cells | iv | both")
      ->check(CLI::IsMember({"cells", "iv", "both"}));
  estimate_cmd->add_option("--variance", est_args.variance, "if | bootstrap")
      ->check(CLI::IsMember({"if", "bootstrap"}));
  estimate_cmd->add_option("--ci-level", est_args.ci_level, "confidence level");
  estimate_cmd->add_option("--boot-reps", est_args.boot_reps, "bootstrap replications");
  estimate_cmd->add_option("--seed", est_args.seed, "bootstrap seed");
  estimate_cmd->add_flag("--skip-validate", est_args.skip_validate, "skip design validation");

  EstimateArgs cmp_args;
  auto* compare_cmd = app.add_subcommand("compare", "plain vs triple Wald-DID side by side");
  add_common(compare_cmd, cmp_args.common);
  compare_cmd->add_option("--variance", cmp_args.variance, "if | bootstrap")
      ->check(CLI::IsMember({"if", "bootstrap"}));
  compare_cmd->add_option("--ci-level", cmp_args.ci_level, "confidence level");
  compare_cmd->add_option("--boot-reps", cmp_args.boot_reps, "bootstrap replications");
  compare_cmd->add_option("--seed", cmp_args.seed, "bootstrap seed");
  compare_cmd->add_flag("--skip-validate", cmp_args.skip_validate, "skip design validation");

  SimulateArgs sim_args;
  auto* simulate_cmd = app.add_subcommand("simulate", "generate data, oracles, and Monte Carlo runs");
  simulate_cmd->add_option("--spec", sim_args.spec_path, "DGP configuration (JSON)")->required();
  simulate_cmd->add_option("--n", sim_args.n, "units (default: from spec)");
  simulate_cmd->add_option("--reps", sim_args.reps, "Monte Carlo replications (>= 2)");
  simulate_cmd->add_option("--seed", sim_args.seed, "seed override (default: from spec)");
  simulate_cmd->add_option("--out", sim_args.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitIo;
  }

  std::vector<std::string> argv_echo(argv, argv + argc);
  try {
    if (validate_cmd->parsed()) return run_validate(validate_args, argv_echo);
    if (estimate_cmd->parsed()) return run_estimate(est_args, argv_echo);
    if (compare_cmd->parsed()) return run_compare(cmp_args, argv_echo);
    if (simulate_cmd->parsed()) return run_simulate(sim_args, argv_echo);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitIo;
}
