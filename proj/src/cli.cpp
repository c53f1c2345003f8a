#include "penetrance/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI/CLI11.hpp>

#include "penetrance/pedigree.hpp"
#include "penetrance/priors.hpp"
#include "penetrance/reporting.hpp"
#include "penetrance/sampler.hpp"
#include "penetrance/simulator.hpp"

namespace penetrance {

namespace {

namespace fs = std::filesystem;

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
  }
}

void report_issues(std::ostream& os, const std::vector<ValidationIssue>& issues) {
  for (const auto& i : issues) {
    os << to_string(i.severity) << ": pedigree " << i.pedigree_id;
    if (i.member_id) os << " member " << *i.member_id;
    os << ": " << to_string(i.code) << ": " << i.message << '\n';
  }
}

// Loads and validates; returns the issue list alongside the pedigrees.
std::pair<std::vector<Pedigree>, std::vector<ValidationIssue>> load_pedigrees(
    const fs::path& path, const std::optional<fs::path>& twins, int max_age) {
  auto peds = read_pedigrees(path);
  if (twins) attach_twin_groups(peds, read_json(*twins));
  std::vector<ValidationIssue> issues;
  for (const auto& p : peds) {
    auto v = validate(p, max_age);
    issues.insert(issues.end(), v.begin(), v.end());
  }
  return {std::move(peds), std::move(issues)};
}

BaselineTable load_baseline(const std::optional<fs::path>& path, bool cumulative, int max_age, std::ostream& err) {
  if (!path) {
    err << "note: no --baseline given; using the built-in illustrative baseline\n";
    return example_crc_baseline(max_age);
  }
  return read_baseline_csv(*path, max_age, cumulative ? BaselineScale::cumulative : BaselineScale::annual);
}

struct EstimateArgs {
  fs::path pedigrees;
  std::optional<fs::path> baseline, noncarrier, priors, twins;
  bool baseline_cumulative = false;
  fs::path out = "penetrance_out";
  double ci_level = 0.95;
  double ratio_concentration = kDefaultRatioConcentration;
  ChainConfig cfg;
};

void add_chain_options(CLI::App& cmd, ChainConfig& cfg) {
  cmd.add_option("--n-iter-per-chain", cfg.n_iter_per_chain, "Iterations per chain")->capture_default_str();
  cmd.add_option("--n-chains", cfg.n_chains, "Number of chains")->capture_default_str();
  cmd.add_option("--seed", cfg.seed, "Seed; chain i uses seed + i")->capture_default_str();
  cmd.add_option("--var", cfg.var, "Initial proposal variances (8 values, or 4 when pooled)")
      ->delimiter(',')
      ->expected(4, 8);
  cmd.add_option("--burn-in", cfg.burn_in, "Fraction of each chain discarded")->capture_default_str();
  cmd.add_option("--thinning-factor", cfg.thinning_factor, "Keep every k-th sample")->capture_default_str();
  cmd.add_flag("--age-imputation", cfg.age_imputation, "Impute missing ages during sampling");
  cmd.add_option("--imp-interval", cfg.imp_interval, "Iterations between imputation rounds")->capture_default_str();
  cmd.add_flag("--remove-proband", cfg.remove_proband, "Drop the proband's phenotype from the likelihood");
  cmd.add_flag("--sex-specific", cfg.sex_specific, "Separate female and male curves (--sex-specific=false to pool)")
      ->default_val(true);
  cmd.add_flag("--median-max", cfg.median_max, "Bound the median by the baseline median onset age")->default_val(true);
  cmd.add_flag("--baseline-nc", cfg.baseline_nc, "Use the baseline as the noncarrier risk")->default_val(true);
  cmd.add_option("--max-age", cfg.max_age, "Maximum age")->capture_default_str();
  cmd.add_option("--prev", cfg.prev, "Carrier prevalence")->capture_default_str();
  cmd.add_option("--ncores", cfg.ncores, "Threads used across chains")->capture_default_str();
  cmd.add_flag("--debug-imputation", cfg.debug_imputation, "Write every imputed age to imputation_log.csv");
}

int run_estimate(const EstimateArgs& a, std::ostream& out, std::ostream& err) {
  a.cfg.validate();
  auto [peds, issues] = load_pedigrees(a.pedigrees, a.twins, a.cfg.max_age);
  report_issues(err, issues);
  if (has_errors(issues)) return kExitValidation;

  EstimationInputs inputs;
  inputs.pedigrees = std::move(peds);
  inputs.baseline = load_baseline(a.baseline, a.baseline_cumulative, a.cfg.max_age, err);
  if (a.noncarrier) {
    inputs.noncarrier = read_baseline_csv(*a.noncarrier, a.cfg.max_age,
                                          a.baseline_cumulative ? BaselineScale::cumulative : BaselineScale::annual);
  }
  inputs.priors = a.priors ? priors_from_json(read_json(*a.priors), a.cfg.max_age, &inputs.baseline,
                                              a.ratio_concentration)
                           : default_priors(a.cfg.max_age);

  const auto samples = run_chains(a.cfg, inputs);
  for (std::size_t i = 0; i < samples.chains.size(); ++i) {
    for (const auto& w : samples.chains[i].warnings) err << "warning: chain " << i << ": " << w << '\n';
  }
  write_outputs(a.out, samples, inputs.priors, a.ci_level);
  out << "wrote " << a.out.string() << '\n';
  for (std::size_t i = 0; i < samples.chains.size(); ++i) {
    out << "chain " << i << ": acceptance " << samples.chains[i].acceptance_rate() << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian estimation of age-specific penetrance from family data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Sample the penetrance posterior");
  estimate->add_option("--pedigrees", est.pedigrees, "Pedigree CSV or JSON")->required()->check(CLI::ExistingFile);
  estimate->add_option("--baseline", est.baseline, "Population risk CSV (age,female,male or age,rate)")
      ->check(CLI::ExistingFile);
  estimate->add_flag("--baseline-cumulative", est.baseline_cumulative, "Risk tables hold cumulative risk");
  estimate->add_option("--noncarrier", est.noncarrier, "Noncarrier risk CSV, used with --baseline-nc=false")
      ->check(CLI::ExistingFile);
  estimate->add_option("--priors", est.priors, "Prior configuration JSON")->check(CLI::ExistingFile);
  estimate->add_option("--twins", est.twins, "Monozygotic twin groups JSON")->check(CLI::ExistingFile);
  estimate->add_option("--out", est.out, "Output directory")->capture_default_str();
  estimate->add_option("--ci-level", est.ci_level, "Credible interval level")->capture_default_str();
  estimate->add_option("--ratio-concentration", est.ratio_concentration, "Beta a+b for ratio-based asymptote prior")
      ->capture_default_str();
  add_chain_options(*estimate, est.cfg);

  std::optional<fs::path> sim_config;
  int n_probands = 130;
  std::uint64_t sim_seed = 1;
  fs::path sim_out = "simulated";
  double mask_rate = 0.0;
  std::optional<double> genotyping_rate;
  std::optional<fs::path> sim_baseline;
  bool sim_baseline_cumulative = false;
  auto* simulate = app.add_subcommand("simulate", "Simulate an ascertained family study");
  simulate->add_option("--config", sim_config, "Simulation config JSON")->check(CLI::ExistingFile);
  simulate->add_option("--n-probands", n_probands, "Number of families")->capture_default_str();
  simulate->add_option("--seed", sim_seed, "Seed")->capture_default_str();
  simulate->add_option("--out", sim_out, "Output directory")->capture_default_str();
  simulate->add_option("--mask-rate", mask_rate, "Fraction of ages withheld")->capture_default_str();
  simulate->add_option("--genotyping-rate", genotyping_rate, "Fraction of relatives with a reported genotype");
  simulate->add_option("--baseline", sim_baseline, "Population risk CSV")->check(CLI::ExistingFile);
  simulate->add_flag("--baseline-cumulative", sim_baseline_cumulative, "Risk table holds cumulative risk");

  fs::path val_path;
  int val_max_age = 94;
  std::optional<fs::path> val_twins;
  auto* validate_cmd = app.add_subcommand("validate", "Check pedigree files");
  validate_cmd->add_option("--pedigrees", val_path, "Pedigree CSV or JSON")->required()->check(CLI::ExistingFile);
  validate_cmd->add_option("--twins", val_twins, "Monozygotic twin groups JSON")->check(CLI::ExistingFile);
  validate_cmd->add_option("--max-age", val_max_age, "Maximum age")->capture_default_str();

  fs::path dist_path;
  int prior_max_age = 94;
  std::optional<fs::path> prior_baseline, prior_out;
  double prior_concentration = kDefaultRatioConcentration;
  auto* priors_cmd = app.add_subcommand("priors", "Build priors from a study summary and print them");
  priors_cmd->add_option("--distribution", dist_path, "Prior configuration or distribution data JSON")
      ->required()
      ->check(CLI::ExistingFile);
  priors_cmd->add_option("--max-age", prior_max_age, "Maximum age")->capture_default_str();
  priors_cmd->add_option("--baseline", prior_baseline, "Population risk CSV, needed for a ratio")
      ->check(CLI::ExistingFile);
  priors_cmd->add_option("--ratio-concentration", prior_concentration, "Beta a+b for ratio-based asymptote prior")
      ->capture_default_str();
  priors_cmd->add_option("--out", prior_out, "Also write the priors to this file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitFailure;
  }

  try {
    if (*estimate) return run_estimate(est, out, err);

    if (*simulate) {
      SimConfig cfg = sim_config ? sim_config_from_json(read_json(*sim_config)) : mlh1_like_config();
      if (simulate->count("--n-probands") || !sim_config) cfg.n_probands = n_probands;
      if (simulate->count("--seed") || !sim_config) cfg.seed = sim_seed;
      if (simulate->count("--mask-rate")) cfg.mask_age_dx = cfg.mask_cur_age = mask_rate;
      if (genotyping_rate) cfg.genotyping_rate = *genotyping_rate;
      if (sim_baseline) {
        cfg.baseline = read_baseline_csv(*sim_baseline, cfg.max_age,
                                         sim_baseline_cumulative ? BaselineScale::cumulative : BaselineScale::annual);
      }
      const auto study = simulate_study(cfg);
      fs::create_directories(sim_out);
      std::ofstream csv(sim_out / "pedigrees.csv");
      std::ofstream truth(sim_out / "truth.json");
      if (!csv || !truth) throw std::runtime_error("cannot write to " + sim_out.string());
      write_pedigrees_csv(csv, study.pedigrees);
      truth << truth_to_json(cfg, study).dump(2) << '\n';
      std::size_t members = 0;
      for (const auto& p : study.pedigrees) members += p.members.size();
      out << "simulated " << study.pedigrees.size() << " families, " << members << " individuals into "
          << sim_out.string() << '\n';
      return kExitOk;
    }

    if (*validate_cmd) {
      auto [peds, issues] = load_pedigrees(val_path, val_twins, val_max_age);
      report_issues(out, issues);
      const bool bad = has_errors(issues);
      out << peds.size() << " pedigrees, " << issues.size() << " issues" << (bad ? " (errors found)" : "") << '\n';
      return bad ? kExitValidation : kExitOk;
    }

    if (*priors_cmd) {
      std::optional<BaselineTable> baseline;
      if (prior_baseline) baseline = read_baseline_csv(*prior_baseline, prior_max_age);
      const auto spec = priors_from_json(read_json(dist_path), prior_max_age, baseline ? &*baseline : nullptr,
                                         prior_concentration);
      const auto text = to_json(spec).dump(2);
      out << text << '\n';
      if (prior_out) {
        std::ofstream f(*prior_out);
        if (!f) throw std::runtime_error("cannot write " + prior_out->string());
        f << text << '\n';
      }
      return kExitOk;
    }
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

int cli_main(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace penetrance
