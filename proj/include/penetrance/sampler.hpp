#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "penetrance/imputation.hpp"
#include "penetrance/likelihood.hpp"
#include "penetrance/pedigree.hpp"
#include "penetrance/penetrance_curve.hpp"
#include "penetrance/priors.hpp"

namespace penetrance {

/// Estimation options.
struct ChainConfig {
  int n_iter_per_chain = 10000;
  int n_chains = 1;
  std::uint64_t seed = 1;
  std::vector<double> var = {0.1, 0.1, 2.0, 2.0, 5.0, 5.0, 5.0, 5.0};
  double burn_in = 0.0;
  int thinning_factor = 1;
  bool age_imputation = false;
  int imp_interval = 10;
  bool remove_proband = false;
  bool sex_specific = true;
  bool median_max = true;
  bool baseline_nc = true;
  int max_age = 94;
  double prev = 0.0001;
  int ncores = 6;
  bool debug_imputation = false;

  /// Throws std::invalid_argument on out-of-range options.
  void validate() const;
};

nlohmann::json to_json(const ChainConfig& cfg);

/// Coordinate layout of the proposal vector. Sex-specific order is
/// (asymptote_f, asymptote_m, threshold_f, threshold_m, median_f, median_m,
/// first_quartile_f, first_quartile_m); pooled is (asymptote, threshold, median, first_quartile).
class ParameterLayout {
 public:
  explicit ParameterLayout(bool sex_specific) : sex_specific_(sex_specific) {}

  bool sex_specific() const { return sex_specific_; }
  Eigen::Index dim() const { return sex_specific_ ? 8 : 4; }
  std::vector<std::string> names() const;
  QuantileParams params(const Eigen::VectorXd& v, Sex sex) const;
  Eigen::VectorXd pack(const QuantileParams& female, const QuantileParams& male) const;
  /// Curves for both sexes; empty if either set of quartiles is degenerate.
  std::optional<PenetranceCurves> curves(const Eigen::VectorXd& v) const;

 private:
  bool sex_specific_;
};

/// Upper bound for the median coordinate: baseline median onset age when
/// median_max is set, otherwise max_age.
double median_upper_bound(const BaselineTable& baseline, const ChainConfig& cfg, Sex sex);

/// Per sex: 0 <= asymptote <= 1, 0 <= threshold <= 100, threshold <= Q25 <= Q50,
/// and Q50 <= median_upper_bound.
bool within_bounds(const Eigen::VectorXd& v, const BaselineTable& baseline, const ChainConfig& cfg);

/// Unnormalised log density with hard bounds, evaluated by the Metropolis step.
class LogTarget {
 public:
  virtual ~LogTarget() = default;
  virtual bool in_bounds(const Eigen::VectorXd& v) const = 0;
  /// -infinity for zero density.
  virtual double log_density(const Eigen::VectorXd& v) const = 0;
};

/// Log posterior of the penetrance model: prior plus the sum of pedigree
/// log-likelihoods. Owns a working copy of the pedigrees so that imputed ages
/// stay local to one chain.
class PenetranceModel final : public LogTarget {
 public:
  PenetranceModel(std::vector<Pedigree> pedigrees, PriorSpec priors, BaselineTable baseline,
                  std::optional<BaselineTable> noncarrier, ChainConfig cfg);

  bool in_bounds(const Eigen::VectorXd& v) const override;
  double log_density(const Eigen::VectorXd& v) const override;
  double log_prior(const Eigen::VectorXd& v) const;
  double log_likelihood(const Eigen::VectorXd& v) const;

  FactorLookup factor_lookup(const PenetranceCurves& curves) const;

  const ParameterLayout& layout() const { return layout_; }
  const ChainConfig& config() const { return cfg_; }
  const BaselineTable& baseline() const { return baseline_; }
  const GenotypeModel& genotype_model() const { return gm_; }
  const std::vector<Pedigree>& pedigrees() const { return pedigrees_; }
  std::vector<Pedigree>& mutable_pedigrees() { return pedigrees_; }
  const std::vector<PeelingPlan>& plans() const { return plans_; }

 private:
  std::vector<Pedigree> pedigrees_;
  std::vector<PeelingPlan> plans_;
  PriorSpec priors_;
  BaselineTable baseline_;
  std::optional<BaselineTable> noncarrier_;
  ChainConfig cfg_;
  ParameterLayout layout_;
  GenotypeModel gm_;
  mutable PersonFactors scratch_;
};

/// Percentile with linear interpolation at rank (n + 1) p, clamped to the sample range.
double empirical_percentile(std::vector<double> values, double p);

struct InitialState {
  Eigen::VectorXd state;
  std::vector<std::string> warnings;
};

/// Starting point from observed diagnosis ages: per sex, Q25/Q50 at the sample
/// quartiles, threshold one year below the earliest diagnosis, asymptote drawn
/// from the central half of its prior.
InitialState initialize_state(std::span<const Pedigree> data, const ChainConfig& cfg, const PriorSpec& priors,
                              const BaselineTable& baseline, Rng& rng);

/// Factorised proposal covariance. Negative eigenvalues are clipped to 1e-10.
class ProposalKernel {
 public:
  explicit ProposalKernel(const Eigen::MatrixXd& cov);

  Eigen::VectorXd draw(const Eigen::VectorXd& current, Rng& rng) const;
  bool repaired() const { return repaired_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }

 private:
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd factor_;
  bool repaired_ = false;
};

Eigen::VectorXd propose(const Eigen::VectorXd& current, const Eigen::MatrixXd& cov, Rng& rng);

inline constexpr int kAdaptationStart = 200;
inline constexpr int kAdaptationInterval = 50;
inline constexpr double kAdaptationEpsilon = 1e-8;

/// Haario-style schedule: diag(initial_var) before iteration 200, afterwards
/// (2.38^2 / d) * (cov(history) + eps I). history rows are states.
Eigen::MatrixXd adapt_covariance(const Eigen::MatrixXd& history, int iteration, const Eigen::VectorXd& initial_var);

/// Incremental form of adapt_covariance, refreshed every 50 iterations.
class AdaptiveCovariance {
 public:
  explicit AdaptiveCovariance(Eigen::VectorXd initial_var);

  void record(const Eigen::VectorXd& state);
  /// Kernel for the given 1-based iteration; true in the pair when it changed.
  std::pair<const ProposalKernel&, bool> kernel_for(int iteration);

 private:
  Eigen::VectorXd initial_var_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
  long count_ = 0;
  ProposalKernel kernel_;
};

struct StepResult {
  Eigen::VectorXd state;
  double log_posterior = 0.0;
  bool accepted = false;
  bool out_of_bounds = false;
};

/// One Metropolis step; bounds are checked before the density.
StepResult mh_step(const Eigen::VectorXd& state, double log_posterior, const ProposalKernel& kernel,
                   const LogTarget& target, Rng& rng);

struct CovarianceSnapshot {
  int iteration = 0;
  Eigen::MatrixXd covariance;
};

struct ChainResult {
  Eigen::MatrixXd samples;  // n_iter x dim, state after each iteration
  std::vector<double> log_posterior;
  long accepted = 0;
  long bound_rejections = 0;
  std::vector<CovarianceSnapshot> covariance_snapshots;
  std::vector<ImputationRecord> imputation_log;
  std::vector<std::string> warnings;

  double acceptance_rate() const;
};

/// Generic adaptive Metropolis run against any target.
ChainResult run_adaptive_metropolis(const LogTarget& target, const Eigen::VectorXd& initial,
                                    const Eigen::VectorXd& initial_var, int n_iter, Rng& rng);

struct EstimationInputs {
  std::vector<Pedigree> pedigrees;
  PriorSpec priors;
  BaselineTable baseline;
  std::optional<BaselineTable> noncarrier;  // required when baseline_nc is false
};

ChainResult run_chain(const ChainConfig& cfg, const EstimationInputs& inputs, int chain_index);

struct PosteriorSamples {
  std::vector<std::string> coordinate_names;
  std::vector<ChainResult> chains;
  ChainConfig config;
};

/// Chains run independently with seeds seed + chain_index on up to ncores threads.
PosteriorSamples run_chains(const ChainConfig& cfg, const EstimationInputs& inputs);

}  // namespace penetrance
