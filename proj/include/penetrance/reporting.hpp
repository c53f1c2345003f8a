#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "penetrance/priors.hpp"
#include "penetrance/sampler.hpp"

namespace penetrance {

/// Indices kept from a chain of length n: drop floor(burn_in * n), then every
/// thinning-th sample starting with the first remaining one.
std::vector<int> retained_indices(int n, double burn_in, int thinning);

struct RetainedChain {
  Eigen::MatrixXd samples;
  std::vector<double> log_posterior;
  std::vector<int> iterations;  // 1-based iteration numbers
};

struct RetainedSamples {
  std::vector<std::string> coordinate_names;
  bool sex_specific = true;
  std::vector<RetainedChain> chains;

  std::size_t total() const;
};

RetainedSamples apply_burnin_thinning(const PosteriorSamples& samples, double burn_in, int thinning);

struct CurveBand {
  std::vector<double> cum_mean, cum_lo, cum_hi;
  std::vector<double> annual_mean, annual_lo, annual_hi;
};

/// Pointwise summaries over ages 1..max_age (index age - 1).
struct CurveSummary {
  int max_age = 0;
  double ci_level = 0.95;
  CurveBand female;
  CurveBand male;

  const CurveBand& for_sex(Sex s) const { return s == Sex::male ? male : female; }
};

/// Nearest-rank percentile of sorted values: element ceil(p * n), 1-based.
double nearest_rank(const std::vector<double>& sorted, double p);

/// Throws std::invalid_argument on an empty sample set.
CurveSummary summarize_curves(const RetainedSamples& retained, int max_age, double ci_level = 0.95);

struct CredibleInterval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Equal-tailed nearest-rank interval for one coordinate, pooled over chains.
CredibleInterval coordinate_interval(const RetainedSamples& retained, std::size_t coordinate, double ci_level = 0.95);

/// Potential scale reduction for equal-length chains:
/// sqrt(((n - 1) / n * W + B / n) / W). Empty when W is zero or fewer than two chains.
std::optional<double> gelman_rubin(const std::vector<std::vector<double>>& chains);

nlohmann::json diagnostics(const PosteriorSamples& samples, const RetainedSamples& retained);

void write_samples_csv(std::ostream& out, const RetainedSamples& retained);
RetainedSamples read_samples_csv(std::istream& in);
void write_curve_csv(std::ostream& out, const CurveBand& band);

nlohmann::json config_echo(const ChainConfig& cfg, const PriorSpec& priors);

/// samples.csv, curves_female.csv, curves_male.csv, diagnostics.json, config_echo.json,
/// and imputation_log.csv when the chains carry one.
void write_outputs(const std::filesystem::path& dir, const PosteriorSamples& samples, const PriorSpec& priors,
                   double ci_level);

}  // namespace penetrance
