#pragma once

#include <optional>

#include <nlohmann/json.hpp>

#include "penetrance/pedigree.hpp"
#include "penetrance/penetrance_curve.hpp"

namespace penetrance {

/// Beta(a, b) mapped linearly onto [lo, hi].
struct ScaledBeta {
  double a = 1.0;
  double b = 1.0;
  double lo = 0.0;
  double hi = 1.0;

  double log_density(double x) const;
  double mean() const { return lo + (hi - lo) * a / (a + b); }
  double quantile(double p) const;
  bool operator==(const ScaledBeta&) const = default;
};

struct UniformPrior {
  double lo = 0.0;
  double hi = 1.0;

  double log_density(double x) const;
  double quantile(double p) const { return lo + p * (hi - lo); }
  bool operator==(const UniformPrior&) const = default;
};

/// Independent priors on the four quantile-space coordinates of one sex.
struct ParameterPriors {
  ScaledBeta first_quartile;
  ScaledBeta median;
  ScaledBeta asymptote;
  UniformPrior threshold;

  bool operator==(const ParameterPriors&) const = default;
};

struct PriorSpec {
  ParameterPriors female;
  ParameterPriors male;

  const ParameterPriors& for_sex(Sex s) const { return s == Sex::male ? male : female; }
  bool operator==(const PriorSpec&) const = default;
};

/// Summary of a published penetrance study used to elicit priors.
struct DistributionData {
  struct Ages {
    double min = 0.0;
    double first_quartile = 0.0;
    double median = 0.0;
    double max = 0.0;
  };
  struct AtRisk {
    double first_quartile = 0.0;
    double median = 0.0;
    double max = 0.0;
  };
  std::optional<Ages> ages;
  std::optional<AtRisk> at_risk;
  std::optional<double> sample_size;
  std::optional<double> ratio;
};

inline constexpr double kDefaultRatioConcentration = 10.0;

/// Q25 ~ Beta(6,3) and Q50 ~ Beta(2,2) on [0, max_age], asymptote ~ Beta(1,1),
/// threshold ~ Uniform(5, 30).
PriorSpec default_priors(int max_age = 94);

/// Counts at the first-quartile, median and maximum ages implied by a study size:
/// 90%, 50% and 10% of the carriers still under observation.
DistributionData::AtRisk at_risk_from_sample_size(double sample_size);

/// Beta parameters a = (age / max_age) * n_at_risk, b = n_at_risk - a, and a
/// Uniform(0, min age) threshold. Uses at_risk when given, else sample_size.
PriorSpec priors_from_risk_data(const DistributionData& d, int max_age);

/// Beta on [0, 1] with mean min(ratio * lifetime baseline risk, 0.999) and a + b = concentration.
ScaledBeta asymptote_prior_from_ratio(double ratio, const BaselineTable& baseline, Sex sex,
                                      double concentration = kDefaultRatioConcentration);

/// Sum of the four independent log densities; -infinity outside the support.
double log_prior(const ParameterPriors& priors, const QuantileParams& q);
double log_prior(const PriorSpec& spec, const QuantileParams& female, const QuantileParams& male);

nlohmann::json to_json(const PriorSpec& spec);

/// Accepts {"defaults": true}; explicit blocks {"first_quartile": {"a","b","lo","hi"}, ...,
/// "threshold": {"lo","hi"}} optionally split by "female"/"male"; or a
/// {"distribution_data": {"age": {...}, "at_risk": {...}, "sample_size", "ratio"}} block.
/// Unspecified parameters keep their defaults. A ratio requires the baseline.
PriorSpec priors_from_json(const nlohmann::json& config, int max_age, const BaselineTable* baseline,
                           double ratio_concentration = kDefaultRatioConcentration);

}  // namespace penetrance
