#include "penetrance/priors.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>

namespace penetrance {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// k * log(y) with 0 * log(0) = 0.
double xlogy(double k, double y) { return k == 0.0 ? 0.0 : k * std::log(y); }

double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

void require_beta(const ScaledBeta& p, const char* name) {
  if (!(p.a > 0.0) || !(p.b > 0.0) || !std::isfinite(p.a) || !std::isfinite(p.b)) {
    throw std::invalid_argument(std::string(name) + " prior: Beta parameters must be positive, got a=" +
                                std::to_string(p.a) + ", b=" + std::to_string(p.b));
  }
  if (!(p.hi > p.lo)) throw std::invalid_argument(std::string(name) + " prior: empty support");
}

}  // namespace

double ScaledBeta::log_density(double x) const {
  if (!(x >= lo && x <= hi)) return kNegInf;
  const double width = hi - lo;
  const double u = (x - lo) / width;
  const double v = xlogy(a - 1.0, u) + xlogy(b - 1.0, 1.0 - u) - log_beta_fn(a, b) - std::log(width);
  return std::isnan(v) ? kNegInf : v;
}

double ScaledBeta::quantile(double p) const { return lo + (hi - lo) * boost::math::ibeta_inv(a, b, p); }

double UniformPrior::log_density(double x) const {
  if (!(x >= lo && x <= hi)) return kNegInf;
  return -std::log(hi - lo);
}

PriorSpec default_priors(int max_age) {
  const auto top = static_cast<double>(max_age);
  ParameterPriors p{
      .first_quartile = {6.0, 3.0, 0.0, top},
      .median = {2.0, 2.0, 0.0, top},
      .asymptote = {1.0, 1.0, 0.0, 1.0},
      .threshold = {5.0, 30.0},
  };
  return {p, p};
}

DistributionData::AtRisk at_risk_from_sample_size(double sample_size) {
  if (!(sample_size > 0.0)) throw std::invalid_argument("sample_size must be positive");
  return {0.9 * sample_size, 0.5 * sample_size, 0.1 * sample_size};
}

PriorSpec priors_from_risk_data(const DistributionData& d, int max_age) {
  if (!d.ages) throw std::invalid_argument("distribution data needs the age row (min, first_quartile, median, max)");
  const auto& ages = *d.ages;
  if (!(ages.min < ages.first_quartile && ages.first_quartile < ages.median && ages.median <= ages.max)) {
    throw std::invalid_argument("distribution data ages must satisfy min < first_quartile < median <= max");
  }
  if (ages.max > max_age) throw std::invalid_argument("distribution data max age exceeds max_age");
  DistributionData::AtRisk n;
  if (d.at_risk) {
    n = *d.at_risk;
  } else if (d.sample_size) {
    n = at_risk_from_sample_size(*d.sample_size);
  } else {
    throw std::invalid_argument("distribution data needs at_risk counts or sample_size");
  }
  if (!(n.first_quartile > 0.0 && n.median > 0.0 && n.max > 0.0)) {
    throw std::invalid_argument("at_risk counts must be positive");
  }
  if (n.median > n.first_quartile || n.max > n.median) {
    throw std::invalid_argument("at_risk counts must be nonincreasing with age");
  }

  const auto top = static_cast<double>(max_age);
  auto elicit = [&](double age, double at_risk, double lo, double hi, const char* name) {
    const double a = age / top * at_risk;
    ScaledBeta p{a, at_risk - a, lo, hi};
    require_beta(p, name);
    return p;
  };
  ParameterPriors p{
      .first_quartile = elicit(ages.first_quartile, n.first_quartile, 0.0, top, "first_quartile"),
      .median = elicit(ages.median, n.median, 0.0, top, "median"),
      .asymptote = elicit(ages.max, n.max, 0.0, 1.0, "asymptote"),
      .threshold = {0.0, ages.min},
  };
  if (!(ages.min > 0.0)) throw std::invalid_argument("minimum age must be positive");
  return {p, p};
}

ScaledBeta asymptote_prior_from_ratio(double ratio, const BaselineTable& baseline, Sex sex, double concentration) {
  if (!(ratio > 0.0)) throw std::invalid_argument("relative risk ratio must be positive");
  if (!(concentration > 0.0)) throw std::invalid_argument("ratio concentration must be positive");
  const double mean = std::min(ratio * baseline.lifetime(sex), 0.999);
  ScaledBeta p{mean * concentration, (1.0 - mean) * concentration, 0.0, 1.0};
  require_beta(p, "asymptote");
  return p;
}

double log_prior(const ParameterPriors& priors, const QuantileParams& q) {
  const double terms[] = {
      priors.asymptote.log_density(q.asymptote),
      priors.threshold.log_density(q.threshold),
      priors.median.log_density(q.median),
      priors.first_quartile.log_density(q.first_quartile),
  };
  double total = 0.0;
  for (double t : terms) {
    if (t == kNegInf) return kNegInf;
    total += t;
  }
  return total;
}

double log_prior(const PriorSpec& spec, const QuantileParams& female, const QuantileParams& male) {
  const double f = log_prior(spec.female, female);
  if (f == kNegInf) return kNegInf;
  const double m = log_prior(spec.male, male);
  if (m == kNegInf) return kNegInf;
  return f + m;
}

namespace {

nlohmann::json beta_json(const ScaledBeta& p) {
  return {{"distribution", "scaled_beta"}, {"a", p.a}, {"b", p.b}, {"lo", p.lo}, {"hi", p.hi}};
}

nlohmann::json params_json(const ParameterPriors& p) {
  return {{"first_quartile", beta_json(p.first_quartile)},
          {"median", beta_json(p.median)},
          {"asymptote", beta_json(p.asymptote)},
          {"threshold", {{"distribution", "uniform"}, {"lo", p.threshold.lo}, {"hi", p.threshold.hi}}}};
}

void apply_overrides(ParameterPriors& p, const nlohmann::json& block) {
  auto beta = [&](ScaledBeta& target, const char* key) {
    if (!block.contains(key)) return;
    const auto& b = block.at(key);
    target.a = b.value("a", target.a);
    target.b = b.value("b", target.b);
    target.lo = b.value("lo", target.lo);
    target.hi = b.value("hi", target.hi);
    require_beta(target, key);
  };
  beta(p.first_quartile, "first_quartile");
  beta(p.median, "median");
  beta(p.asymptote, "asymptote");
  if (block.contains("threshold")) {
    const auto& t = block.at("threshold");
    p.threshold.lo = t.value("lo", p.threshold.lo);
    p.threshold.hi = t.value("hi", p.threshold.hi);
    if (!(p.threshold.hi > p.threshold.lo)) throw std::invalid_argument("threshold prior: empty support");
  }
}

DistributionData distribution_from_json(const nlohmann::json& j) {
  DistributionData d;
  if (j.contains("age")) {
    const auto& a = j.at("age");
    d.ages = DistributionData::Ages{a.at("min").get<double>(), a.at("first_quartile").get<double>(),
                                    a.at("median").get<double>(), a.at("max").get<double>()};
  }
  if (j.contains("at_risk") && !j.at("at_risk").is_null()) {
    const auto& r = j.at("at_risk");
    d.at_risk = DistributionData::AtRisk{r.at("first_quartile").get<double>(), r.at("median").get<double>(),
                                         r.at("max").get<double>()};
  }
  if (j.contains("sample_size") && !j.at("sample_size").is_null()) d.sample_size = j.at("sample_size").get<double>();
  if (j.contains("ratio") && !j.at("ratio").is_null()) d.ratio = j.at("ratio").get<double>();
  return d;
}

}  // namespace

nlohmann::json to_json(const PriorSpec& spec) {
  return {{"female", params_json(spec.female)}, {"male", params_json(spec.male)}};
}

PriorSpec priors_from_json(const nlohmann::json& config, int max_age, const BaselineTable* baseline,
                           double ratio_concentration) {
  if (!config.is_object()) throw std::invalid_argument("prior configuration must be a JSON object");
  PriorSpec spec = default_priors(max_age);
  try {
    if (config.contains("distribution_data")) {
      const auto d = distribution_from_json(config.at("distribution_data"));
      if (d.ages) spec = priors_from_risk_data(d, max_age);
      if (d.ratio) {
        if (!baseline) throw std::invalid_argument("a relative-risk ratio needs the baseline table");
        spec.female.asymptote = asymptote_prior_from_ratio(*d.ratio, *baseline, Sex::female, ratio_concentration);
        spec.male.asymptote = asymptote_prior_from_ratio(*d.ratio, *baseline, Sex::male, ratio_concentration);
      }
    }
    apply_overrides(spec.female, config);
    apply_overrides(spec.male, config);
    if (config.contains("female")) apply_overrides(spec.female, config.at("female"));
    if (config.contains("male")) apply_overrides(spec.male, config.at("male"));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("prior configuration: ") + e.what());
  }
  return spec;
}

}  // namespace penetrance
