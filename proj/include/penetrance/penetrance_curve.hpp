#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "penetrance/pedigree.hpp"

namespace penetrance {

/// Carrier onset curve F(t) = gamma * (1 - exp(-((t - delta) / alpha)^beta)) for t > delta.
struct WeibullPenetrance {
  double alpha = 1.0;  // scale, years
  double beta = 1.0;   // shape
  double gamma = 0.5;  // lifetime risk (asymptote)
  double delta = 0.0;  // threshold, minimum onset age

  bool operator==(const WeibullPenetrance&) const = default;
};

/// The sampler's coordinates. Quartiles are of the onset distribution among
/// carriers who eventually develop the disease, i.e. of cdf / gamma.
struct QuantileParams {
  double asymptote = 0.5;
  double threshold = 0.0;
  double median = 0.0;
  double first_quartile = 0.0;

  bool operator==(const QuantileParams&) const = default;
};

double cdf(const WeibullPenetrance& p, double age);
double survival(const WeibullPenetrance& p, double age);
/// Probability of onset within (age - 1, age].
double annual_probability(const WeibullPenetrance& p, int age);
/// Inverse of cdf / gamma; u in [0, 1).
double conditional_quantile(const WeibullPenetrance& p, double u);

/// Empty when the quartiles are degenerate (threshold >= Q25 or Q25 >= Q50) or
/// the closed form leaves the finite positive range.
std::optional<WeibullPenetrance> quantiles_to_weibull(const QuantileParams& q);
QuantileParams weibull_to_quantiles(const WeibullPenetrance& p);

/// Carrier curves for both sexes; identical when estimation is not sex-specific.
struct PenetranceCurves {
  WeibullPenetrance female;
  WeibullPenetrance male;

  const WeibullPenetrance& for_sex(Sex s) const { return s == Sex::male ? male : female; }
};

/// Noncarrier (population) risk: annual onset probabilities for ages 1..max_age.
class BaselineTable {
 public:
  BaselineTable() = default;
  BaselineTable(std::vector<double> female_annual, std::vector<double> male_annual);

  /// Differences cumulative risks; throws on a decrease.
  static BaselineTable from_cumulative(const std::vector<double>& female_cumulative,
                                       const std::vector<double>& male_cumulative);

  int max_age() const { return static_cast<int>(female_.size()); }
  bool sex_specific() const { return female_ != male_; }

  /// Annual probability at age in 1..max_age. Sex::unknown averages the sexes.
  double annual(Sex sex, int age) const;
  /// Cumulative through age; age 0 gives 0. Throws std::out_of_range outside [0, max_age].
  double cdf(Sex sex, int age) const;
  double lifetime(Sex sex) const { return cdf(sex, max_age()); }
  /// Smallest age by which half of the lifetime risk has accrued.
  int median_onset_age(Sex sex) const;

  /// Same table truncated to the first max_age ages.
  BaselineTable truncated(int max_age) const;

  const std::vector<double>& annual_values(Sex sex) const { return sex == Sex::male ? male_ : female_; }

 private:
  std::vector<double> female_;
  std::vector<double> male_;
  std::vector<double> female_cum_;
  std::vector<double> male_cum_;
};

double baseline_cdf(const BaselineTable& b, Sex sex, int age);

enum class BaselineScale { annual, cumulative };

/// CSV with header `age,female,male` or `age,rate`. Rows for ages 1..max_age
/// are required; rows outside that range are ignored.
BaselineTable read_baseline_csv(std::istream& in, int max_age, BaselineScale scale = BaselineScale::annual);
BaselineTable read_baseline_csv(const std::filesystem::path& path, int max_age,
                                BaselineScale scale = BaselineScale::annual);
void write_baseline_csv(std::ostream& out, const BaselineTable& table);

/// Illustrative colorectal-cancer-like population risk (lifetime about 4%,
/// onset concentrated after age 50). Synthetic; not registry data.
BaselineTable example_crc_baseline(int max_age = 94);

}  // namespace penetrance
