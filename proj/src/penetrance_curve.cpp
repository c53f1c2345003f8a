#include "penetrance/penetrance_curve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace penetrance {

double cdf(const WeibullPenetrance& p, double age) {
  if (age <= p.delta) return 0.0;
  const double z = std::pow((age - p.delta) / p.alpha, p.beta);
  return -p.gamma * std::expm1(-z);
}

double survival(const WeibullPenetrance& p, double age) { return 1.0 - cdf(p, age); }

double annual_probability(const WeibullPenetrance& p, int age) {
  return std::max(0.0, cdf(p, age) - cdf(p, age - 1));
}

double conditional_quantile(const WeibullPenetrance& p, double u) {
  return p.delta + p.alpha * std::pow(-std::log1p(-u), 1.0 / p.beta);
}

std::optional<WeibullPenetrance> quantiles_to_weibull(const QuantileParams& q) {
  const double lower = q.first_quartile - q.threshold;
  const double upper = q.median - q.threshold;
  if (!(lower > 0.0) || !(upper > lower)) return std::nullopt;
  static const double kLogRatio = std::log(std::log(4.0 / 3.0) / std::numbers::ln2);
  const double beta = kLogRatio / std::log(lower / upper);
  const double alpha = upper / std::pow(std::numbers::ln2, 1.0 / beta);
  if (!std::isfinite(beta) || !std::isfinite(alpha) || beta <= 0.0 || alpha <= 0.0) return std::nullopt;
  return WeibullPenetrance{alpha, beta, q.asymptote, q.threshold};
}

QuantileParams weibull_to_quantiles(const WeibullPenetrance& p) {
  return {p.gamma, p.delta, conditional_quantile(p, 0.5), conditional_quantile(p, 0.25)};
}

namespace {

std::vector<double> cumulate(const std::vector<double>& annual) {
  std::vector<double> out(annual.size());
  double total = 0.0;
  for (std::size_t i = 0; i < annual.size(); ++i) out[i] = total += annual[i];
  return out;
}

void check_annual(const std::vector<double>& annual, const char* label) {
  for (double v : annual) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("baseline ") + label + ": annual risks must be finite and >= 0");
    }
  }
  double total = 0.0;
  for (double v : annual) total += v;
  if (total > 1.0 + 1e-12) {
    throw std::invalid_argument(std::string("baseline ") + label + ": cumulative risk exceeds 1");
  }
}

}  // namespace

BaselineTable::BaselineTable(std::vector<double> female_annual, std::vector<double> male_annual)
    : female_(std::move(female_annual)), male_(std::move(male_annual)) {
  if (female_.size() != male_.size() || female_.empty()) {
    throw std::invalid_argument("baseline tables must be nonempty and cover the same ages for both sexes");
  }
  check_annual(female_, "female");
  check_annual(male_, "male");
  female_cum_ = cumulate(female_);
  male_cum_ = cumulate(male_);
}

BaselineTable BaselineTable::from_cumulative(const std::vector<double>& female_cumulative,
                                             const std::vector<double>& male_cumulative) {
  auto difference = [](const std::vector<double>& cum, const char* label) {
    std::vector<double> out(cum.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < cum.size(); ++i) {
      if (cum[i] < prev) {
        throw std::invalid_argument(std::string("cumulative baseline ") + label + " decreases at age " +
                                    std::to_string(i + 1));
      }
      out[i] = cum[i] - prev;
      prev = cum[i];
    }
    return out;
  };
  return BaselineTable(difference(female_cumulative, "female"), difference(male_cumulative, "male"));
}

double BaselineTable::annual(Sex sex, int age) const {
  if (age < 1 || age > max_age()) throw std::out_of_range("baseline age " + std::to_string(age) + " out of range");
  const auto i = static_cast<std::size_t>(age - 1);
  switch (sex) {
    case Sex::female: return female_[i];
    case Sex::male: return male_[i];
    case Sex::unknown: return 0.5 * (female_[i] + male_[i]);
  }
  return 0.0;
}

double BaselineTable::cdf(Sex sex, int age) const {
  if (age < 0 || age > max_age()) throw std::out_of_range("baseline age " + std::to_string(age) + " out of range");
  if (age == 0) return 0.0;
  const auto i = static_cast<std::size_t>(age - 1);
  switch (sex) {
    case Sex::female: return female_cum_[i];
    case Sex::male: return male_cum_[i];
    case Sex::unknown: return 0.5 * (female_cum_[i] + male_cum_[i]);
  }
  return 0.0;
}

int BaselineTable::median_onset_age(Sex sex) const {
  const double half = 0.5 * lifetime(sex);
  for (int age = 1; age <= max_age(); ++age) {
    if (cdf(sex, age) >= half) return age;
  }
  return max_age();
}

BaselineTable BaselineTable::truncated(int max_age) const {
  if (max_age < 1 || max_age > this->max_age()) {
    throw std::invalid_argument("baseline covers ages 1.." + std::to_string(this->max_age()) +
                                ", cannot provide max_age " + std::to_string(max_age));
  }
  const auto n = static_cast<std::ptrdiff_t>(max_age);
  return BaselineTable({female_.begin(), female_.begin() + n}, {male_.begin(), male_.begin() + n});
}

double baseline_cdf(const BaselineTable& b, Sex sex, int age) { return b.cdf(sex, age); }

BaselineTable read_baseline_csv(std::istream& in, int max_age, BaselineScale scale) {
  std::string line;
  std::vector<std::string> header;
  std::map<int, std::pair<double, double>> rows;
  int age_col = -1, f_col = -1, m_col = -1;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) {
      f.erase(std::remove_if(f.begin(), f.end(), [](char c) { return c == '"' || c == ' '; }), f.end());
      std::transform(f.begin(), f.end(), f.begin(), [](unsigned char c) { return std::tolower(c); });
      fields.push_back(f);
    }
    if (header.empty()) {
      header = fields;
      for (int i = 0; i < static_cast<int>(fields.size()); ++i) {
        if (fields[i] == "age") age_col = i;
        if (fields[i] == "female") f_col = i;
        if (fields[i] == "male") m_col = i;
        if (fields[i] == "rate") f_col = m_col = i;
      }
      if (age_col < 0 || f_col < 0 || m_col < 0) {
        throw std::runtime_error("baseline CSV needs columns age,female,male or age,rate");
      }
      continue;
    }
    const int need = std::max({age_col, f_col, m_col});
    if (static_cast<int>(fields.size()) <= need) {
      throw std::runtime_error("baseline CSV line " + std::to_string(line_no) + " has too few fields");
    }
    try {
      const int age = static_cast<int>(std::stod(fields[age_col]));
      rows[age] = {std::stod(fields[f_col]), std::stod(fields[m_col])};
    } catch (const std::logic_error&) {
      throw std::runtime_error("baseline CSV line " + std::to_string(line_no) + " is not numeric");
    }
  }
  std::vector<double> female, male;
  for (int age = 1; age <= max_age; ++age) {
    auto it = rows.find(age);
    if (it == rows.end()) throw std::runtime_error("baseline CSV is missing age " + std::to_string(age));
    female.push_back(it->second.first);
    male.push_back(it->second.second);
  }
  if (scale == BaselineScale::cumulative) return BaselineTable::from_cumulative(female, male);
  return BaselineTable(std::move(female), std::move(male));
}

BaselineTable read_baseline_csv(const std::filesystem::path& path, int max_age, BaselineScale scale) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open baseline file " + path.string());
  return read_baseline_csv(in, max_age, scale);
}

void write_baseline_csv(std::ostream& out, const BaselineTable& table) {
  out << "age,female,male\n";
  out.precision(17);
  for (int age = 1; age <= table.max_age(); ++age) {
    out << age << ',' << table.annual(Sex::female, age) << ',' << table.annual(Sex::male, age) << '\n';
  }
}

BaselineTable example_crc_baseline(int max_age) {
  // Gaussian-shaped incidence in age, renormalised to a fixed lifetime risk.
  auto build = [max_age](double lifetime, double peak, double spread) {
    std::vector<double> annual(static_cast<std::size_t>(max_age));
    double total = 0.0;
    for (int age = 1; age <= max_age; ++age) {
      const double z = (age - peak) / spread;
      const double w = age < 15 ? 0.0 : std::exp(-0.5 * z * z);
      annual[static_cast<std::size_t>(age - 1)] = w;
      total += w;
    }
    for (double& v : annual) v *= lifetime / total;
    return annual;
  };
  return BaselineTable(build(0.041, 74.0, 13.0), build(0.045, 71.0, 12.0));
}

}  // namespace penetrance
