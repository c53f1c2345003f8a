#include "penetrance/reporting.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace penetrance {

namespace {

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s) {
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::runtime_error("samples file: bad number '" + std::string(s) + "'");
  }
  return x;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Mean as an offset from the smallest value, so a constant sample is reproduced exactly.
double sorted_mean(const std::vector<double>& sorted) {
  double acc = 0.0;
  for (double v : sorted) acc += v - sorted.front();
  return sorted.front() + acc / static_cast<double>(sorted.size());
}

}  // namespace

std::vector<int> retained_indices(int n, double burn_in, int thinning) {
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw std::invalid_argument("burn_in must lie in [0, 1)");
  if (thinning < 1) throw std::invalid_argument("thinning must be >= 1");
  const auto drop = static_cast<int>(std::floor(burn_in * n));
  std::vector<int> out;
  for (int i = drop; i < n; i += thinning) out.push_back(i);
  return out;
}

std::size_t RetainedSamples::total() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += static_cast<std::size_t>(c.samples.rows());
  return n;
}

RetainedSamples apply_burnin_thinning(const PosteriorSamples& samples, double burn_in, int thinning) {
  RetainedSamples out;
  out.coordinate_names = samples.coordinate_names;
  out.sex_specific = samples.config.sex_specific;
  for (const auto& chain : samples.chains) {
    const auto keep = retained_indices(static_cast<int>(chain.samples.rows()), burn_in, thinning);
    RetainedChain r;
    r.samples.resize(static_cast<Eigen::Index>(keep.size()), chain.samples.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
      r.samples.row(static_cast<Eigen::Index>(k)) = chain.samples.row(keep[k]);
      r.log_posterior.push_back(chain.log_posterior[static_cast<std::size_t>(keep[k])]);
      r.iterations.push_back(keep[k] + 1);
    }
    out.chains.push_back(std::move(r));
  }
  return out;
}

double nearest_rank(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty sample");
  const double n = static_cast<double>(sorted.size());
  // The small slack keeps p * n from rounding up past an exact integer rank.
  auto rank = static_cast<long>(std::ceil(p * n - 1e-9));
  rank = std::clamp(rank, 1L, static_cast<long>(sorted.size()));
  return sorted[static_cast<std::size_t>(rank - 1)];
}

CurveSummary summarize_curves(const RetainedSamples& retained, int max_age, double ci_level) {
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw std::invalid_argument("ci_level must lie in (0, 1)");
  if (retained.total() == 0) throw std::invalid_argument("no retained samples to summarise");
  const ParameterLayout layout(retained.sex_specific);
  std::vector<PenetranceCurves> curves;
  curves.reserve(retained.total());
  for (const auto& chain : retained.chains) {
    for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) {
      auto c = layout.curves(chain.samples.row(i).transpose());
      if (!c) throw std::invalid_argument("retained sample with degenerate quartiles");
      curves.push_back(*c);
    }
  }
  const double tail = 0.5 * (1.0 - ci_level);
  CurveSummary out;
  out.max_age = max_age;
  out.ci_level = ci_level;
  std::vector<double> cum(curves.size()), annual(curves.size());
  for (Sex sex : {Sex::female, Sex::male}) {
    CurveBand& band = sex == Sex::male ? out.male : out.female;
    for (int age = 1; age <= max_age; ++age) {
      for (std::size_t k = 0; k < curves.size(); ++k) {
        const auto& w = curves[k].for_sex(sex);
        cum[k] = cdf(w, age);
        annual[k] = annual_probability(w, age);
      }
      std::ranges::sort(cum);
      std::ranges::sort(annual);
      band.cum_mean.push_back(sorted_mean(cum));
      band.cum_lo.push_back(nearest_rank(cum, tail));
      band.cum_hi.push_back(nearest_rank(cum, 1.0 - tail));
      band.annual_mean.push_back(sorted_mean(annual));
      band.annual_lo.push_back(nearest_rank(annual, tail));
      band.annual_hi.push_back(nearest_rank(annual, 1.0 - tail));
    }
  }
  return out;
}

CredibleInterval coordinate_interval(const RetainedSamples& retained, std::size_t coordinate, double ci_level) {
  std::vector<double> values;
  for (const auto& chain : retained.chains) {
    const auto col = chain.samples.col(static_cast<Eigen::Index>(coordinate));
    values.insert(values.end(), col.begin(), col.end());
  }
  std::ranges::sort(values);
  const double tail = 0.5 * (1.0 - ci_level);
  return {sorted_mean(values), nearest_rank(values, tail), nearest_rank(values, 1.0 - tail)};
}

std::optional<double> gelman_rubin(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  if (m < 2) return std::nullopt;
  const std::size_t n = chains.front().size();
  if (n < 2) return std::nullopt;
  for (const auto& c : chains) {
    if (c.size() != n) throw std::invalid_argument("chains must have equal length");
  }
  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (double x : chains[j]) s += x;
    means[j] = s / static_cast<double>(n);
    double ss = 0.0;
    for (double x : chains[j]) ss += (x - means[j]) * (x - means[j]);
    vars[j] = ss / static_cast<double>(n - 1);
  }
  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= static_cast<double>(m);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= static_cast<double>(n) / static_cast<double>(m - 1);
  double w = 0.0;
  for (double v : vars) w += v;
  w /= static_cast<double>(m);
  if (!(w > 0.0)) return std::nullopt;
  const double nn = static_cast<double>(n);
  return std::sqrt(((nn - 1.0) / nn * w + b / nn) / w);
}

nlohmann::json diagnostics(const PosteriorSamples& samples, const RetainedSamples& retained) {
  nlohmann::json chains = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.chains.size(); ++i) {
    const auto& c = samples.chains[i];
    nlohmann::json cov = nullptr;
    if (!c.covariance_snapshots.empty()) {
      const auto& last = c.covariance_snapshots.back();
      cov = nlohmann::json::array();
      for (Eigen::Index r = 0; r < last.covariance.rows(); ++r) {
        std::vector<double> row(last.covariance.row(r).begin(), last.covariance.row(r).end());
        cov.push_back(row);
      }
    }
    chains.push_back({{"chain", i},
                      {"iterations", c.log_posterior.size()},
                      {"retained", retained.chains[i].samples.rows()},
                      {"accepted", c.accepted},
                      {"acceptance_rate", c.acceptance_rate()},
                      {"bound_rejections", c.bound_rejections},
                      {"final_log_posterior", c.log_posterior.empty() ? 0.0 : c.log_posterior.back()},
                      {"last_adapted_covariance", cov},
                      {"warnings", c.warnings}});
  }
  nlohmann::json coords = nlohmann::json::object();
  for (std::size_t k = 0; k < retained.coordinate_names.size(); ++k) {
    std::vector<std::vector<double>> per_chain;
    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
    for (const auto& c : retained.chains) {
      const auto col = c.samples.col(static_cast<Eigen::Index>(k));
      per_chain.emplace_back(col.begin(), col.end());
      for (double x : per_chain.back()) {
        sum += x;
        sumsq += x * x;
        ++n;
      }
    }
    nlohmann::json entry;
    if (n > 0) {
      const auto ci = coordinate_interval(retained, k, 0.95);
      const double mean = sum / static_cast<double>(n);
      entry["mean"] = mean;
      entry["sd"] = n > 1 ? std::sqrt(std::max(0.0, (sumsq - n * mean * mean) / static_cast<double>(n - 1))) : 0.0;
      entry["ci95"] = {ci.lo, ci.hi};
    }
    const auto rhat = gelman_rubin(per_chain);
    entry["rhat"] = rhat ? nlohmann::json(*rhat) : nlohmann::json(nullptr);
    coords[retained.coordinate_names[k]] = entry;
  }
  return {{"n_chains", samples.chains.size()},
          {"n_iter_per_chain", samples.config.n_iter_per_chain},
          {"burn_in", samples.config.burn_in},
          {"thinning_factor", samples.config.thinning_factor},
          {"seed", samples.config.seed},
          {"chains", chains},
          {"coordinates", coords}};
}

void write_samples_csv(std::ostream& out, const RetainedSamples& retained) {
  for (const auto& name : retained.coordinate_names) out << name << ',';
  out << "chain,iteration,log_posterior\n";
  for (std::size_t c = 0; c < retained.chains.size(); ++c) {
    const auto& chain = retained.chains[c];
    for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) {
      for (Eigen::Index k = 0; k < chain.samples.cols(); ++k) out << format_double(chain.samples(i, k)) << ',';
      out << c << ',' << chain.iterations[static_cast<std::size_t>(i)] << ','
          << format_double(chain.log_posterior[static_cast<std::size_t>(i)]) << '\n';
    }
  }
}

RetainedSamples read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("samples file is empty");
  auto header = split(line);
  if (header.size() < 4 || header[header.size() - 3] != "chain" || header[header.size() - 2] != "iteration" ||
      header.back() != "log_posterior") {
    throw std::runtime_error("samples file: header must end with chain,iteration,log_posterior");
  }
  RetainedSamples out;
  out.coordinate_names.assign(header.begin(), header.end() - 3);
  const auto dim = out.coordinate_names.size();
  if (dim != 4 && dim != 8) throw std::runtime_error("samples file: expected 4 or 8 coordinates");
  out.sex_specific = dim == 8;
  std::map<long, std::vector<std::vector<double>>> rows;
  std::map<long, RetainedChain> chains;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != dim + 3) throw std::runtime_error("samples file: wrong field count in '" + line + "'");
    const auto chain = static_cast<long>(parse_double(f[dim]));
    std::vector<double> v(dim);
    for (std::size_t k = 0; k < dim; ++k) v[k] = parse_double(f[k]);
    rows[chain].push_back(std::move(v));
    chains[chain].iterations.push_back(static_cast<int>(parse_double(f[dim + 1])));
    chains[chain].log_posterior.push_back(parse_double(f[dim + 2]));
  }
  for (auto& [id, chain] : chains) {
    const auto& r = rows[id];
    chain.samples.resize(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < r.size(); ++i) {
      for (std::size_t k = 0; k < dim; ++k) chain.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = r[i][k];
    }
    out.chains.push_back(std::move(chain));
  }
  return out;
}

void write_curve_csv(std::ostream& out, const CurveBand& band) {
  out << "age,cum_mean,cum_lo,cum_hi,annual_mean,annual_lo,annual_hi\n";
  for (std::size_t i = 0; i < band.cum_mean.size(); ++i) {
    out << i + 1 << ',' << format_double(band.cum_mean[i]) << ',' << format_double(band.cum_lo[i]) << ','
        << format_double(band.cum_hi[i]) << ',' << format_double(band.annual_mean[i]) << ','
        << format_double(band.annual_lo[i]) << ',' << format_double(band.annual_hi[i]) << '\n';
  }
}

nlohmann::json config_echo(const ChainConfig& cfg, const PriorSpec& priors) {
  return {{"chain_config", to_json(cfg)}, {"priors", to_json(priors)}};
}

void write_outputs(const std::filesystem::path& dir, const PosteriorSamples& samples, const PriorSpec& priors,
                   double ci_level) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  const auto& cfg = samples.config;
  const auto retained = apply_burnin_thinning(samples, cfg.burn_in, cfg.thinning_factor);
  {
    auto f = open("samples.csv");
    write_samples_csv(f, retained);
  }
  if (retained.total() > 0) {
    const auto summary = summarize_curves(retained, cfg.max_age, ci_level);
    auto female = open("curves_female.csv");
    write_curve_csv(female, summary.female);
    auto male = open("curves_male.csv");
    write_curve_csv(male, summary.male);
  }
  {
    auto f = open("diagnostics.json");
    f << diagnostics(samples, retained).dump(2) << '\n';
  }
  {
    auto f = open("config_echo.json");
    f << config_echo(cfg, priors).dump(2) << '\n';
  }
  bool any_log = false;
  for (const auto& c : samples.chains) any_log = any_log || !c.imputation_log.empty();
  if (any_log) {
    auto f = open("imputation_log.csv");
    f << "chain,iteration,PedigreeID,ID,kind,value\n";
    for (std::size_t c = 0; c < samples.chains.size(); ++c) {
      for (const auto& r : samples.chains[c].imputation_log) {
        f << c << ',' << r.iteration << ',' << r.pedigree_id << ',' << r.member << ','
          << (r.kind == ImputationTarget::Kind::diagnosis_age ? "Age" : "CurAge") << ',' << r.value << '\n';
      }
    }
  }
}

}  // namespace penetrance
