#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "penetrance/reporting.hpp"

using namespace penetrance;

namespace {

RetainedSamples random_samples(int chains, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RetainedSamples out;
  out.coordinate_names = ParameterLayout(true).names();
  for (int c = 0; c < chains; ++c) {
    RetainedChain chain;
    chain.samples.resize(n, 8);
    for (int i = 0; i < n; ++i) {
      const QuantileParams f{0.2 + 0.6 * u(rng), 10.0 + 10.0 * u(rng), 55.0 + 10.0 * u(rng), 40.0 + 10.0 * u(rng)};
      const QuantileParams m{0.2 + 0.6 * u(rng), 10.0 + 10.0 * u(rng), 55.0 + 10.0 * u(rng), 40.0 + 10.0 * u(rng)};
      chain.samples.row(i) = ParameterLayout(true).pack(f, m).transpose();
      chain.log_posterior.push_back(-1000.0 * u(rng));
      chain.iterations.push_back(i + 1);
    }
    out.chains.push_back(std::move(chain));
  }
  return out;
}

}  // namespace

TEST(Retention, BurnInAndThinning) {
  EXPECT_EQ(retained_indices(20000, 0.1, 1).size(), 18000u);
  EXPECT_EQ(retained_indices(20000, 0.1, 1).front(), 2000);
  EXPECT_EQ(retained_indices(10, 0.25, 3), (std::vector<int>{2, 5, 8}));
  EXPECT_EQ(retained_indices(1, 0.0, 1), (std::vector<int>{0}));
  EXPECT_THROW(retained_indices(10, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(retained_indices(10, 0.1, 0), std::invalid_argument);

  PosteriorSamples s;
  s.coordinate_names = ParameterLayout(true).names();
  ChainResult c;
  c.samples = Eigen::MatrixXd::Zero(10, 8);
  for (int i = 0; i < 10; ++i) {
    c.samples(i, 0) = i;
    c.log_posterior.push_back(-i);
  }
  s.chains = {c};
  const auto r = apply_burnin_thinning(s, 0.25, 3);
  ASSERT_EQ(r.total(), 3u);
  EXPECT_EQ(r.chains[0].samples(1, 0), 5.0);
  EXPECT_EQ(r.chains[0].iterations, (std::vector<int>{3, 6, 9}));
  EXPECT_EQ(r.chains[0].log_posterior[2], -8.0);
}

TEST(Percentiles, NearestRank) {
  std::vector<double> v(40);
  for (int i = 0; i < 40; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  EXPECT_EQ(nearest_rank(v, 0.025), 1.0);
  EXPECT_EQ(nearest_rank(v, 0.975), 39.0);
  EXPECT_EQ(nearest_rank(v, 0.5), 20.0);
  EXPECT_EQ(nearest_rank({7.0}, 0.025), 7.0);
  EXPECT_EQ(nearest_rank({1.0, 2.0}, 0.025), 1.0);
  EXPECT_EQ(nearest_rank({1.0, 2.0}, 0.975), 2.0);
  EXPECT_THROW(nearest_rank({}, 0.5), std::invalid_argument);
}

TEST(CurveSummary, MatchesDirectComputation) {
  const auto samples = random_samples(2, 150, 3);
  const auto s = summarize_curves(samples, 94, 0.9);
  const ParameterLayout layout(true);
  for (int age : {1, 25, 50, 75, 94}) {
    std::vector<double> cum, ann;
    for (const auto& c : samples.chains) {
      for (Eigen::Index i = 0; i < c.samples.rows(); ++i) {
        const auto w = quantiles_to_weibull(layout.params(c.samples.row(i).transpose(), Sex::male));
        cum.push_back(w->gamma * (age <= w->delta ? 0.0 : 1.0 - std::exp(-std::pow((age - w->delta) / w->alpha, w->beta))));
        const double prev = age - 1 <= w->delta ? 0.0 : 1.0 - std::exp(-std::pow((age - 1 - w->delta) / w->alpha, w->beta));
        ann.push_back(cum.back() - w->gamma * prev);
      }
    }
    double mean = 0.0;
    for (double x : cum) mean += x;
    mean /= static_cast<double>(cum.size());
    std::ranges::sort(cum);
    std::ranges::sort(ann);
    const auto i = static_cast<std::size_t>(age - 1);
    EXPECT_NEAR(s.male.cum_mean[i], mean, 1e-12);
    // 300 values, 5% tails: ranks 15 and 285.
    EXPECT_NEAR(s.male.cum_lo[i], cum[14], 1e-12);
    EXPECT_NEAR(s.male.cum_hi[i], cum[284], 1e-12);
    EXPECT_NEAR(s.male.annual_lo[i], ann[14], 1e-12);
    EXPECT_NEAR(s.male.annual_hi[i], ann[284], 1e-12);
    EXPECT_LE(s.male.cum_lo[i], s.male.cum_hi[i]);
  }
}

TEST(CurveSummary, SmallAndConstantSamples) {
  auto one = random_samples(1, 1, 4);
  const auto s1 = summarize_curves(one, 94);
  for (std::size_t i = 0; i < 94; ++i) {
    EXPECT_EQ(s1.female.cum_lo[i], s1.female.cum_hi[i]);
    EXPECT_EQ(s1.female.cum_mean[i], s1.female.cum_lo[i]);
  }
  auto constant = random_samples(1, 1, 4);
  constant.chains[0].samples = constant.chains[0].samples.replicate(37, 1).eval();
  const auto sc = summarize_curves(constant, 94);
  for (std::size_t i = 0; i < 94; ++i) {
    EXPECT_EQ(sc.female.cum_mean[i], s1.female.cum_mean[i]);
    EXPECT_EQ(sc.male.annual_mean[i], s1.male.annual_mean[i]);
  }
  const auto two = random_samples(1, 2, 5);
  const auto s2 = summarize_curves(two, 94);
  const ParameterLayout layout(true);
  const auto c0 = *layout.curves(two.chains[0].samples.row(0).transpose());
  const auto c1 = *layout.curves(two.chains[0].samples.row(1).transpose());
  for (int age = 1; age <= 94; ++age) {
    const auto i = static_cast<std::size_t>(age - 1);
    const double a = cdf(c0.female, age), b = cdf(c1.female, age);
    EXPECT_NEAR(s2.female.cum_mean[i], 0.5 * (a + b), 1e-15);
    EXPECT_EQ(s2.female.cum_lo[i], std::min(a, b));
    EXPECT_EQ(s2.female.cum_hi[i], std::max(a, b));
  }
  RetainedSamples empty;
  empty.coordinate_names = ParameterLayout(true).names();
  EXPECT_THROW(summarize_curves(empty, 94), std::invalid_argument);
}

TEST(CurveSummary, OrderInvariant) {
  auto a = random_samples(1, 200, 6);
  auto b = a;
  std::mt19937_64 rng(1);
  std::vector<int> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  std::ranges::shuffle(perm, rng);
  for (int i = 0; i < 200; ++i) b.chains[0].samples.row(i) = a.chains[0].samples.row(perm[static_cast<std::size_t>(i)]);
  const auto sa = summarize_curves(a, 94), sb = summarize_curves(b, 94);
  EXPECT_EQ(sa.female.cum_mean, sb.female.cum_mean);
  EXPECT_EQ(sa.male.annual_hi, sb.male.annual_hi);
  EXPECT_EQ(sa.male.cum_lo, sb.male.cum_lo);
}

TEST(CurveSummary, PooledLayoutSharesCurves) {
  RetainedSamples r;
  r.sex_specific = false;
  r.coordinate_names = ParameterLayout(false).names();
  RetainedChain c;
  c.samples.resize(1, 4);
  c.samples << 0.5, 20, 50, 40;
  c.log_posterior = {0.0};
  c.iterations = {1};
  r.chains = {c};
  const auto s = summarize_curves(r, 94);
  EXPECT_EQ(s.female.cum_mean, s.male.cum_mean);
}

TEST(Intervals, CoordinateInterval) {
  RetainedSamples r;
  r.coordinate_names = {"a", "b", "c", "d"};
  for (int k = 0; k < 2; ++k) {
    RetainedChain c;
    c.samples.resize(20, 4);
    for (int i = 0; i < 20; ++i) c.samples.row(i).setConstant(20 * k + i + 1);
    r.chains.push_back(c);
  }
  const auto ci = coordinate_interval(r, 2, 0.95);
  EXPECT_EQ(ci.lo, 1.0);
  EXPECT_EQ(ci.hi, 39.0);
  EXPECT_DOUBLE_EQ(ci.mean, 20.5);
  EXPECT_TRUE(ci.contains(20.0));
  EXPECT_FALSE(ci.contains(40.0));
}

TEST(GelmanRubin, HandComputedValue) {
  // Chain means 2 and 5, within-chain variances 1: W = 1, B = 3 * 4.5.
  const auto r = gelman_rubin({{1, 2, 3}, {4, 5, 6}});
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(*r, std::sqrt(2.0 / 3.0 + 13.5 / 3.0), 1e-14);
  EXPECT_FALSE(gelman_rubin({{1, 2, 3}}).has_value());
  EXPECT_FALSE(gelman_rubin({{1, 1}, {2, 2}}).has_value());
  EXPECT_THROW(gelman_rubin({{1, 2}, {1, 2, 3}}), std::invalid_argument);
}

TEST(GelmanRubin, IdenticalChains) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  std::vector<double> chain(1000000);
  for (double& x : chain) x = normal(rng);
  const auto r = gelman_rubin({chain, chain, chain});
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(*r, 1.0, 1e-6);
  EXPECT_NEAR(*r, std::sqrt(999999.0 / 1000000.0), 1e-15);
}

TEST(SamplesCsv, RoundTripIsExact) {
  const auto a = random_samples(3, 50, 8);
  std::stringstream text;
  write_samples_csv(text, a);
  const auto b = read_samples_csv(text);
  ASSERT_EQ(b.chains.size(), 3u);
  EXPECT_EQ(b.coordinate_names, a.coordinate_names);
  EXPECT_TRUE(b.sex_specific);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(b.chains[c].samples, a.chains[c].samples);
    EXPECT_EQ(b.chains[c].log_posterior, a.chains[c].log_posterior);
    EXPECT_EQ(b.chains[c].iterations, a.chains[c].iterations);
  }
  std::istringstream bad_header("a,b,c,d,chain,iteration\n");
  EXPECT_THROW(read_samples_csv(bad_header), std::runtime_error);
  std::istringstream bad_number("a,b,c,d,chain,iteration,log_posterior\n1,2,x,4,0,1,0\n");
  EXPECT_THROW(read_samples_csv(bad_number), std::runtime_error);
}

TEST(ConfigEcho, MatchesGoldenDefaults) {
  std::ifstream f(std::string(PENETRANCE_GOLDEN_DIR) + "/config_echo_default.json");
  ASSERT_TRUE(f.good());
  const auto golden = nlohmann::json::parse(f);
  EXPECT_EQ(config_echo(ChainConfig{}, default_priors(94)), golden);
}

TEST(Outputs, WritesAllFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "penetrance_reporting_test";
  std::filesystem::remove_all(dir);
  PosteriorSamples s;
  s.coordinate_names = ParameterLayout(true).names();
  s.config.n_iter_per_chain = 20;
  s.config.burn_in = 0.5;
  const auto r = random_samples(2, 20, 9);
  for (const auto& c : r.chains) {
    ChainResult cr;
    cr.samples = c.samples;
    cr.log_posterior = c.log_posterior;
    cr.accepted = 5;
    s.chains.push_back(cr);
  }
  write_outputs(dir, s, default_priors(94), 0.95);
  for (const char* name : {"samples.csv", "curves_female.csv", "curves_male.csv", "diagnostics.json",
                           "config_echo.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "imputation_log.csv"));
  std::ifstream samples(dir / "samples.csv");
  const auto back = read_samples_csv(samples);
  EXPECT_EQ(back.total(), 20u);
  EXPECT_EQ(back.chains[0].iterations.front(), 11);
  std::ifstream diag(dir / "diagnostics.json");
  const auto d = nlohmann::json::parse(diag);
  EXPECT_EQ(d["chains"][1]["accepted"], 5);
  EXPECT_TRUE(d["coordinates"]["median_female"]["rhat"].is_number());
  std::filesystem::remove_all(dir);
}
