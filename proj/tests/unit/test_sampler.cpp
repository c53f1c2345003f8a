#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "penetrance/sampler.hpp"
#include "penetrance/simulator.hpp"

using namespace penetrance;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ChainConfig small_config(int n_iter) {
  ChainConfig cfg;
  cfg.n_iter_per_chain = n_iter;
  cfg.ncores = 1;
  return cfg;
}

EstimationInputs small_study(int families, std::uint64_t seed = 5) {
  auto sim = mlh1_like_config();
  sim.n_probands = families;
  sim.seed = seed;
  EstimationInputs in;
  in.pedigrees = simulate_study(sim).pedigrees;
  in.priors = default_priors(94);
  in.baseline = example_crc_baseline(94);
  return in;
}

Individual affected(MemberId id, Sex sex, int age) {
  Individual i;
  i.id = id;
  i.pedigree_id = "a";
  i.sex = sex;
  i.is_affected = Affection::affected;
  i.age_dx = age;
  i.cur_age = age + 5;
  return i;
}

class CountingTarget : public LogTarget {
 public:
  bool in_bounds(const Eigen::VectorXd& v) const override { return v[0] >= 0.0; }
  double log_density(const Eigen::VectorXd& v) const override {
    ++calls;
    return -0.5 * v.squaredNorm();
  }
  mutable int calls = 0;
};

class GaussianTarget : public LogTarget {
 public:
  bool in_bounds(const Eigen::VectorXd&) const override { return true; }
  double log_density(const Eigen::VectorXd& v) const override {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += v[i] * v[i] / (1.0 + i);
    return -0.5 * s;
  }
};

}  // namespace

TEST(ChainConfigTest, DefaultsAndValidation) {
  const ChainConfig cfg;
  EXPECT_EQ(cfg.n_iter_per_chain, 10000);
  EXPECT_EQ(cfg.imp_interval, 10);
  EXPECT_EQ(cfg.prev, 0.0001);
  EXPECT_EQ(cfg.max_age, 94);
  EXPECT_EQ(cfg.var, (std::vector<double>{0.1, 0.1, 2, 2, 5, 5, 5, 5}));
  EXPECT_NO_THROW(cfg.validate());
  auto bad = cfg;
  bad.burn_in = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.thinning_factor = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.n_iter_per_chain = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.var = {1, 1, 1};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Bounds, TableConditions) {
  const auto baseline = example_crc_baseline();
  const ChainConfig cfg;
  const ParameterLayout layout(true);
  const QuantileParams ok{0.5, 20.0, 50.0, 40.0};
  EXPECT_TRUE(within_bounds(layout.pack(ok, ok), baseline, cfg));
  auto v = layout.pack(ok, ok);
  v[0] = 1.2;
  EXPECT_FALSE(within_bounds(v, baseline, cfg));
  EXPECT_FALSE(within_bounds(layout.pack(ok, {0.5, 35.0, 50.0, 30.0}), baseline, cfg));
  EXPECT_FALSE(within_bounds(layout.pack(ok, {0.5, 20.0, 40.0, 45.0}), baseline, cfg));
  EXPECT_FALSE(within_bounds(layout.pack({0.5, 101.0, 102.0, 101.5}, ok), baseline, cfg));
  const double top = baseline.median_onset_age(Sex::male);
  EXPECT_TRUE(within_bounds(layout.pack(ok, {0.5, 20.0, top, 40.0}), baseline, cfg));
  EXPECT_FALSE(within_bounds(layout.pack(ok, {0.5, 20.0, top + 0.5, 40.0}), baseline, cfg));
  auto relaxed = cfg;
  relaxed.median_max = false;
  EXPECT_TRUE(within_bounds(layout.pack(ok, {0.5, 20.0, top + 0.5, 40.0}), baseline, relaxed));
  EXPECT_FALSE(within_bounds(layout.pack(ok, {0.5, 20.0, 94.5, 40.0}), baseline, relaxed));

}

TEST(Layout, PackAndNames) {
  const ParameterLayout layout(true);
  const QuantileParams f{0.1, 2, 4, 3}, m{0.2, 5, 7, 6};
  const auto v = layout.pack(f, m);
  EXPECT_EQ(v.size(), 8);
  EXPECT_EQ(v[0], 0.1);
  EXPECT_EQ(v[1], 0.2);
  EXPECT_EQ(v[4], 4.0);
  EXPECT_EQ(v[7], 6.0);
  EXPECT_EQ(layout.params(v, Sex::male), m);
  EXPECT_EQ(layout.names()[6], "first_quartile_female");
  const ParameterLayout pooled(false);
  EXPECT_EQ(pooled.dim(), 4);
  EXPECT_EQ(pooled.params(pooled.pack(f, m), Sex::male), f);
}

TEST(Initialization, PercentileRule) {
  // Linear interpolation at rank (n + 1) p.
  EXPECT_DOUBLE_EQ(empirical_percentile({30, 40, 50, 60}, 0.25), 30.0 + 0.25 * 10.0);
  EXPECT_DOUBLE_EQ(empirical_percentile({60, 30, 50, 40}, 0.5), 45.0);
  EXPECT_DOUBLE_EQ(empirical_percentile({40}, 0.25), 40.0);
  EXPECT_DOUBLE_EQ(empirical_percentile({10, 20}, 0.99), 20.0);
}

TEST(Initialization, SexStrataAndFallback) {
  Pedigree p;
  p.id = "a";
  p.members = {affected(1, Sex::female, 30), affected(2, Sex::female, 40), affected(3, Sex::female, 50),
               affected(4, Sex::female, 60)};
  const std::vector<Pedigree> data{p};
  Rng rng(1);
  const ChainConfig cfg;
  const auto init = initialize_state(data, cfg, default_priors(94), example_crc_baseline(), rng);
  const ParameterLayout layout(true);
  const auto f = layout.params(init.state, Sex::female);
  EXPECT_DOUBLE_EQ(f.first_quartile, 32.5);
  EXPECT_DOUBLE_EQ(f.median, 45.0);
  EXPECT_DOUBLE_EQ(f.threshold, 29.0);
  EXPECT_GE(f.asymptote, 0.25);
  EXPECT_LE(f.asymptote, 0.75);
  // No affected males: pooled ages used, with a warning.
  const auto m = layout.params(init.state, Sex::male);
  EXPECT_DOUBLE_EQ(m.first_quartile, 32.5);
  EXPECT_DOUBLE_EQ(m.median, 45.0);
  EXPECT_FALSE(init.warnings.empty());
  EXPECT_TRUE(within_bounds(init.state, example_crc_baseline(), cfg));
}

TEST(Initialization, SingleAgeIsJittered) {
  Pedigree p;
  p.id = "a";
  p.members = {affected(1, Sex::female, 40), affected(2, Sex::male, 40)};
  const std::vector<Pedigree> data{p};
  Rng rng(1);
  const auto init = initialize_state(data, ChainConfig{}, default_priors(94), example_crc_baseline(), rng);
  const auto f = ParameterLayout(true).params(init.state, Sex::female);
  EXPECT_DOUBLE_EQ(f.first_quartile, 40.0);
  EXPECT_DOUBLE_EQ(f.median, 41.0);
}

TEST(Initialization, ThresholdRespectsPriorLowerBound) {
  Pedigree p;
  p.id = "a";
  p.members = {affected(1, Sex::female, 3), affected(2, Sex::female, 50), affected(3, Sex::male, 45),
               affected(4, Sex::male, 60)};
  const std::vector<Pedigree> data{p};
  Rng rng(1);
  const auto init = initialize_state(data, ChainConfig{}, default_priors(94), example_crc_baseline(), rng);
  EXPECT_GE(ParameterLayout(true).params(init.state, Sex::female).threshold, 5.0);
  EXPECT_TRUE(std::isfinite(log_prior(default_priors(94), ParameterLayout(true).params(init.state, Sex::female),
                                      ParameterLayout(true).params(init.state, Sex::male))));
}

TEST(Initialization, NoAffectedIsAnError) {
  Pedigree p;
  p.id = "a";
  p.members = {affected(1, Sex::female, 30)};
  p.members[0].is_affected = Affection::unaffected;
  p.members[0].age_dx.reset();
  const std::vector<Pedigree> data{p};
  Rng rng(1);
  EXPECT_THROW(initialize_state(data, ChainConfig{}, default_priors(94), example_crc_baseline(), rng),
               std::runtime_error);
}

TEST(Proposal, ZeroCovarianceAndDeterminism) {
  Eigen::VectorXd x(3);
  x << 1.0, 2.0, 3.0;
  Rng rng(1);
  EXPECT_EQ(propose(x, Eigen::MatrixXd::Zero(3, 3), rng), x);
  const Eigen::MatrixXd cov = Eigen::Vector3d(1.0, 2.0, 3.0).asDiagonal();
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(propose(x, cov, a), propose(x, cov, b));
}

TEST(Proposal, EmpiricalCovarianceMatches) {
  Eigen::MatrixXd cov(3, 3);
  cov << 2.0, 0.6, -0.3, 0.6, 1.0, 0.2, -0.3, 0.2, 0.5;
  const ProposalKernel kernel(cov);
  EXPECT_FALSE(kernel.repaired());
  Rng rng(7);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  const int n = 100000;
  Eigen::MatrixXd draws(n, 3);
  for (int i = 0; i < n; ++i) draws.row(i) = kernel.draw(x, rng).transpose();
  const Eigen::MatrixXd centred = draws.rowwise() - draws.colwise().mean();
  const Eigen::MatrixXd emp = centred.transpose() * centred / (n - 1);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(emp(r, c), cov(r, c), 0.05 * std::abs(cov(r, c))) << r << "," << c;
  }
}

TEST(Proposal, NonPsdIsRepaired) {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  const ProposalKernel kernel(cov);
  EXPECT_TRUE(kernel.repaired());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kernel.covariance());
  EXPECT_NEAR(eig.eigenvalues().minCoeff(), 1e-10, 1e-12);
}

TEST(Adaptation, Schedule) {
  Eigen::VectorXd var(8);
  var << 0.1, 0.1, 2, 2, 5, 5, 5, 5;
  const Eigen::MatrixXd history = Eigen::MatrixXd::Random(20, 8);
  EXPECT_EQ(adapt_covariance(history, 10, var), Eigen::MatrixXd(var.asDiagonal()));
  EXPECT_EQ(adapt_covariance(history, 199, var), Eigen::MatrixXd(var.asDiagonal()));
  const Eigen::MatrixXd same = Eigen::MatrixXd::Ones(300, 8);
  const Eigen::MatrixXd c = adapt_covariance(same, 250, var);
  const double sd = 2.38 * 2.38 / 8.0;
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(c(i, j), i == j ? sd * 1e-8 : 0.0, 1e-20);
  }
  EXPECT_THROW(adapt_covariance(history, 0, var), std::invalid_argument);
}

TEST(Adaptation, IncrementalMatchesBatch) {
  Eigen::VectorXd var = Eigen::VectorXd::Constant(3, 0.5);
  AdaptiveCovariance adaptive(var);
  Rng rng(3);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd history(300, 3);
  for (int t = 0; t < 300; ++t) {
    for (int k = 0; k < 3; ++k) history(t, k) = normal(rng) * (k + 1) + 10.0 * k;
  }
  adaptive.record(history.row(0).transpose());
  for (int t = 1; t < 300; ++t) {
    auto [kernel, changed] = adaptive.kernel_for(t);
    EXPECT_EQ(changed, t >= 200 && (t - 200) % 50 == 0);
    const Eigen::MatrixXd batch = adapt_covariance(history.topRows(t), t, var);
    if (t < 200 || changed) EXPECT_TRUE(kernel.covariance().isApprox(batch, 1e-10)) << "t=" << t;
    adaptive.record(history.row(t).transpose());
  }
}

TEST(MetropolisStep, BoundsCheckedBeforeDensity) {
  CountingTarget target;
  Eigen::VectorXd x(1);
  x << 0.0;
  Eigen::MatrixXd cov(1, 1);
  cov << 100.0;
  const ProposalKernel kernel(cov);
  Rng rng(5);
  int outside = 0;
  for (int i = 0; i < 200; ++i) {
    const int before = target.calls;
    const auto r = mh_step(x, target.log_density(x), kernel, target, rng);
    if (r.out_of_bounds) {
      ++outside;
      EXPECT_EQ(target.calls, before + 1);  // only the explicit call above
      EXPECT_FALSE(r.accepted);
    }
  }
  EXPECT_GT(outside, 50);
}

TEST(MetropolisStep, IdenticalProposalAlwaysAccepted) {
  GaussianTarget target;
  const ProposalKernel kernel(Eigen::MatrixXd::Zero(2, 2));
  Rng rng(1);
  const Eigen::VectorXd x = Eigen::Vector2d(0.3, -0.2);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(mh_step(x, target.log_density(x), kernel, target, rng).accepted);
}

TEST(MetropolisStep, NonFiniteCurrentStateAborts) {
  GaussianTarget target;
  const ProposalKernel kernel(Eigen::MatrixXd::Identity(2, 2));
  Rng rng(1);
  EXPECT_THROW(mh_step(Eigen::Vector2d(0, 0), -kInf, kernel, target, rng), std::runtime_error);
}

TEST(MetropolisStep, AcceptanceUsesPosteriorRatio) {
  // Replays the uniform draw to check the decision against a brute-force posterior.
  auto in = small_study(2);
  for (auto& p : in.pedigrees) p.members.resize(std::min<std::size_t>(p.members.size(), 7));
  for (auto& p : in.pedigrees) {
    for (auto& m : p.members) {
      if (m.mother_id && *m.mother_id > 7) m.mother_id.reset();
      if (m.father_id && *m.father_id > 7) m.father_id.reset();
      if (!m.mother_id || !m.father_id) m.mother_id.reset(), m.father_id.reset();
    }
  }
  const ChainConfig cfg;
  const PenetranceModel model(in.pedigrees, in.priors, in.baseline, std::nullopt, cfg);
  const ParameterLayout layout(true);
  const auto oracle = [&](const Eigen::VectorXd& v) {
    const auto curves = *layout.curves(v);
    const FactorLookup lookup(curves, model.baseline());
    double lp = log_prior(in.priors, layout.params(v, Sex::female), layout.params(v, Sex::male));
    for (const auto& p : model.pedigrees()) lp += brute_force_loglik(p, lookup.factors(p), model.genotype_model());
    return lp;
  };
  const QuantileParams f{0.4, 20, 60, 50}, m{0.5, 18, 57, 47};
  const Eigen::VectorXd x = layout.pack(f, m);
  EXPECT_NEAR(model.log_density(x), oracle(x), 1e-10 * std::abs(oracle(x)));

  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(8, 8);
  cov.diagonal() << 0.001, 0.001, 1, 1, 1, 1, 1, 1;
  const ProposalKernel kernel(cov);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed), replay(seed);
    const auto result = mh_step(x, model.log_density(x), kernel, model, rng);
    const Eigen::VectorXd proposal = kernel.draw(x, replay);
    if (!model.in_bounds(proposal)) {
      EXPECT_TRUE(result.out_of_bounds);
      continue;
    }
    const double log_u = std::log(std::uniform_real_distribution<double>(0.0, 1.0)(replay));
    const double delta = oracle(proposal) - oracle(x);
    EXPECT_EQ(result.accepted, log_u < delta) << "seed " << seed;
  }
}

TEST(AdaptiveMetropolis, GaussianAcceptanceRate) {
  GaussianTarget target;
  Rng rng(11);
  const auto r = run_adaptive_metropolis(target, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Constant(4, 1.0), 20000,
                                         rng);
  long accepted_after = 0;
  for (int t = 1000; t < 20000; ++t) {
    accepted_after += (r.samples.row(t) != r.samples.row(t - 1)) ? 1 : 0;
  }
  const double rate = accepted_after / 19000.0;
  EXPECT_GE(rate, 0.15);
  EXPECT_LE(rate, 0.40);
  EXPECT_EQ(r.samples.rows(), 20000);
}

TEST(RunChain, SingleIterationWithZeroVarianceKeepsInitialState) {
  const auto in = small_study(5);
  auto cfg = small_config(1);
  cfg.var.assign(8, 0.0);
  const auto r = run_chain(cfg, in, 0);
  ASSERT_EQ(r.samples.rows(), 1);
  Rng rng(cfg.seed);
  PenetranceModel model(in.pedigrees, in.priors, in.baseline, std::nullopt, cfg);
  const auto init = initialize_state(model.pedigrees(), cfg, in.priors, model.baseline(), rng);
  EXPECT_EQ(Eigen::VectorXd(r.samples.row(0).transpose()), init.state);
  EXPECT_EQ(r.accepted, 1);
}

TEST(RunChain, DeterministicAndBounded) {
  const auto in = small_study(8);
  const auto cfg = small_config(600);
  const auto a = run_chain(cfg, in, 0);
  const auto b = run_chain(cfg, in, 0);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.log_posterior, b.log_posterior);
  PenetranceModel model(in.pedigrees, in.priors, in.baseline, std::nullopt, cfg);
  for (Eigen::Index i = 0; i < a.samples.rows(); ++i) {
    EXPECT_TRUE(model.in_bounds(a.samples.row(i).transpose())) << "row " << i;
  }
  EXPECT_FALSE(a.covariance_snapshots.empty());
  EXPECT_EQ(a.covariance_snapshots.front().iteration, 200);
}

TEST(RunChain, PooledModeUsesFourCoordinates) {
  const auto in = small_study(6);
  auto cfg = small_config(300);
  cfg.sex_specific = false;
  const auto r = run_chain(cfg, in, 0);
  EXPECT_EQ(r.samples.cols(), 4);
}

TEST(RunChain, ImputationKeepsAgesConsistent) {
  auto sim = mlh1_like_config();
  sim.n_probands = 6;
  sim.mask_age_dx = 0.3;
  sim.mask_cur_age = 0.3;
  EstimationInputs in;
  in.pedigrees = simulate_study(sim).pedigrees;
  in.priors = default_priors(94);
  in.baseline = example_crc_baseline();
  auto cfg = small_config(200);
  cfg.age_imputation = true;
  cfg.debug_imputation = true;
  const auto r = run_chain(cfg, in, 0);
  EXPECT_FALSE(r.imputation_log.empty());
  for (const auto& rec : r.imputation_log) {
    EXPECT_EQ(rec.iteration % cfg.imp_interval, 0);
    EXPECT_GE(rec.value, 1);
    EXPECT_LE(rec.value, cfg.max_age);
  }
  for (double lp : r.log_posterior) EXPECT_TRUE(std::isfinite(lp));
}

TEST(RunChains, SeedsAndThreadCountIndependence) {
  const auto in = small_study(6);
  auto cfg = small_config(300);
  cfg.n_chains = 3;
  cfg.ncores = 1;
  const auto serial = run_chains(cfg, in);
  cfg.ncores = 3;
  const auto parallel = run_chains(cfg, in);
  ASSERT_EQ(serial.chains.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(serial.chains[i].samples, parallel.chains[i].samples);
  EXPECT_NE(serial.chains[0].samples, serial.chains[1].samples);
  EXPECT_EQ(serial.coordinate_names.size(), 8u);
}

TEST(RunChains, ChainFailureIsReported) {
  auto in = small_study(3);
  for (auto& p : in.pedigrees) {
    for (auto& m : p.members) {
      m.is_affected = Affection::unaffected;
      m.age_dx.reset();
    }
  }
  auto cfg = small_config(10);
  try {
    run_chains(cfg, in);
    FAIL() << "expected failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("chain 0"), std::string::npos);
  }
}
