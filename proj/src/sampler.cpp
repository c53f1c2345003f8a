#include "penetrance/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>

#include <Eigen/Eigenvalues>

namespace penetrance {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double layout_log_prior(const PriorSpec& priors, const ParameterLayout& layout, const Eigen::VectorXd& v) {
  if (layout.sex_specific()) {
    return log_prior(priors, layout.params(v, Sex::female), layout.params(v, Sex::male));
  }
  return log_prior(priors.female, layout.params(v, Sex::unknown));
}

std::vector<Sex> strata(const ParameterLayout& layout) {
  if (layout.sex_specific()) return {Sex::female, Sex::male};
  return {Sex::unknown};
}

}  // namespace

void ChainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(n_iter_per_chain >= 1, "n_iter_per_chain must be >= 1");
  require(n_chains >= 1, "n_chains must be >= 1");
  require(burn_in >= 0.0 && burn_in < 1.0, "burn_in must lie in [0, 1)");
  require(thinning_factor >= 1, "thinning_factor must be >= 1");
  require(imp_interval >= 1, "imp_interval must be >= 1");
  require(max_age >= 2, "max_age must be >= 2");
  require(prev > 0.0 && prev < 1.0, "prev must lie in (0, 1)");
  require(ncores >= 1, "ncores must be >= 1");
  const std::size_t dim = sex_specific ? 8 : 4;
  require(var.size() >= dim, "var needs " + std::to_string(dim) + " proposal variances");
  for (double v : var) require(std::isfinite(v) && v >= 0.0, "proposal variances must be finite and >= 0");
}

nlohmann::json to_json(const ChainConfig& cfg) {
  return {
      {"n_iter_per_chain", cfg.n_iter_per_chain},
      {"n_chains", cfg.n_chains},
      {"seed", cfg.seed},
      {"var", cfg.var},
      {"burn_in", cfg.burn_in},
      {"thinning_factor", cfg.thinning_factor},
      {"age_imputation", cfg.age_imputation},
      {"imp_interval", cfg.imp_interval},
      {"remove_proband", cfg.remove_proband},
      {"sex_specific", cfg.sex_specific},
      {"median_max", cfg.median_max},
      {"baseline_nc", cfg.baseline_nc},
      {"max_age", cfg.max_age},
      {"prev", cfg.prev},
      {"ncores", cfg.ncores},
  };
}

std::vector<std::string> ParameterLayout::names() const {
  if (!sex_specific_) return {"asymptote", "threshold", "median", "first_quartile"};
  return {"asymptote_female", "asymptote_male", "threshold_female", "threshold_male",
          "median_female",    "median_male",    "first_quartile_female", "first_quartile_male"};
}

QuantileParams ParameterLayout::params(const Eigen::VectorXd& v, Sex sex) const {
  if (!sex_specific_) return {v[0], v[1], v[2], v[3]};
  const Eigen::Index k = sex == Sex::male ? 1 : 0;
  return {v[0 + k], v[2 + k], v[4 + k], v[6 + k]};
}

Eigen::VectorXd ParameterLayout::pack(const QuantileParams& female, const QuantileParams& male) const {
  Eigen::VectorXd v(dim());
  if (!sex_specific_) {
    v << female.asymptote, female.threshold, female.median, female.first_quartile;
  } else {
    v << female.asymptote, male.asymptote, female.threshold, male.threshold, female.median, male.median,
        female.first_quartile, male.first_quartile;
  }
  return v;
}

std::optional<PenetranceCurves> ParameterLayout::curves(const Eigen::VectorXd& v) const {
  const auto female = quantiles_to_weibull(params(v, Sex::female));
  if (!female) return std::nullopt;
  if (!sex_specific_) return PenetranceCurves{*female, *female};
  const auto male = quantiles_to_weibull(params(v, Sex::male));
  if (!male) return std::nullopt;
  return PenetranceCurves{*female, *male};
}

double median_upper_bound(const BaselineTable& baseline, const ChainConfig& cfg, Sex sex) {
  return cfg.median_max ? static_cast<double>(baseline.median_onset_age(sex)) : static_cast<double>(cfg.max_age);
}

bool within_bounds(const Eigen::VectorXd& v, const BaselineTable& baseline, const ChainConfig& cfg) {
  const ParameterLayout layout(cfg.sex_specific);
  if (v.size() != layout.dim() || !v.allFinite()) return false;
  for (Sex sex : strata(layout)) {
    const auto q = layout.params(v, sex);
    if (q.asymptote < 0.0 || q.asymptote > 1.0) return false;
    if (q.threshold < 0.0 || q.threshold > 100.0) return false;
    if (q.first_quartile < q.threshold || q.median < q.first_quartile) return false;
    if (q.median > median_upper_bound(baseline, cfg, sex)) return false;
  }
  return true;
}

PenetranceModel::PenetranceModel(std::vector<Pedigree> pedigrees, PriorSpec priors, BaselineTable baseline,
                                 std::optional<BaselineTable> noncarrier, ChainConfig cfg)
    : priors_(std::move(priors)), cfg_(std::move(cfg)), layout_(cfg_.sex_specific) {
  cfg_.validate();
  baseline_ = baseline.truncated(cfg_.max_age);
  if (!cfg_.baseline_nc) {
    if (!noncarrier) throw std::invalid_argument("baseline_nc is false but no noncarrier risk table was supplied");
    noncarrier_ = noncarrier->truncated(cfg_.max_age);
  }
  gm_ = GenotypeModel::from_prevalence(cfg_.prev);
  pedigrees_.reserve(pedigrees.size());
  plans_.reserve(pedigrees.size());
  for (auto& ped : pedigrees) {
    pedigrees_.push_back(clamp_ages(std::move(ped), cfg_.max_age));
    plans_.emplace_back(pedigrees_.back());
  }
}

bool PenetranceModel::in_bounds(const Eigen::VectorXd& v) const { return within_bounds(v, baseline_, cfg_); }

double PenetranceModel::log_prior(const Eigen::VectorXd& v) const { return layout_log_prior(priors_, layout_, v); }

FactorLookup PenetranceModel::factor_lookup(const PenetranceCurves& curves) const {
  return FactorLookup(curves, noncarrier_ ? *noncarrier_ : baseline_, cfg_.remove_proband);
}

double PenetranceModel::log_likelihood(const Eigen::VectorXd& v) const {
  const auto curves = layout_.curves(v);
  if (!curves) return kNegInf;
  const auto lookup = factor_lookup(*curves);
  double total = 0.0;
  for (std::size_t i = 0; i < pedigrees_.size(); ++i) {
    lookup.fill(pedigrees_[i], scratch_);
    const double ll = plans_[i].loglik(scratch_, gm_);
    if (ll == kNegInf) return kNegInf;
    total += ll;
  }
  return total;
}

double PenetranceModel::log_density(const Eigen::VectorXd& v) const {
  if (!in_bounds(v)) return kNegInf;
  const double lp = log_prior(v);
  if (lp == kNegInf) return kNegInf;
  const double ll = log_likelihood(v);
  if (ll == kNegInf) return kNegInf;
  return lp + ll;
}

double empirical_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::ranges::sort(values);
  const double n = static_cast<double>(values.size());
  const double h = (n + 1.0) * p;
  if (h <= 1.0) return values.front();
  if (h >= n) return values.back();
  const auto lo = static_cast<std::size_t>(std::floor(h));
  return values[lo - 1] + (h - std::floor(h)) * (values[lo] - values[lo - 1]);
}

InitialState initialize_state(std::span<const Pedigree> data, const ChainConfig& cfg, const PriorSpec& priors,
                              const BaselineTable& baseline, Rng& rng) {
  const ParameterLayout layout(cfg.sex_specific);
  InitialState out;
  std::vector<double> female, male, pooled;
  for (const auto& ped : data) {
    for (const auto& m : ped.members) {
      if (m.is_affected != Affection::affected || !m.age_dx) continue;
      const double age = std::clamp(*m.age_dx, 1, cfg.max_age);
      pooled.push_back(age);
      if (m.sex == Sex::female) female.push_back(age);
      if (m.sex == Sex::male) male.push_back(age);
    }
  }
  if (pooled.empty()) {
    throw std::runtime_error(
        "cannot initialise the sampler: no affected individual has a recorded diagnosis age "
        "(enable age imputation or supply diagnosis ages)");
  }

  // Deterministic part per stratum; the asymptote is drawn below.
  std::map<Sex, QuantileParams> start;
  for (Sex sex : strata(layout)) {
    const std::vector<double>* ages = &pooled;
    if (sex == Sex::female && !female.empty()) ages = &female;
    if (sex == Sex::male && !male.empty()) ages = &male;
    if (sex != Sex::unknown && ages == &pooled) {
      out.warnings.push_back(std::string("no affected ") + (sex == Sex::male ? "males" : "females") +
                             " with a diagnosis age; initialising that sex from pooled ages");
    }
    const auto& prior = layout.sex_specific() ? priors.for_sex(sex) : priors.female;
    QuantileParams q;
    q.first_quartile = empirical_percentile(*ages, 0.25);
    q.median = empirical_percentile(*ages, 0.5);
    if (q.median <= q.first_quartile) q.median = q.first_quartile + 1.0;
    const double earliest = *std::ranges::min_element(*ages);
    q.threshold = std::clamp(earliest - 1.0, prior.threshold.lo, prior.threshold.hi);
    const double top = median_upper_bound(baseline, cfg, sex);
    if (q.median > top) {
      q.median = top;
      q.first_quartile = std::min(q.first_quartile, top - 1.0);
    }
    if (q.threshold >= q.first_quartile) q.threshold = std::max(prior.threshold.lo, q.first_quartile - 1.0);
    start[sex] = q;
  }

  auto pack = [&](const std::map<Sex, QuantileParams>& s) {
    if (!layout.sex_specific()) return layout.pack(s.at(Sex::unknown), s.at(Sex::unknown));
    return layout.pack(s.at(Sex::female), s.at(Sex::male));
  };
  auto acceptable = [&](const Eigen::VectorXd& v) {
    return within_bounds(v, baseline, cfg) && layout.curves(v).has_value() &&
           std::isfinite(layout_log_prior(priors, layout, v));
  };

  for (int attempt = 0; attempt < 100; ++attempt) {
    for (auto& [sex, q] : start) {
      const auto& prior = layout.sex_specific() ? priors.for_sex(sex) : priors.female;
      q.asymptote = std::uniform_real_distribution<double>(prior.asymptote.quantile(0.25),
                                                           prior.asymptote.quantile(0.75))(rng);
    }
    auto v = pack(start);
    if (acceptable(v)) {
      out.state = std::move(v);
      return out;
    }
  }

  for (auto& [sex, q] : start) {
    const auto& prior = layout.sex_specific() ? priors.for_sex(sex) : priors.female;
    q.asymptote = prior.asymptote.quantile(0.5);
    q.threshold = prior.threshold.quantile(0.5);
    q.median = std::min(prior.median.quantile(0.5), median_upper_bound(baseline, cfg, sex));
    q.first_quartile = prior.first_quartile.quantile(0.5);
    if (!(q.first_quartile > q.threshold && q.first_quartile < q.median)) {
      q.first_quartile = 0.5 * (q.threshold + q.median);
    }
  }
  out.state = pack(start);
  out.warnings.push_back("data-driven starting point violated the bounds; starting from prior medians");
  if (!acceptable(out.state)) {
    throw std::runtime_error("cannot find a starting point inside the parameter bounds and prior support");
  }
  return out;
}

ProposalKernel::ProposalKernel(const Eigen::MatrixXd& cov) : cov_(cov) {
  if (cov.rows() != cov.cols()) throw std::invalid_argument("proposal covariance must be square");
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  Eigen::VectorXd values = eig.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] < -1e-12 * scale) {
      values[i] = 1e-10;
      repaired_ = true;
    } else if (values[i] < 0.0) {
      values[i] = 0.0;
    }
  }
  if (repaired_) cov_ = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  factor_ = eig.eigenvectors() * values.cwiseSqrt().asDiagonal();
}

Eigen::VectorXd ProposalKernel::draw(const Eigen::VectorXd& current, Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(current.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return current + factor_ * z;
}

Eigen::VectorXd propose(const Eigen::VectorXd& current, const Eigen::MatrixXd& cov, Rng& rng) {
  return ProposalKernel(cov).draw(current, rng);
}

namespace {

double adaptation_scale(Eigen::Index dim) { return 2.38 * 2.38 / static_cast<double>(dim); }

}  // namespace

Eigen::MatrixXd adapt_covariance(const Eigen::MatrixXd& history, int iteration, const Eigen::VectorXd& initial_var) {
  if (iteration < 1) throw std::invalid_argument("iteration must be >= 1");
  if (iteration < kAdaptationStart) return initial_var.asDiagonal();
  const Eigen::Index d = history.cols();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  if (history.rows() >= 2) {
    const Eigen::RowVectorXd mean = history.colwise().mean();
    const Eigen::MatrixXd centred = history.rowwise() - mean;
    cov = centred.transpose() * centred / static_cast<double>(history.rows() - 1);
  }
  return adaptation_scale(d) * (cov + kAdaptationEpsilon * Eigen::MatrixXd::Identity(d, d));
}

AdaptiveCovariance::AdaptiveCovariance(Eigen::VectorXd initial_var)
    : initial_var_(std::move(initial_var)),
      mean_(Eigen::VectorXd::Zero(initial_var_.size())),
      m2_(Eigen::MatrixXd::Zero(initial_var_.size(), initial_var_.size())),
      kernel_(Eigen::MatrixXd(initial_var_.asDiagonal())) {}

void AdaptiveCovariance::record(const Eigen::VectorXd& state) {
  ++count_;
  const Eigen::VectorXd delta = state - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_.noalias() += delta * (state - mean_).transpose();
}

std::pair<const ProposalKernel&, bool> AdaptiveCovariance::kernel_for(int iteration) {
  if (iteration < kAdaptationStart || (iteration - kAdaptationStart) % kAdaptationInterval != 0) {
    return {kernel_, false};
  }
  const Eigen::Index d = initial_var_.size();
  Eigen::MatrixXd cov = count_ >= 2 ? Eigen::MatrixXd(m2_ / static_cast<double>(count_ - 1))
                                    : Eigen::MatrixXd::Zero(d, d);
  cov = 0.5 * (cov + cov.transpose());
  kernel_ = ProposalKernel(adaptation_scale(d) * (cov + kAdaptationEpsilon * Eigen::MatrixXd::Identity(d, d)));
  return {kernel_, true};
}

StepResult mh_step(const Eigen::VectorXd& state, double log_posterior, const ProposalKernel& kernel,
                   const LogTarget& target, Rng& rng) {
  if (!std::isfinite(log_posterior)) {
    throw std::runtime_error("current state has a non-finite log posterior (" + std::to_string(log_posterior) + ")");
  }
  Eigen::VectorXd proposal = kernel.draw(state, rng);
  if (!target.in_bounds(proposal)) return {state, log_posterior, false, true};
  const double candidate = target.log_density(proposal);
  const double log_u = std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  if (log_u < candidate - log_posterior) return {std::move(proposal), candidate, true, false};
  return {state, log_posterior, false, false};
}

double ChainResult::acceptance_rate() const {
  return log_posterior.empty() ? 0.0 : static_cast<double>(accepted) / static_cast<double>(log_posterior.size());
}

namespace {

using BeforeStep = std::function<void(int iteration, const Eigen::VectorXd& state, double& log_posterior)>;

ChainResult metropolis_loop(const LogTarget& target, Eigen::VectorXd state, double log_posterior,
                            const Eigen::VectorXd& initial_var, int n_iter, Rng& rng, const BeforeStep& before) {
  ChainResult result;
  result.samples.resize(n_iter, state.size());
  result.log_posterior.reserve(static_cast<std::size_t>(n_iter));
  AdaptiveCovariance adaptive(initial_var);
  adaptive.record(state);
  for (int t = 1; t <= n_iter; ++t) {
    if (before) before(t - 1, state, log_posterior);
    auto [kernel, changed] = adaptive.kernel_for(t);
    if (changed) {
      result.covariance_snapshots.push_back({t, kernel.covariance()});
      if (kernel.repaired()) {
        result.warnings.push_back("iteration " + std::to_string(t) +
                                  ": adapted covariance was not positive semi-definite; eigenvalues clipped");
      }
    }
    auto step = mh_step(state, log_posterior, kernel, target, rng);
    result.accepted += step.accepted ? 1 : 0;
    result.bound_rejections += step.out_of_bounds ? 1 : 0;
    state = std::move(step.state);
    log_posterior = step.log_posterior;
    result.samples.row(t - 1) = state.transpose();
    result.log_posterior.push_back(log_posterior);
    adaptive.record(state);
  }
  return result;
}

}  // namespace

ChainResult run_adaptive_metropolis(const LogTarget& target, const Eigen::VectorXd& initial,
                                    const Eigen::VectorXd& initial_var, int n_iter, Rng& rng) {
  if (!target.in_bounds(initial)) throw std::invalid_argument("initial state is outside the target bounds");
  return metropolis_loop(target, initial, target.log_density(initial), initial_var, n_iter, rng, {});
}

ChainResult run_chain(const ChainConfig& cfg, const EstimationInputs& inputs, int chain_index) {
  cfg.validate();
  Rng rng(cfg.seed + static_cast<std::uint64_t>(chain_index));
  PenetranceModel model(inputs.pedigrees, inputs.priors, inputs.baseline, inputs.noncarrier, cfg);
  const auto& layout = model.layout();
  auto init = initialize_state(model.pedigrees(), cfg, inputs.priors, model.baseline(), rng);

  std::optional<ImputationPlan> plan;
  if (cfg.age_imputation) {
    plan = build_plan(model.pedigrees());
    if (plan->empty()) plan.reset();
  }
  std::vector<ImputationRecord> log;
  auto impute_now = [&](int iteration, const Eigen::VectorXd& state, double& log_posterior) {
    const auto curves = layout.curves(state);
    if (!curves) throw std::runtime_error("imputation requested at a degenerate parameter state");
    const auto lookup = model.factor_lookup(*curves);
    const auto ages = impute(*plan, lookup, model.baseline(), model.pedigrees(), model.plans(),
                             model.genotype_model(), rng);
    apply_imputed(model.mutable_pedigrees(), ages);
    if (cfg.debug_imputation) {
      for (const auto& a : ages) {
        const auto& ped = model.pedigrees()[a.target.pedigree];
        log.push_back({ped.id, ped.members[a.target.member].id, iteration, a.target.kind, a.value});
      }
    }
    log_posterior = model.log_density(state);
  };

  double log_posterior = 0.0;
  if (plan) {
    impute_now(0, init.state, log_posterior);
  } else {
    log_posterior = model.log_density(init.state);
  }
  if (!std::isfinite(log_posterior)) {
    throw std::runtime_error("chain " + std::to_string(chain_index) +
                             ": starting state has zero posterior density; check pedigree evidence and priors");
  }

  BeforeStep before;
  if (plan) {
    before = [&](int iteration, const Eigen::VectorXd& state, double& lp) {
      if (iteration > 0 && iteration % cfg.imp_interval == 0) impute_now(iteration, state, lp);
    };
  }
  const Eigen::VectorXd var = Eigen::Map<const Eigen::VectorXd>(cfg.var.data(), layout.dim());
  auto result = metropolis_loop(model, init.state, log_posterior, var, cfg.n_iter_per_chain, rng, before);
  result.imputation_log = std::move(log);
  result.warnings.insert(result.warnings.begin(), init.warnings.begin(), init.warnings.end());
  return result;
}

PosteriorSamples run_chains(const ChainConfig& cfg, const EstimationInputs& inputs) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.n_chains);
  std::vector<std::optional<ChainResult>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = run_chain(cfg, inputs, static_cast<int>(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.ncores), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("chain " + std::to_string(i) + " failed: " + e.what());
    }
  }
  PosteriorSamples out{ParameterLayout(cfg.sex_specific).names(), {}, cfg};
  out.chains.reserve(n);
  for (auto& r : results) out.chains.push_back(std::move(*r));
  return out;
}

}  // namespace penetrance
