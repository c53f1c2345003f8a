#include "penetrance/imputation.hpp"

#include <algorithm>
#include <stdexcept>

namespace penetrance {

namespace {

constexpr int kRedrawAttempts = 50;

// Inverse-CDF draw of an age in 1..weights.size(); -1 when the weights have no mass.
int draw_from_weights(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return -1;
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i) + 1;
  }
  // Rounding at the top end; return the last age with mass.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return static_cast<int>(i) + 1;
  }
  return -1;
}

int draw_bounded(const std::vector<double>& weights, int upper, Rng& rng) {
  upper = std::clamp(upper, 1, static_cast<int>(weights.size()));
  for (int attempt = 0; attempt < kRedrawAttempts; ++attempt) {
    const int age = draw_from_weights(weights, rng);
    if (age < 0) break;
    if (age <= upper) return age;
  }
  std::vector<double> truncated(weights.begin(), weights.begin() + upper);
  const int age = draw_from_weights(truncated, rng);
  if (age > 0) return age;
  return std::uniform_int_distribution<int>(1, upper)(rng);
}

Sex resolve_sex(Sex sex, Rng& rng) {
  if (sex != Sex::unknown) return sex;
  return std::bernoulli_distribution(0.5)(rng) ? Sex::male : Sex::female;
}

}  // namespace

const std::vector<int>& ImputationPlan::censoring_ages(Sex sex) const {
  const auto& stratum = sex == Sex::female ? female_censoring_ages
                        : sex == Sex::male ? male_censoring_ages
                                           : pooled_censoring_ages;
  return stratum.empty() ? pooled_censoring_ages : stratum;
}

ImputationPlan build_plan(std::span<const Pedigree> data) {
  ImputationPlan plan;
  bool needs_censoring = false;
  for (std::size_t p = 0; p < data.size(); ++p) {
    const auto& members = data[p].members;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& m = members[i];
      if (m.is_affected == Affection::affected && !m.age_dx) {
        plan.targets.push_back({p, i, ImputationTarget::Kind::diagnosis_age});
      } else if (m.is_affected == Affection::unaffected && !m.cur_age) {
        plan.targets.push_back({p, i, ImputationTarget::Kind::censoring_age});
        needs_censoring = true;
      } else if (m.is_affected == Affection::unaffected && m.cur_age) {
        plan.pooled_censoring_ages.push_back(*m.cur_age);
        if (m.sex == Sex::female) plan.female_censoring_ages.push_back(*m.cur_age);
        if (m.sex == Sex::male) plan.male_censoring_ages.push_back(*m.cur_age);
      }
    }
  }
  if (needs_censoring && plan.pooled_censoring_ages.empty()) {
    throw std::runtime_error(
        "age imputation: censoring ages are missing but no unaffected member has an observed censoring age");
  }
  return plan;
}

int draw_carrier_onset(const WeibullPenetrance& curve, int upper, int max_age, Rng& rng) {
  std::vector<double> weights(static_cast<std::size_t>(max_age));
  for (int a = 1; a <= max_age; ++a) weights[static_cast<std::size_t>(a - 1)] = annual_probability(curve, a);
  return draw_bounded(weights, upper, rng);
}

int draw_baseline_onset(const BaselineTable& baseline, Sex sex, int upper, Rng& rng) {
  std::vector<double> weights(static_cast<std::size_t>(baseline.max_age()));
  for (int a = 1; a <= baseline.max_age(); ++a) weights[static_cast<std::size_t>(a - 1)] = baseline.annual(sex, a);
  return draw_bounded(weights, upper, rng);
}

std::vector<ImputedAge> impute(const ImputationPlan& plan, const FactorLookup& factors,
                               const BaselineTable& baseline, std::span<const Pedigree> pedigrees,
                               std::span<const PeelingPlan> plans, const GenotypeModel& gm, Rng& rng) {
  std::vector<ImputedAge> out;
  out.reserve(plan.targets.size());
  PersonFactors buffer;
  const int max_age = factors.max_age();
  for (const auto& target : plan.targets) {
    const Pedigree& ped = pedigrees[target.pedigree];
    const Individual& ind = ped.members[target.member];
    if (target.kind == ImputationTarget::Kind::censoring_age) {
      const auto& ages = plan.censoring_ages(ind.sex);
      const auto pick = std::uniform_int_distribution<std::size_t>(0, ages.size() - 1)(rng);
      out.push_back({target, std::clamp(ages[pick], 1, max_age)});
      continue;
    }
    factors.fill(ped, buffer);
    Individual without_age = ind;
    without_age.age_dx.reset();
    buffer[target.member] = factors(without_age);
    const double p = plans[target.pedigree].carrier_posterior(buffer, gm, target.member);
    const int upper = std::min(ind.cur_age.value_or(max_age), max_age);
    const bool carrier = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
    const Sex sex = resolve_sex(ind.sex, rng);
    const int age = carrier ? draw_carrier_onset(factors.curves().for_sex(sex), upper, max_age, rng)
                            : draw_baseline_onset(baseline, sex, upper, rng);
    out.push_back({target, age});
  }
  return out;
}

void apply_imputed(std::span<Pedigree> pedigrees, std::span<const ImputedAge> ages) {
  for (const auto& a : ages) {
    Individual& ind = pedigrees[a.target.pedigree].members[a.target.member];
    if (a.target.kind == ImputationTarget::Kind::diagnosis_age) {
      ind.age_dx = a.value;
    } else {
      ind.cur_age = a.value;
    }
  }
}

}  // namespace penetrance
