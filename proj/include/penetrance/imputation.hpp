#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "penetrance/likelihood.hpp"
#include "penetrance/pedigree.hpp"
#include "penetrance/penetrance_curve.hpp"

namespace penetrance {

using Rng = std::mt19937_64;

struct ImputationTarget {
  enum class Kind : std::uint8_t { diagnosis_age, censoring_age };
  std::size_t pedigree = 0;
  std::size_t member = 0;
  Kind kind = Kind::diagnosis_age;

  bool operator==(const ImputationTarget&) const = default;
};

/// Members whose ages are filled in during sampling, plus the observed
/// censoring ages of unaffected members used to draw missing ones.
struct ImputationPlan {
  std::vector<ImputationTarget> targets;
  std::vector<int> female_censoring_ages;
  std::vector<int> male_censoring_ages;
  std::vector<int> pooled_censoring_ages;

  bool empty() const { return targets.empty(); }
  /// Falls back to the pooled ages when the sex stratum is empty.
  const std::vector<int>& censoring_ages(Sex sex) const;
};

/// Throws std::runtime_error if censoring ages must be imputed but no
/// unaffected member has an observed one.
ImputationPlan build_plan(std::span<const Pedigree> data);

struct ImputedAge {
  ImputationTarget target;
  int value = 0;
};

/// Draw from the carrier curve's onset distribution restricted to 1..max_age,
/// keeping the result <= upper: up to 50 redraws, then the truncated
/// distribution, then uniform on 1..upper if the curve has no mass there.
int draw_carrier_onset(const WeibullPenetrance& curve, int upper, int max_age, Rng& rng);
int draw_baseline_onset(const BaselineTable& baseline, Sex sex, int upper, Rng& rng);

/// One imputation event. Affected targets are treated as carriers with
/// probability equal to their carrier posterior (computed with their own age
/// evidence removed) and get an onset age from the carrier curve, otherwise from
/// the baseline. Unaffected targets get a censoring age drawn from the observed
/// ages of their sex.
std::vector<ImputedAge> impute(const ImputationPlan& plan, const FactorLookup& factors,
                               const BaselineTable& baseline, std::span<const Pedigree> pedigrees,
                               std::span<const PeelingPlan> plans, const GenotypeModel& gm, Rng& rng);

void apply_imputed(std::span<Pedigree> pedigrees, std::span<const ImputedAge> ages);

struct ImputationRecord {
  std::string pedigree_id;
  MemberId member = 0;
  int iteration = 0;
  ImputationTarget::Kind kind = ImputationTarget::Kind::diagnosis_age;
  int value = 0;
};

}  // namespace penetrance
