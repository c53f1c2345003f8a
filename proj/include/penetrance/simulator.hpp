#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "penetrance/imputation.hpp"
#include "penetrance/pedigree.hpp"
#include "penetrance/penetrance_curve.hpp"

namespace penetrance {

/// Family shape around the proband. Counts are Poisson with the given means,
/// capped at max_count.
struct FamilyStructure {
  double aunts_uncles_per_side = 2.4;  // siblings of each parent
  double siblings = 2.4;               // proband's siblings
  double children_per_couple = 2.0;    // for every partnered member of the proband's and parents' generation
  double partner_rate = 0.85;          // chance a non-founder relative has a partner in the pedigree
  int max_count = 8;
};

/// Ages at the time of ascertainment, in whole years.
struct AgeStructure {
  double proband_mean = 50.0;
  double proband_sd = 10.0;
  int proband_min = 20;
  int proband_max = 75;
  double generation_gap_mean = 28.0;
  double generation_gap_sd = 5.0;
  double sibling_spread_sd = 6.0;
  double partner_spread_sd = 4.0;
  double death_age_mean = 82.0;
  double death_age_sd = 10.0;
};

struct SimConfig {
  int n_probands = 130;
  std::uint64_t seed = 1;
  PenetranceCurves truth;
  double prev = 0.0001;
  BaselineTable baseline;
  int max_age = 94;
  FamilyStructure family;
  AgeStructure ages;
  double mask_age_dx = 0.0;       // chance an affected member's diagnosis age is withheld
  double mask_cur_age = 0.0;      // chance an unaffected member's censoring age is withheld
  double genotyping_rate = 0.1;   // chance a relative's genotype is reported; the proband's always is

  /// Throws std::invalid_argument.
  void validate() const;
};

/// Quartile-space truth used by the default study: distinct female and male
/// curves resembling a mismatch-repair gene and colorectal cancer.
QuantileParams mlh1_like_female();
QuantileParams mlh1_like_male();
PenetranceCurves mlh1_like_truth();

/// Defaults mirroring a 130-family study with mean family size near 35.
SimConfig mlh1_like_config();

struct MemberTruth {
  MemberId id = 0;
  int risk_alleles = 0;
  bool carrier = false;
  std::optional<int> onset_age;  // never within max_age when empty
  int censoring_age = 0;
  bool affected = false;
};

struct PedigreeTruth {
  std::string pedigree_id;
  std::vector<MemberTruth> members;
};

struct SimulatedStudy {
  std::vector<Pedigree> pedigrees;
  std::vector<PedigreeTruth> truth;
};

/// Onset age for one person, or empty when no onset by max_age.
std::optional<int> draw_onset(const WeibullPenetrance& curve, int max_age, Rng& rng);
std::optional<int> draw_onset(const BaselineTable& baseline, Sex sex, Rng& rng);

/// One family: grandparents, parents and their siblings (with partners and
/// children), the proband with siblings, partners and children. The proband is
/// a carrier; its ancestral lineage is redrawn until that holds.
std::pair<Pedigree, PedigreeTruth> simulate_pedigree(const SimConfig& cfg, const std::string& pedigree_id, Rng& rng);

/// Family i uses its own stream seeded from (seed, i).
SimulatedStudy simulate_study(const SimConfig& cfg);

nlohmann::json to_json(const SimConfig& cfg);
/// Overrides on top of mlh1_like_config(); see the README for keys.
SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json truth_to_json(const SimConfig& cfg, const SimulatedStudy& study);

}  // namespace penetrance
