#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "penetrance/pedigree.hpp"
#include "penetrance/penetrance_curve.hpp"

namespace penetrance {

/// Single biallelic autosomal locus under a dominant carrier model.
struct GenotypeModel {
  double allele_frequency = 0.0;

  static GenotypeModel from_prevalence(double prev);
  /// Founder probability of carrying at least one risk allele.
  double carrier_prevalence() const;
};

/// q = 1 - sqrt(1 - prev), the risk-allele frequency giving carrier prevalence prev.
double prev_to_allele_freq(double prev);

/// Likelihood of one person's phenotype evidence given carrier / noncarrier status.
struct PersonFactor {
  double carrier = 1.0;
  double noncarrier = 1.0;

  bool operator==(const PersonFactor&) const = default;
};

using PersonFactors = std::vector<PersonFactor>;

class UnsupportedPedigree : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factor for one individual from the carrier curves and the noncarrier risk
/// table (the population baseline unless a separate noncarrier table is used).
/// Unknown sex averages the female and male factors.
PersonFactor person_factor(const Individual& ind, const PenetranceCurves& carrier,
                           const BaselineTable& noncarrier);

/// Per-age lookup of person factors for one set of carrier curves. Equivalent
/// to person_factor, built once per parameter proposal.
class FactorLookup {
 public:
  FactorLookup(const PenetranceCurves& carrier, const BaselineTable& noncarrier, bool drop_proband_evidence = false);

  PersonFactor operator()(const Individual& ind) const;
  void fill(const Pedigree& ped, PersonFactors& out) const;
  PersonFactors factors(const Pedigree& ped) const;

  const PenetranceCurves& curves() const { return curves_; }
  const BaselineTable& noncarrier() const { return *noncarrier_; }
  int max_age() const { return max_age_; }

 private:
  struct SexTable {
    std::vector<double> carrier_onset, carrier_free, noncarrier_onset, noncarrier_free;
    double carrier_ever = 0.0, noncarrier_ever = 0.0;
  };
  PersonFactor for_sex(const SexTable& t, const Individual& ind) const;

  PenetranceCurves curves_;
  const BaselineTable* noncarrier_;
  bool drop_proband_evidence_;
  int max_age_;
  SexTable female_, male_;
};

/// Precomputed peeling schedule for one loop-free pedigree. Twins collapse to a
/// single genotype variable; each mating is a node joining both parents and
/// their children, and messages are passed up the resulting tree.
class PeelingPlan {
 public:
  /// Throws UnsupportedPedigree for loops and structural problems.
  explicit PeelingPlan(const Pedigree& ped);

  double loglik(std::span<const PersonFactor> factors, const GenotypeModel& gm) const;
  /// P(member is carrier | evidence). Throws std::domain_error if the evidence has zero likelihood.
  double carrier_posterior(std::span<const PersonFactor> factors, const GenotypeModel& gm,
                           std::size_t member_index) const;
  std::size_t member_count() const { return member_count_; }

 private:
  struct Variable {
    std::vector<std::size_t> members;
    bool founder = true;
  };
  struct Mating {
    std::size_t mother = 0, father = 0;
    std::vector<std::size_t> children;
  };
  enum class Role : std::uint8_t { none, mother, father, child };
  struct Step {
    bool is_mating = false;
    std::size_t index = 0;
    std::size_t parent = 0;  // tree parent, a mating index for variables, a variable index for matings
    Role role = Role::none;  // role of the tree parent variable within this mating
    std::vector<std::size_t> subtree;  // tree children: matings for a variable, variables for a mating
  };

  std::size_t member_count_ = 0;
  std::vector<Variable> variables_;
  std::vector<Mating> matings_;
  std::vector<Step> schedule_;  // reverse BFS order per component; roots have role none
};

double pedigree_loglik(const Pedigree& ped, std::span<const PersonFactor> factors, const GenotypeModel& gm);

/// Exhaustive enumeration over three-genotype assignments; at most 12 members.
double brute_force_loglik(const Pedigree& ped, std::span<const PersonFactor> factors, const GenotypeModel& gm);

double carrier_posterior(const Pedigree& ped, std::span<const PersonFactor> factors, const GenotypeModel& gm,
                         MemberId member);

}  // namespace penetrance
