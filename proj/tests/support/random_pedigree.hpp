#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "penetrance/likelihood.hpp"
#include "penetrance/pedigree.hpp"

namespace penetrance::testing {

// Loop-free random family: every new mating pairs an existing member with a
// fresh founder, so the mating graph stays a tree.
inline Pedigree random_pedigree(std::mt19937_64& rng, int max_members, double twin_rate = 0.3) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Pedigree ped;
  ped.id = "r";
  auto add = [&](Sex sex, std::optional<MemberId> mother, std::optional<MemberId> father) {
    Individual ind;
    ind.id = static_cast<MemberId>(ped.members.size() + 1);
    ind.pedigree_id = ped.id;
    ind.sex = sex;
    ind.mother_id = mother;
    ind.father_id = father;
    ped.members.push_back(ind);
    return ind.id;
  };
  struct Couple {
    MemberId mother, father;
    std::vector<MemberId> children;
  };
  std::vector<Couple> couples;
  const MemberId m0 = add(Sex::female, {}, {});
  const MemberId f0 = add(Sex::male, {}, {});
  couples.push_back({m0, f0, {}});
  const int target = std::uniform_int_distribution<int>(3, max_members)(rng);
  while (static_cast<int>(ped.members.size()) < target) {
    const bool new_couple = unit(rng) < 0.3 && static_cast<int>(ped.members.size()) + 2 <= target;
    if (new_couple) {
      std::vector<MemberId> nonfounders;
      for (const auto& m : ped.members) {
        if (!m.is_founder()) nonfounders.push_back(m.id);
      }
      if (!nonfounders.empty()) {
        const MemberId who = nonfounders[std::uniform_int_distribution<std::size_t>(0, nonfounders.size() - 1)(rng)];
        const Sex sex = ped.members[static_cast<std::size_t>(who - 1)].sex;
        const MemberId spouse = add(sex == Sex::male ? Sex::female : Sex::male, {}, {});
        couples.push_back(sex == Sex::male ? Couple{spouse, who, {}} : Couple{who, spouse, {}});
        continue;
      }
    }
    auto& c = couples[std::uniform_int_distribution<std::size_t>(0, couples.size() - 1)(rng)];
    const Sex sex = unit(rng) < 0.5 ? Sex::male : Sex::female;
    c.children.push_back(add(sex, c.mother, c.father));
  }
  // Twin groups among full siblings.
  for (auto& c : couples) {
    if (c.children.size() >= 2 && unit(rng) < twin_rate) {
      std::vector<MemberId> kids = c.children;
      std::shuffle(kids.begin(), kids.end(), rng);
      const auto size = std::uniform_int_distribution<std::size_t>(2, std::min<std::size_t>(3, kids.size()))(rng);
      ped.twin_groups.emplace_back(kids.begin(), kids.begin() + static_cast<long>(size));
    }
  }
  ped.members.front().is_proband = true;
  return ped;
}

// Arbitrary positive evidence factors; an observed genotype zeroes one side.
inline PersonFactors random_factors(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PersonFactors f(n);
  for (auto& x : f) {
    x.carrier = 0.01 + unit(rng);
    x.noncarrier = 0.01 + unit(rng);
    const double r = unit(rng);
    if (r < 0.1) x.carrier = 0.0;
    else if (r < 0.2) x.noncarrier = 0.0;
  }
  return f;
}

// Independent likelihood oracle over inheritance vectors: founders carry two
// ordered alleles, non-founders pick one allele from each parent. Twins copy
// the inheritance of the first member of their group.
inline double inheritance_vector_likelihood(const Pedigree& ped, const PersonFactors& factors, double q) {
  const std::size_t n = ped.members.size();
  std::vector<int> copy_of(n, -1);
  for (const auto& g : ped.twin_groups) {
    const auto first = *ped.index_of(g.front());
    for (std::size_t k = 1; k < g.size(); ++k) copy_of[*ped.index_of(g[k])] = static_cast<int>(first);
  }
  std::vector<std::size_t> free_members;
  for (std::size_t i = 0; i < n; ++i) {
    if (copy_of[i] < 0) free_members.push_back(i);
  }
  const std::size_t states = std::size_t{1} << (2 * free_members.size());
  double total = 0.0;
  std::vector<int> bits(n), a1(n), a2(n);
  std::vector<bool> done(n);
  for (std::size_t s = 0; s < states; ++s) {
    for (std::size_t k = 0; k < free_members.size(); ++k) bits[free_members[k]] = static_cast<int>((s >> (2 * k)) & 3);
    for (std::size_t i = 0; i < n; ++i) {
      if (copy_of[i] >= 0) bits[i] = bits[static_cast<std::size_t>(copy_of[i])];
    }
    double w = 1.0;
    std::fill(done.begin(), done.end(), false);
    // Resolve alleles in an order where parents come first.
    std::size_t resolved = 0;
    while (resolved < n) {
      for (std::size_t i = 0; i < n; ++i) {
        if (done[i]) continue;
        const auto& m = ped.members[i];
        if (m.is_founder()) {
          a1[i] = bits[i] & 1;
          a2[i] = (bits[i] >> 1) & 1;
          w *= (a1[i] ? q : 1.0 - q) * (a2[i] ? q : 1.0 - q);
        } else {
          const auto mi = *ped.index_of(*m.mother_id), fi = *ped.index_of(*m.father_id);
          if (!done[mi] || !done[fi]) continue;
          a1[i] = (bits[i] & 1) ? a2[mi] : a1[mi];
          a2[i] = (bits[i] & 2) ? a2[fi] : a1[fi];
          if (copy_of[i] < 0) w *= 0.25;
        }
        done[i] = true;
        ++resolved;
      }
    }
    // Twins must reproduce the same genotype; with copied bits this holds automatically.
    for (std::size_t i = 0; i < n; ++i) {
      const bool carrier = a1[i] + a2[i] >= 1;
      w *= carrier ? factors[i].carrier : factors[i].noncarrier;
    }
    total += w;
  }
  return total;
}

}  // namespace penetrance::testing
