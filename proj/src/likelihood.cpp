#include "penetrance/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <unordered_map>

namespace penetrance {

namespace {

// Genotype order: 0 = two risk alleles, 1 = heterozygous, 2 = no risk allele.
constexpr std::array<double, 3> kRiskAlleleTransmission = {1.0, 0.5, 0.0};

using Transmission = std::array<std::array<std::array<double, 3>, 3>, 3>;

constexpr Transmission make_transmission() {
  Transmission t{};
  for (int m = 0; m < 3; ++m) {
    for (int f = 0; f < 3; ++f) {
      const double tm = kRiskAlleleTransmission[m];
      const double tf = kRiskAlleleTransmission[f];
      t[m][f][0] = tm * tf;
      t[m][f][1] = tm * (1.0 - tf) + (1.0 - tm) * tf;
      t[m][f][2] = (1.0 - tm) * (1.0 - tf);
    }
  }
  return t;
}

constexpr Transmission kTransmission = make_transmission();

std::array<double, 3> founder_prior(const GenotypeModel& gm) {
  const double q = gm.allele_frequency;
  return {q * q, 2.0 * q * (1.0 - q), (1.0 - q) * (1.0 - q)};
}

double evidence(const PersonFactor& f, int genotype) { return genotype < 2 ? f.carrier : f.noncarrier; }

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Member index plus, for twins, the index of the group representative.
struct ResolvedPedigree {
  std::vector<std::optional<std::size_t>> mother, father;
  std::vector<std::size_t> twin_rep;  // self when not a twin
};

ResolvedPedigree resolve(const Pedigree& ped) {
  const std::size_t n = ped.members.size();
  std::unordered_map<MemberId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.emplace(ped.members[i].id, i).second) {
      throw UnsupportedPedigree("pedigree " + ped.id + ": duplicate member id " + std::to_string(ped.members[i].id));
    }
  }
  ResolvedPedigree r{std::vector<std::optional<std::size_t>>(n), std::vector<std::optional<std::size_t>>(n),
                     std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = ped.members[i];
    r.twin_rep[i] = i;
    if (m.mother_id.has_value() != m.father_id.has_value()) {
      throw UnsupportedPedigree("pedigree " + ped.id + ": member " + std::to_string(m.id) +
                                " has exactly one parent");
    }
    if (m.is_founder()) continue;
    auto mo = index.find(*m.mother_id);
    auto fa = index.find(*m.father_id);
    if (mo == index.end() || fa == index.end()) {
      throw UnsupportedPedigree("pedigree " + ped.id + ": member " + std::to_string(m.id) +
                                " references a missing parent");
    }
    r.mother[i] = mo->second;
    r.father[i] = fa->second;
  }
  for (const auto& group : ped.twin_groups) {
    std::optional<std::size_t> rep;
    for (MemberId id : group) {
      auto it = index.find(id);
      if (it == index.end()) {
        throw UnsupportedPedigree("pedigree " + ped.id + ": twin group names unknown member " + std::to_string(id));
      }
      const std::size_t i = it->second;
      if (!rep || i < *rep) rep = i;
    }
    if (!rep) continue;
    for (MemberId id : group) {
      const std::size_t i = index.at(id);
      if (r.mother[i] != r.mother[*rep] || r.father[i] != r.father[*rep] || !r.mother[i]) {
        throw UnsupportedPedigree("pedigree " + ped.id + ": twins must share both parents");
      }
      r.twin_rep[i] = *rep;
    }
  }
  return r;
}

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

double prev_to_allele_freq(double prev) {
  if (!(prev >= 0.0 && prev <= 1.0)) throw std::invalid_argument("carrier prevalence must lie in [0, 1]");
  return prev / (1.0 + std::sqrt(1.0 - prev));
}

GenotypeModel GenotypeModel::from_prevalence(double prev) { return GenotypeModel{prev_to_allele_freq(prev)}; }

double GenotypeModel::carrier_prevalence() const {
  const double r = 1.0 - allele_frequency;
  return 1.0 - r * r;
}

namespace {

PersonFactor phenotype_factor(const Individual& ind, const WeibullPenetrance& curve, const BaselineTable& nc,
                              Sex sex) {
  const int max_age = nc.max_age();
  switch (ind.is_affected) {
    case Affection::affected:
      if (ind.age_dx) {
        const int a = std::clamp(*ind.age_dx, 1, max_age);
        return {annual_probability(curve, a), nc.annual(sex, a)};
      }
      return {curve.gamma, nc.lifetime(sex)};
    case Affection::unaffected:
      if (ind.cur_age) {
        const int c = std::clamp(*ind.cur_age, 1, max_age);
        return {survival(curve, c), 1.0 - nc.cdf(sex, c)};
      }
      return {};
    case Affection::unknown:
      return {};
  }
  return {};
}

PersonFactor apply_genotype(PersonFactor f, Genotype g) {
  if (g == Genotype::carrier) f.noncarrier = 0.0;
  if (g == Genotype::noncarrier) f.carrier = 0.0;
  return f;
}

}  // namespace

PersonFactor person_factor(const Individual& ind, const PenetranceCurves& carrier, const BaselineTable& noncarrier) {
  PersonFactor f;
  if (ind.sex == Sex::unknown) {
    const auto a = phenotype_factor(ind, carrier.female, noncarrier, Sex::female);
    const auto b = phenotype_factor(ind, carrier.male, noncarrier, Sex::male);
    f = {0.5 * (a.carrier + b.carrier), 0.5 * (a.noncarrier + b.noncarrier)};
  } else {
    f = phenotype_factor(ind, carrier.for_sex(ind.sex), noncarrier, ind.sex);
  }
  return apply_genotype(f, ind.genotype);
}

FactorLookup::FactorLookup(const PenetranceCurves& carrier, const BaselineTable& noncarrier,
                           bool drop_proband_evidence)
    : curves_(carrier),
      noncarrier_(&noncarrier),
      drop_proband_evidence_(drop_proband_evidence),
      max_age_(noncarrier.max_age()) {
  auto build = [&](SexTable& t, Sex sex) {
    const auto& curve = carrier.for_sex(sex);
    const auto n = static_cast<std::size_t>(max_age_ + 1);
    t.carrier_onset.assign(n, 0.0);
    t.carrier_free.assign(n, 1.0);
    t.noncarrier_onset.assign(n, 0.0);
    t.noncarrier_free.assign(n, 1.0);
    double prev_cdf = cdf(curve, 0.0);
    for (int a = 1; a <= max_age_; ++a) {
      const double c = cdf(curve, a);
      t.carrier_onset[a] = std::max(0.0, c - prev_cdf);
      t.carrier_free[a] = 1.0 - c;
      t.noncarrier_onset[a] = noncarrier.annual(sex, a);
      t.noncarrier_free[a] = 1.0 - noncarrier.cdf(sex, a);
      prev_cdf = c;
    }
    t.carrier_ever = curve.gamma;
    t.noncarrier_ever = noncarrier.lifetime(sex);
  };
  build(female_, Sex::female);
  build(male_, Sex::male);
}

PersonFactor FactorLookup::for_sex(const SexTable& t, const Individual& ind) const {
  switch (ind.is_affected) {
    case Affection::affected:
      if (ind.age_dx) {
        const auto a = static_cast<std::size_t>(std::clamp(*ind.age_dx, 1, max_age_));
        return {t.carrier_onset[a], t.noncarrier_onset[a]};
      }
      return {t.carrier_ever, t.noncarrier_ever};
    case Affection::unaffected:
      if (ind.cur_age) {
        const auto c = static_cast<std::size_t>(std::clamp(*ind.cur_age, 1, max_age_));
        return {t.carrier_free[c], t.noncarrier_free[c]};
      }
      return {};
    case Affection::unknown:
      return {};
  }
  return {};
}

PersonFactor FactorLookup::operator()(const Individual& ind) const {
  if (drop_proband_evidence_ && ind.is_proband) return {};
  PersonFactor f;
  if (ind.sex == Sex::unknown) {
    const auto a = for_sex(female_, ind);
    const auto b = for_sex(male_, ind);
    f = {0.5 * (a.carrier + b.carrier), 0.5 * (a.noncarrier + b.noncarrier)};
  } else {
    f = for_sex(ind.sex == Sex::male ? male_ : female_, ind);
  }
  return apply_genotype(f, ind.genotype);
}

void FactorLookup::fill(const Pedigree& ped, PersonFactors& out) const {
  out.resize(ped.members.size());
  for (std::size_t i = 0; i < ped.members.size(); ++i) out[i] = (*this)(ped.members[i]);
}

PersonFactors FactorLookup::factors(const Pedigree& ped) const {
  PersonFactors out;
  fill(ped, out);
  return out;
}

PeelingPlan::PeelingPlan(const Pedigree& ped) : member_count_(ped.members.size()) {
  const auto resolved = resolve(ped);
  const std::size_t n = member_count_;

  std::vector<std::size_t> var_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (resolved.twin_rep[i] != i) continue;
    var_of[i] = variables_.size();
    variables_.push_back({{}, !resolved.mother[i].has_value()});
  }
  for (std::size_t i = 0; i < n; ++i) {
    var_of[i] = var_of[resolved.twin_rep[i]];
    variables_[var_of[i]].members.push_back(i);
  }

  std::map<std::pair<std::size_t, std::size_t>, std::size_t> mating_of;
  for (std::size_t i = 0; i < n; ++i) {
    if (!resolved.mother[i] || resolved.twin_rep[i] != i) continue;
    const std::pair key{var_of[*resolved.mother[i]], var_of[*resolved.father[i]]};
    auto [it, inserted] = mating_of.try_emplace(key, matings_.size());
    if (inserted) matings_.push_back({key.first, key.second, {}});
    matings_[it->second].children.push_back(var_of[i]);
  }

  // Nodes: variables [0, V), matings [V, V + M).
  const std::size_t V = variables_.size();
  const std::size_t M = matings_.size();
  std::vector<std::vector<std::size_t>> adjacent(V + M);
  DisjointSets sets(V + M);
  auto link = [&](std::size_t var, std::size_t mating) {
    if (!sets.unite(var, V + mating)) {
      throw UnsupportedPedigree("pedigree " + ped.id +
                                " contains a marriage or consanguinity loop; looped pedigrees are not supported");
    }
    adjacent[var].push_back(V + mating);
    adjacent[V + mating].push_back(var);
  };
  for (std::size_t m = 0; m < M; ++m) {
    link(matings_[m].mother, m);
    link(matings_[m].father, m);
    for (std::size_t c : matings_[m].children) link(c, m);
  }

  auto role_in = [&](std::size_t var, std::size_t mating) {
    const auto& mt = matings_[mating];
    if (mt.mother == var) return Role::mother;
    if (mt.father == var) return Role::father;
    return Role::child;
  };

  std::vector<bool> seen(V + M, false);
  std::vector<std::size_t> tree_parent(V + M, SIZE_MAX);
  for (std::size_t root = 0; root < V; ++root) {
    if (seen[root]) continue;
    std::vector<std::size_t> order;
    std::queue<std::size_t> frontier;
    frontier.push(root);
    seen[root] = true;
    while (!frontier.empty()) {
      const std::size_t node = frontier.front();
      frontier.pop();
      order.push_back(node);
      for (std::size_t next : adjacent[node]) {
        if (seen[next]) continue;
        seen[next] = true;
        tree_parent[next] = node;
        frontier.push(next);
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t node = *it;
      Step step;
      step.is_mating = node >= V;
      step.index = step.is_mating ? node - V : node;
      for (std::size_t next : adjacent[node]) {
        if (next == tree_parent[node]) continue;
        step.subtree.push_back(next >= V ? next - V : next);
      }
      if (tree_parent[node] != SIZE_MAX) {
        const std::size_t p = tree_parent[node];
        step.parent = p >= V ? p - V : p;
        step.role = step.is_mating ? role_in(step.parent, step.index) : Role::child;
      }
      schedule_.push_back(std::move(step));
    }
  }
}

double PeelingPlan::loglik(std::span<const PersonFactor> factors, const GenotypeModel& gm) const {
  if (factors.size() != member_count_) throw std::invalid_argument("factor count does not match pedigree size");
  const auto prior = founder_prior(gm);
  std::vector<std::array<double, 3>> var_msg(variables_.size());
  std::vector<std::array<double, 3>> mating_msg(matings_.size());
  double log_total = 0.0;

  auto normalise = [&](std::array<double, 3>& v) {
    const double s = v[0] + v[1] + v[2];
    if (!(s > 0.0)) return false;
    v[0] /= s;
    v[1] /= s;
    v[2] /= s;
    log_total += std::log(s);
    return true;
  };

  for (const Step& step : schedule_) {
    if (!step.is_mating) {
      const Variable& var = variables_[step.index];
      std::array<double, 3> belief{1.0, 1.0, 1.0};
      for (std::size_t g = 0; g < 3; ++g) {
        for (std::size_t m : var.members) belief[g] *= evidence(factors[m], static_cast<int>(g));
        if (var.founder) belief[g] *= prior[g];
        for (std::size_t mt : step.subtree) belief[g] *= mating_msg[mt][g];
      }
      if (step.role == Role::none) {
        const double s = belief[0] + belief[1] + belief[2];
        if (!(s > 0.0)) return kNegInf;
        log_total += std::log(s);
      } else {
        if (!normalise(belief)) return kNegInf;
        var_msg[step.index] = belief;
      }
      continue;
    }

    const Mating& mt = matings_[step.index];
    // Joint weight over parental genotypes from the children below this mating.
    double below[3][3];
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        double w = 1.0;
        for (std::size_t c : step.subtree) {
          if (c == mt.mother || c == mt.father) continue;
          const auto& msg = var_msg[c];
          const auto& t = kTransmission[a][b];
          w *= t[0] * msg[0] + t[1] * msg[1] + t[2] * msg[2];
        }
        below[a][b] = w;
      }
    }
    std::array<double, 3> out{0.0, 0.0, 0.0};
    switch (step.role) {
      case Role::child: {
        const auto& mo = var_msg[mt.mother];
        const auto& fa = var_msg[mt.father];
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) {
            const double w = mo[a] * fa[b] * below[a][b];
            for (int g = 0; g < 3; ++g) out[g] += w * kTransmission[a][b][g];
          }
        }
        break;
      }
      case Role::mother: {
        const auto& fa = var_msg[mt.father];
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) out[a] += fa[b] * below[a][b];
        }
        break;
      }
      case Role::father: {
        const auto& mo = var_msg[mt.mother];
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) out[b] += mo[a] * below[a][b];
        }
        break;
      }
      case Role::none:
        break;
    }
    if (!normalise(out)) return kNegInf;
    mating_msg[step.index] = out;
  }
  return log_total;
}

double PeelingPlan::carrier_posterior(std::span<const PersonFactor> factors, const GenotypeModel& gm,
                                      std::size_t member_index) const {
  if (member_index >= member_count_) throw std::out_of_range("member index out of range");
  const double total = loglik(factors, gm);
  if (total == kNegInf) throw std::domain_error("pedigree evidence has zero likelihood");
  std::vector<PersonFactor> clamped(factors.begin(), factors.end());
  clamped[member_index].noncarrier = 0.0;
  const double carrier = loglik(clamped, gm);
  if (carrier == kNegInf) return 0.0;
  return std::clamp(std::exp(carrier - total), 0.0, 1.0);
}

double pedigree_loglik(const Pedigree& ped, std::span<const PersonFactor> factors, const GenotypeModel& gm) {
  return PeelingPlan(ped).loglik(factors, gm);
}

double carrier_posterior(const Pedigree& ped, std::span<const PersonFactor> factors, const GenotypeModel& gm,
                         MemberId member) {
  const auto idx = ped.index_of(member);
  if (!idx) throw std::out_of_range("member " + std::to_string(member) + " not in pedigree " + ped.id);
  return PeelingPlan(ped).carrier_posterior(factors, gm, *idx);
}

double brute_force_loglik(const Pedigree& ped, std::span<const PersonFactor> factors, const GenotypeModel& gm) {
  const std::size_t n = ped.members.size();
  if (n > 12) throw std::invalid_argument("brute-force likelihood is limited to 12 members");
  if (factors.size() != n) throw std::invalid_argument("factor count does not match pedigree size");
  const auto r = resolve(ped);
  const auto prior = founder_prior(gm);

  std::vector<int> g(n, 0);
  double total = 0.0;
  while (true) {
    bool consistent = true;
    for (std::size_t i = 0; i < n && consistent; ++i) consistent = g[i] == g[r.twin_rep[i]];
    if (consistent) {
      double p = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        p *= evidence(factors[i], g[i]);
        if (r.twin_rep[i] != i) continue;
        p *= r.mother[i] ? kTransmission[g[*r.mother[i]]][g[*r.father[i]]][g[i]] : prior[g[i]];
      }
      total += p;
    }
    std::size_t k = 0;
    while (k < n && ++g[k] == 3) g[k++] = 0;
    if (k == n) break;
  }
  return total > 0.0 ? std::log(total) : kNegInf;
}

}  // namespace penetrance
