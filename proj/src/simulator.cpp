#include "penetrance/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "penetrance/likelihood.hpp"

namespace penetrance {

namespace {

constexpr long kMaxLineageDraws = 100'000'000;

struct Person {
  MemberId id = 0;
  Sex sex = Sex::female;
  int mother = -1;  // index into the family vector
  int father = -1;
  int alleles = 0;
  int age_now = 0;
  bool proband = false;
};

class FamilyBuilder {
 public:
  FamilyBuilder(const SimConfig& cfg, Rng& rng)
      : cfg_(cfg), rng_(rng), q_(prev_to_allele_freq(cfg.prev)) {}

  std::vector<Person> build();

 private:
  int add(Sex sex, int age, int mother, int father, int alleles) {
    people_.push_back({static_cast<MemberId>(people_.size() + 1), sex, mother, father, alleles, age, false});
    return static_cast<int>(people_.size()) - 1;
  }
  int founder_alleles() {
    std::bernoulli_distribution risk(q_);
    return int(risk(rng_)) + int(risk(rng_));
  }
  int transmit(int mother_alleles, int father_alleles) {
    std::bernoulli_distribution from_mother(mother_alleles / 2.0), from_father(father_alleles / 2.0);
    return int(from_mother(rng_)) + int(from_father(rng_));
  }
  int count(double mean) {
    if (mean <= 0.0) return 0;
    return std::min(std::poisson_distribution<int>(mean)(rng_), cfg_.family.max_count);
  }
  int normal_age(double mean, double sd) { return static_cast<int>(std::lround(std::normal_distribution<double>(mean, sd)(rng_))); }
  int gap() { return std::max(16, normal_age(cfg_.ages.generation_gap_mean, cfg_.ages.generation_gap_sd)); }
  Sex random_sex() { return std::bernoulli_distribution(0.5)(rng_) ? Sex::male : Sex::female; }

  // Partner and children for a relative whose parents are in the pedigree.
  void add_household(int person) {
    if (!std::bernoulli_distribution(cfg_.family.partner_rate)(rng_)) return;
    const Person self = people_[static_cast<std::size_t>(person)];
    const Sex partner_sex = self.sex == Sex::male ? Sex::female : Sex::male;
    const int partner_age = std::max(16, self.age_now + normal_age(0.0, cfg_.ages.partner_spread_sd));
    const int partner = add(partner_sex, partner_age, -1, -1, founder_alleles());
    const int mother = self.sex == Sex::female ? person : partner;
    const int father = self.sex == Sex::female ? partner : person;
    const int n = count(cfg_.family.children_per_couple);
    for (int c = 0; c < n; ++c) {
      const int age = people_[static_cast<std::size_t>(mother)].age_now - gap() + normal_age(0.0, 2.0);
      if (age < 1) continue;
      add(random_sex(), age, mother, father,
          transmit(people_[static_cast<std::size_t>(mother)].alleles, people_[static_cast<std::size_t>(father)].alleles));
    }
  }

  void add_siblings(int of, int n) {
    const Person self = people_[static_cast<std::size_t>(of)];
    const auto& mother = people_[static_cast<std::size_t>(self.mother)];
    const auto& father = people_[static_cast<std::size_t>(self.father)];
    const int mother_alleles = mother.alleles, father_alleles = father.alleles;
    const int mother_age = mother.age_now;
    for (int i = 0; i < n; ++i) {
      int age = self.age_now + normal_age(0.0, cfg_.ages.sibling_spread_sd);
      age = std::clamp(age, 1, mother_age - 14);
      const int sib = add(random_sex(), age, self.mother, self.father, transmit(mother_alleles, father_alleles));
      add_household(sib);
    }
  }

  const SimConfig& cfg_;
  Rng& rng_;
  double q_;
  std::vector<Person> people_;
};

std::vector<Person> FamilyBuilder::build() {
  // Ancestral lineage of the proband, redrawn until the proband carries.
  int gf_p = 0, gm_p = 0, gf_m = 0, gm_m = 0, father = 0, mother = 0, proband = 0;
  long draws = 0;
  do {
    if (++draws > kMaxLineageDraws) throw std::runtime_error("simulator: could not draw a carrier proband");
    gf_p = founder_alleles();
    gm_p = founder_alleles();
    gf_m = founder_alleles();
    gm_m = founder_alleles();
    father = transmit(gm_p, gf_p);
    mother = transmit(gm_m, gf_m);
    proband = transmit(mother, father);
  } while (proband == 0);

  const auto& a = cfg_.ages;
  const int proband_age = std::clamp(normal_age(a.proband_mean, a.proband_sd), a.proband_min, a.proband_max);
  const int mother_age = proband_age + gap();
  const int father_age = mother_age + normal_age(2.0, a.partner_spread_sd);
  const int pgm_age = father_age + gap(), pgf_age = pgm_age + normal_age(2.0, a.partner_spread_sd);
  const int mgm_age = mother_age + gap(), mgf_age = mgm_age + normal_age(2.0, a.partner_spread_sd);

  people_.clear();
  const int i_pgf = add(Sex::male, pgf_age, -1, -1, gf_p);
  const int i_pgm = add(Sex::female, pgm_age, -1, -1, gm_p);
  const int i_mgf = add(Sex::male, mgf_age, -1, -1, gf_m);
  const int i_mgm = add(Sex::female, mgm_age, -1, -1, gm_m);
  const int i_father = add(Sex::male, father_age, i_pgm, i_pgf, father);
  const int i_mother = add(Sex::female, mother_age, i_mgm, i_mgf, mother);
  const int i_proband = add(random_sex(), proband_age, i_mother, i_father, proband);
  people_[static_cast<std::size_t>(i_proband)].proband = true;

  add_siblings(i_father, count(cfg_.family.aunts_uncles_per_side));
  add_siblings(i_mother, count(cfg_.family.aunts_uncles_per_side));
  add_siblings(i_proband, count(cfg_.family.siblings));
  add_household(i_proband);
  return std::move(people_);
}

}  // namespace

void SimConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("simulation config: ") + what);
  };
  require(n_probands >= 0, "n_probands must be >= 0");
  require(prev > 0.0 && prev <= 1.0, "prev must lie in (0, 1]");
  require(max_age >= 2, "max_age must be >= 2");
  require(baseline.max_age() >= max_age, "baseline table must cover ages 1..max_age");
  for (double p : {mask_age_dx, mask_cur_age, genotyping_rate, family.partner_rate}) {
    require(p >= 0.0 && p <= 1.0, "rates must lie in [0, 1]");
  }
  for (const auto* c : {&truth.female, &truth.male}) {
    require(c->gamma >= 0.0 && c->gamma <= 1.0, "asymptote must lie in [0, 1]");
    require(c->alpha > 0.0 && c->beta > 0.0 && c->delta >= 0.0, "Weibull scale and shape must be positive");
  }
  require(family.aunts_uncles_per_side >= 0.0 && family.siblings >= 0.0 && family.children_per_couple >= 0.0,
          "family counts must be >= 0");
  require(ages.proband_min >= 1 && ages.proband_min <= ages.proband_max, "proband age range is empty");
}

QuantileParams mlh1_like_female() { return {0.65, 20.0, 56.0, 46.0}; }
QuantileParams mlh1_like_male() { return {0.75, 18.0, 53.0, 44.0}; }

PenetranceCurves mlh1_like_truth() {
  return {*quantiles_to_weibull(mlh1_like_female()), *quantiles_to_weibull(mlh1_like_male())};
}

SimConfig mlh1_like_config() {
  SimConfig cfg;
  cfg.truth = mlh1_like_truth();
  cfg.baseline = example_crc_baseline(cfg.max_age);
  return cfg;
}

std::optional<int> draw_onset(const WeibullPenetrance& curve, int max_age, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (!(unit(rng) < curve.gamma)) return std::nullopt;
  const double t = conditional_quantile(curve, unit(rng));
  const int onset = std::max(1, static_cast<int>(std::ceil(t)));
  if (onset > max_age) return std::nullopt;
  return onset;
}

std::optional<int> draw_onset(const BaselineTable& baseline, Sex sex, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (int a = 1; a <= baseline.max_age(); ++a) {
    acc += baseline.annual(sex, a);
    if (u < acc) return a;
  }
  return std::nullopt;
}

std::pair<Pedigree, PedigreeTruth> simulate_pedigree(const SimConfig& cfg, const std::string& pedigree_id, Rng& rng) {
  const auto people = FamilyBuilder(cfg, rng).build();
  const BaselineTable baseline = cfg.baseline.truncated(cfg.max_age);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Pedigree ped;
  ped.id = pedigree_id;
  PedigreeTruth truth;
  truth.pedigree_id = pedigree_id;
  for (const auto& p : people) {
    MemberTruth t;
    t.id = p.id;
    t.risk_alleles = p.alleles;
    t.carrier = p.alleles > 0;
    const int death = static_cast<int>(
        std::lround(std::normal_distribution<double>(cfg.ages.death_age_mean, cfg.ages.death_age_sd)(rng)));
    t.censoring_age = std::clamp(std::min(p.age_now, death), 1, cfg.max_age);
    t.onset_age = t.carrier ? draw_onset(cfg.truth.for_sex(p.sex), cfg.max_age, rng) : draw_onset(baseline, p.sex, rng);
    t.affected = t.onset_age && *t.onset_age <= t.censoring_age;

    Individual ind;
    ind.id = p.id;
    ind.pedigree_id = pedigree_id;
    ind.sex = p.sex;
    if (p.mother >= 0) ind.mother_id = people[static_cast<std::size_t>(p.mother)].id;
    if (p.father >= 0) ind.father_id = people[static_cast<std::size_t>(p.father)].id;
    ind.is_proband = p.proband;
    ind.cur_age = t.censoring_age;
    ind.is_affected = t.affected ? Affection::affected : Affection::unaffected;
    if (t.affected) ind.age_dx = *t.onset_age;
    if (t.affected && unit(rng) < cfg.mask_age_dx) ind.age_dx.reset();
    if (!t.affected && unit(rng) < cfg.mask_cur_age) ind.cur_age.reset();
    if (p.proband || unit(rng) < cfg.genotyping_rate) ind.genotype = t.carrier ? Genotype::carrier : Genotype::noncarrier;

    ped.members.push_back(std::move(ind));
    truth.members.push_back(t);
  }
  return {std::move(ped), std::move(truth)};
}

SimulatedStudy simulate_study(const SimConfig& cfg) {
  cfg.validate();
  SimulatedStudy study;
  study.pedigrees.reserve(static_cast<std::size_t>(cfg.n_probands));
  study.truth.reserve(static_cast<std::size_t>(cfg.n_probands));
  for (int i = 0; i < cfg.n_probands; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    Rng rng(seq);
    auto [ped, truth] = simulate_pedigree(cfg, std::to_string(i + 1), rng);
    study.pedigrees.push_back(std::move(ped));
    study.truth.push_back(std::move(truth));
  }
  return study;
}

namespace {

nlohmann::json quantiles_json(const QuantileParams& q) {
  return {{"asymptote", q.asymptote}, {"threshold", q.threshold}, {"median", q.median},
          {"first_quartile", q.first_quartile}};
}

nlohmann::json weibull_json(const WeibullPenetrance& w) {
  return {{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}, {"delta", w.delta}};
}

WeibullPenetrance curve_from_json(const nlohmann::json& j, const WeibullPenetrance& fallback) {
  if (j.contains("alpha")) {
    return {j.at("alpha").get<double>(), j.at("beta").get<double>(), j.at("gamma").get<double>(),
            j.at("delta").get<double>()};
  }
  QuantileParams q = weibull_to_quantiles(fallback);
  q.asymptote = j.value("asymptote", q.asymptote);
  q.threshold = j.value("threshold", q.threshold);
  q.median = j.value("median", q.median);
  q.first_quartile = j.value("first_quartile", q.first_quartile);
  const auto w = quantiles_to_weibull(q);
  if (!w) throw std::invalid_argument("simulation config: truth quartiles need threshold < first_quartile < median");
  return *w;
}

}  // namespace

nlohmann::json to_json(const SimConfig& cfg) {
  const auto& f = cfg.family;
  const auto& a = cfg.ages;
  return {
      {"n_probands", cfg.n_probands},
      {"seed", cfg.seed},
      {"prev", cfg.prev},
      {"max_age", cfg.max_age},
      {"mask_age_dx", cfg.mask_age_dx},
      {"mask_cur_age", cfg.mask_cur_age},
      {"genotyping_rate", cfg.genotyping_rate},
      {"truth",
       {{"female", weibull_json(cfg.truth.female)}, {"male", weibull_json(cfg.truth.male)}}},
      {"family",
       {{"aunts_uncles_per_side", f.aunts_uncles_per_side},
        {"siblings", f.siblings},
        {"children_per_couple", f.children_per_couple},
        {"partner_rate", f.partner_rate},
        {"max_count", f.max_count}}},
      {"ages",
       {{"proband_mean", a.proband_mean},
        {"proband_sd", a.proband_sd},
        {"proband_min", a.proband_min},
        {"proband_max", a.proband_max},
        {"generation_gap_mean", a.generation_gap_mean},
        {"generation_gap_sd", a.generation_gap_sd},
        {"sibling_spread_sd", a.sibling_spread_sd},
        {"partner_spread_sd", a.partner_spread_sd},
        {"death_age_mean", a.death_age_mean},
        {"death_age_sd", a.death_age_sd}}},
  };
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig cfg = mlh1_like_config();
  try {
    cfg.n_probands = j.value("n_probands", cfg.n_probands);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.prev = j.value("prev", cfg.prev);
    cfg.max_age = j.value("max_age", cfg.max_age);
    cfg.mask_age_dx = j.value("mask_age_dx", cfg.mask_age_dx);
    cfg.mask_cur_age = j.value("mask_cur_age", cfg.mask_cur_age);
    cfg.genotyping_rate = j.value("genotyping_rate", cfg.genotyping_rate);
    if (j.contains("truth")) {
      const auto& t = j.at("truth");
      if (t.contains("female")) cfg.truth.female = curve_from_json(t.at("female"), cfg.truth.female);
      if (t.contains("male")) cfg.truth.male = curve_from_json(t.at("male"), cfg.truth.male);
    }
    if (j.contains("family")) {
      const auto& f = j.at("family");
      auto& d = cfg.family;
      d.aunts_uncles_per_side = f.value("aunts_uncles_per_side", d.aunts_uncles_per_side);
      d.siblings = f.value("siblings", d.siblings);
      d.children_per_couple = f.value("children_per_couple", d.children_per_couple);
      d.partner_rate = f.value("partner_rate", d.partner_rate);
      d.max_count = f.value("max_count", d.max_count);
    }
    if (j.contains("ages")) {
      const auto& s = j.at("ages");
      auto& d = cfg.ages;
      d.proband_mean = s.value("proband_mean", d.proband_mean);
      d.proband_sd = s.value("proband_sd", d.proband_sd);
      d.proband_min = s.value("proband_min", d.proband_min);
      d.proband_max = s.value("proband_max", d.proband_max);
      d.generation_gap_mean = s.value("generation_gap_mean", d.generation_gap_mean);
      d.generation_gap_sd = s.value("generation_gap_sd", d.generation_gap_sd);
      d.sibling_spread_sd = s.value("sibling_spread_sd", d.sibling_spread_sd);
      d.partner_spread_sd = s.value("partner_spread_sd", d.partner_spread_sd);
      d.death_age_mean = s.value("death_age_mean", d.death_age_mean);
      d.death_age_sd = s.value("death_age_sd", d.death_age_sd);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("simulation config: ") + e.what());
  }
  if (cfg.baseline.max_age() < cfg.max_age) cfg.baseline = example_crc_baseline(cfg.max_age);
  return cfg;
}

nlohmann::json truth_to_json(const SimConfig& cfg, const SimulatedStudy& study) {
  nlohmann::json families = nlohmann::json::array();
  for (const auto& t : study.truth) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : t.members) {
      members.push_back({{"id", m.id},
                         {"risk_alleles", m.risk_alleles},
                         {"carrier", m.carrier},
                         {"onset_age", m.onset_age ? nlohmann::json(*m.onset_age) : nlohmann::json(nullptr)},
                         {"censoring_age", m.censoring_age},
                         {"affected", m.affected}});
    }
    families.push_back({{"pedigree_id", t.pedigree_id}, {"members", std::move(members)}});
  }
  return {{"config", to_json(cfg)},
          {"truth_quantiles",
           {{"female", quantiles_json(weibull_to_quantiles(cfg.truth.female))},
            {"male", quantiles_json(weibull_to_quantiles(cfg.truth.male))}}},
          {"families", std::move(families)}};
}

}  // namespace penetrance
