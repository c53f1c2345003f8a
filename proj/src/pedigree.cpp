#include "penetrance/pedigree.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace penetrance {

namespace {

using Field = std::optional<std::string>;

std::string lower(std::string_view s) {
  std::string out(s);
  std::ranges::transform(out, out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_missing_token(std::string_view s) {
  s = trim(s);
  return s.empty() || lower(s) == "na" || lower(s) == "nan";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  double value = 0.0;
  const auto* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

class RowDecoder {
 public:
  RowDecoder(std::string where) : where_(std::move(where)) {}

  [[noreturn]] void fail(std::string_view column, std::string_view what) const {
    throw ParseError(where_ + ": column " + std::string(column) + ": " + std::string(what));
  }

  std::optional<MemberId> id(const Field& f, std::string_view column, bool zero_is_missing) const {
    if (!f || is_missing_token(*f)) return std::nullopt;
    const auto v = parse_number(*f);
    if (!v || *v != std::floor(*v)) fail(column, "non-numeric id '" + *f + "'");
    if (zero_is_missing && *v == 0.0) return std::nullopt;
    if (*v <= 0.0) fail(column, "ids must be positive");
    return static_cast<MemberId>(*v);
  }

  std::optional<int> age(const Field& f, std::string_view column) const {
    if (!f || is_missing_token(*f)) return std::nullopt;
    const auto v = parse_number(*f);
    if (!v) fail(column, "non-numeric age '" + *f + "'");
    return static_cast<int>(std::floor(*v));
  }

  // 1 / 0 / missing, with TRUE/FALSE accepted.
  std::optional<bool> flag(const Field& f, std::string_view column) const {
    if (!f || is_missing_token(*f)) return std::nullopt;
    const std::string s = lower(trim(*f));
    if (s == "true" || s == "t") return true;
    if (s == "false" || s == "f") return false;
    const auto v = parse_number(s);
    if (v && *v == 1.0) return true;
    if (v && *v == 0.0) return false;
    fail(column, "expected 1, 0 or NA, got '" + *f + "'");
  }

  Sex sex(const Field& f) const {
    if (!f || is_missing_token(*f)) return Sex::unknown;
    const std::string s = lower(trim(*f));
    if (s == "0" || s == "f" || s == "female") return Sex::female;
    if (s == "1" || s == "m" || s == "male") return Sex::male;
    fail("Sex", "expected 0 (female), 1 (male) or NA, got '" + *f + "'");
  }

 private:
  std::string where_;
};

// Decodes rows given as ten optional string fields in kPedigreeColumns order.
class PedigreeBuilder {
 public:
  void add(const std::array<Field, 10>& row, const std::string& where) {
    const RowDecoder dec(where);
    if (!row[0] || is_missing_token(*row[0])) dec.fail("PedigreeID", "missing pedigree id");
    Individual ind;
    ind.pedigree_id = std::string(trim(*row[0]));
    const auto id = dec.id(row[1], "ID", false);
    if (!id) dec.fail("ID", "missing member id");
    ind.id = *id;
    ind.sex = dec.sex(row[2]);
    ind.mother_id = dec.id(row[3], "MotherID", true);
    ind.father_id = dec.id(row[4], "FatherID", true);
    ind.is_proband = dec.flag(row[5], "isProband").value_or(false);
    ind.cur_age = dec.age(row[6], "CurAge");
    if (const auto aff = dec.flag(row[7], "isAff")) {
      ind.is_affected = *aff ? Affection::affected : Affection::unaffected;
    }
    ind.age_dx = dec.age(row[8], "Age");
    if (const auto geno = dec.flag(row[9], "Geno")) {
      ind.genotype = *geno ? Genotype::carrier : Genotype::noncarrier;
    }

    auto [it, inserted] = index_.try_emplace(ind.pedigree_id, pedigrees_.size());
    if (inserted) pedigrees_.push_back(Pedigree{ind.pedigree_id, {}, {}});
    Pedigree& ped = pedigrees_[it->second];
    if (!seen_.insert({ind.pedigree_id, ind.id}).second) {
      throw ParseError(where + ": duplicate member " + std::to_string(ind.id) + " in pedigree " +
                       ind.pedigree_id);
    }
    ped.members.push_back(std::move(ind));
  }

  std::vector<Pedigree> finish() && { return std::move(pedigrees_); }

 private:
  std::vector<Pedigree> pedigrees_;
  std::unordered_map<std::string, std::size_t> index_;
  std::set<std::pair<std::string, MemberId>> seen_;
};

std::string format_optional(const std::optional<int>& v) {
  return v ? std::to_string(*v) : "NA";
}

std::string format_optional(const std::optional<MemberId>& v) {
  return v ? std::to_string(*v) : "NA";
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
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

std::optional<std::size_t> Pedigree::index_of(MemberId member) const {
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].id == member) return i;
  }
  return std::nullopt;
}

std::string_view to_string(IssueCode code) {
  switch (code) {
    case IssueCode::single_parent: return "single_parent";
    case IssueCode::dangling_parent: return "dangling_parent";
    case IssueCode::mother_is_male: return "mother_is_male";
    case IssueCode::father_is_female: return "father_is_female";
    case IssueCode::cycle: return "cycle";
    case IssueCode::age_dx_without_affection: return "age_dx_without_affection";
    case IssueCode::age_dx_after_cur_age: return "age_dx_after_cur_age";
    case IssueCode::age_above_max: return "age_above_max";
    case IssueCode::age_below_one: return "age_below_one";
    case IssueCode::no_proband: return "no_proband";
    case IssueCode::multiple_probands: return "multiple_probands";
    case IssueCode::bad_twin_group: return "bad_twin_group";
    case IssueCode::marriage_loop: return "marriage_loop";
  }
  return "unknown";
}

std::string_view to_string(Severity severity) {
  return severity == Severity::error ? "error" : "warning";
}

std::vector<Pedigree> parse_pedigrees_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::array<std::size_t, 10> column{};
  bool have_header = false;
  PedigreeBuilder builder;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (!have_header) {
      std::map<std::string, std::size_t> by_name;
      for (std::size_t i = 0; i < fields.size(); ++i) by_name.emplace(lower(trim(fields[i])), i);
      for (std::size_t c = 0; c < kPedigreeColumns.size(); ++c) {
        auto it = by_name.find(lower(kPedigreeColumns[c]));
        if (it == by_name.end()) {
          throw ParseError("missing required column " + std::string(kPedigreeColumns[c]));
        }
        column[c] = it->second;
      }
      have_header = true;
      continue;
    }
    std::array<Field, 10> row;
    for (std::size_t c = 0; c < column.size(); ++c) {
      if (column[c] < fields.size()) row[c] = fields[column[c]];
    }
    builder.add(row, "line " + std::to_string(line_no));
  }
  return std::move(builder).finish();
}

std::vector<Pedigree> parse_pedigrees_json(const nlohmann::json& rows) {
  if (!rows.is_array()) throw ParseError("pedigree JSON must be an array of row objects");
  PedigreeBuilder builder;
  bool checked_columns = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& obj = rows[r];
    if (!obj.is_object()) throw ParseError("row " + std::to_string(r) + " is not an object");
    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& [key, value] : obj.items()) by_name.emplace(lower(key), &value);
    std::array<Field, 10> row;
    for (std::size_t c = 0; c < kPedigreeColumns.size(); ++c) {
      auto it = by_name.find(lower(kPedigreeColumns[c]));
      if (it == by_name.end()) {
        if (!checked_columns) {
          throw ParseError("missing required column " + std::string(kPedigreeColumns[c]));
        }
        continue;
      }
      const auto& v = *it->second;
      if (v.is_null()) continue;
      if (v.is_string()) {
        row[c] = v.get<std::string>();
      } else if (v.is_boolean()) {
        row[c] = v.get<bool>() ? "1" : "0";
      } else {
        row[c] = v.dump();
      }
    }
    checked_columns = true;
    builder.add(row, "row " + std::to_string(r));
  }
  return std::move(builder).finish();
}

std::vector<Pedigree> read_pedigrees(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pedigree file " + path.string());
  const auto ext = lower(path.extension().string());
  if (ext == ".json") {
    nlohmann::json rows;
    try {
      in >> rows;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    return parse_pedigrees_json(rows);
  }
  return parse_pedigrees_csv(in);
}

void write_pedigrees_csv(std::ostream& out, std::span<const Pedigree> pedigrees) {
  for (std::size_t c = 0; c < kPedigreeColumns.size(); ++c) {
    out << (c ? "," : "") << kPedigreeColumns[c];
  }
  out << '\n';
  auto tri = [](auto value, auto yes, auto unknown) -> std::string {
    if (value == unknown) return "NA";
    return value == yes ? "1" : "0";
  };
  for (const auto& ped : pedigrees) {
    for (const auto& m : ped.members) {
      out << csv_quote(m.pedigree_id.empty() ? ped.id : m.pedigree_id) << ',' << m.id << ','
          << (m.sex == Sex::unknown ? "NA" : (m.sex == Sex::male ? "1" : "0")) << ','
          << format_optional(m.mother_id) << ',' << format_optional(m.father_id) << ','
          << (m.is_proband ? 1 : 0) << ',' << format_optional(m.cur_age) << ','
          << tri(m.is_affected, Affection::affected, Affection::unknown) << ','
          << format_optional(m.age_dx) << ','
          << tri(m.genotype, Genotype::carrier, Genotype::unknown) << '\n';
    }
  }
}

void attach_twin_groups(std::vector<Pedigree>& pedigrees, const nlohmann::json& twins) {
  if (!twins.is_object()) throw ParseError("twin specification must be an object keyed by pedigree id");
  for (const auto& [ped_id, groups] : twins.items()) {
    auto it = std::ranges::find(pedigrees, ped_id, &Pedigree::id);
    if (it == pedigrees.end()) throw ParseError("twin specification names unknown pedigree " + ped_id);
    for (const auto& group : groups) {
      it->twin_groups.push_back(group.get<std::vector<MemberId>>());
    }
  }
}

std::vector<ValidationIssue> validate(const Pedigree& pedigree, int max_age) {
  std::vector<ValidationIssue> issues;
  auto report = [&](std::optional<MemberId> member, Severity severity, IssueCode code,
                    std::string message) {
    issues.push_back({pedigree.id, member, severity, code, std::move(message)});
  };

  std::unordered_map<MemberId, std::size_t> index;
  for (std::size_t i = 0; i < pedigree.members.size(); ++i) index.emplace(pedigree.members[i].id, i);

  std::size_t probands = 0;
  bool structural_ok = true;
  for (const auto& m : pedigree.members) {
    const std::string who = "member " + std::to_string(m.id);
    if (m.is_proband) ++probands;
    if (m.mother_id.has_value() != m.father_id.has_value()) {
      report(m.id, Severity::error, IssueCode::single_parent, who + " has exactly one parent recorded");
      structural_ok = false;
    }
    auto check_parent = [&](const std::optional<MemberId>& parent, bool is_mother) {
      if (!parent) return;
      auto it = index.find(*parent);
      if (it == index.end()) {
        report(m.id, Severity::error, IssueCode::dangling_parent,
               who + " references missing " + (is_mother ? "mother " : "father ") +
                   std::to_string(*parent));
        structural_ok = false;
        return;
      }
      const Sex s = pedigree.members[it->second].sex;
      if (is_mother && s == Sex::male) {
        report(m.id, Severity::error, IssueCode::mother_is_male,
               who + ": mother " + std::to_string(*parent) + " is male");
      }
      if (!is_mother && s == Sex::female) {
        report(m.id, Severity::error, IssueCode::father_is_female,
               who + ": father " + std::to_string(*parent) + " is female");
      }
    };
    check_parent(m.mother_id, true);
    check_parent(m.father_id, false);

    if (m.age_dx && m.is_affected != Affection::affected) {
      report(m.id, Severity::error, IssueCode::age_dx_without_affection,
             who + " has a diagnosis age but is not marked affected");
    }
    if (m.age_dx && m.cur_age && *m.age_dx > *m.cur_age) {
      report(m.id, Severity::error, IssueCode::age_dx_after_cur_age,
             who + " has diagnosis age " + std::to_string(*m.age_dx) + " above censoring age " +
                 std::to_string(*m.cur_age));
    }
    for (const auto& age : {m.cur_age, m.age_dx}) {
      if (age && *age > max_age) {
        report(m.id, Severity::warning, IssueCode::age_above_max,
               who + " age " + std::to_string(*age) + " clamped to " + std::to_string(max_age));
      } else if (age && *age < 1) {
        report(m.id, Severity::warning, IssueCode::age_below_one,
               who + " age " + std::to_string(*age) + " clamped to 1");
      }
    }
  }
  if (!pedigree.members.empty() && probands == 0) {
    report(std::nullopt, Severity::warning, IssueCode::no_proband, "no proband marked");
  } else if (probands > 1) {
    report(std::nullopt, Severity::warning, IssueCode::multiple_probands,
           std::to_string(probands) + " probands marked");
  }

  // Ancestry cycles: iterative DFS colouring over resolved parent links.
  std::vector<std::uint8_t> colour(pedigree.members.size(), 0);
  auto parents_of = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (const auto& p : {pedigree.members[i].mother_id, pedigree.members[i].father_id}) {
      if (!p) continue;
      if (auto it = index.find(*p); it != index.end()) out.push_back(it->second);
    }
    return out;
  };
  for (std::size_t start = 0; start < pedigree.members.size(); ++start) {
    if (colour[start] != 0) continue;
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> stack;
    stack.emplace_back(start, parents_of(start));
    colour[start] = 1;
    while (!stack.empty()) {
      auto& [node, pending] = stack.back();
      if (pending.empty()) {
        colour[node] = 2;
        stack.pop_back();
        continue;
      }
      const std::size_t next = pending.back();
      pending.pop_back();
      if (colour[next] == 1) {
        report(pedigree.members[next].id, Severity::error, IssueCode::cycle,
               "member " + std::to_string(pedigree.members[next].id) + " is its own ancestor");
        structural_ok = false;
      } else if (colour[next] == 0) {
        colour[next] = 1;
        stack.emplace_back(next, parents_of(next));
      }
    }
  }

  // Twin groups.
  std::vector<std::size_t> group_of(pedigree.members.size(), SIZE_MAX);
  for (std::size_t g = 0; g < pedigree.twin_groups.size(); ++g) {
    const auto& group = pedigree.twin_groups[g];
    const std::string label = "twin group " + std::to_string(g + 1);
    if (group.size() < 2) {
      report(std::nullopt, Severity::error, IssueCode::bad_twin_group, label + " has fewer than 2 members");
      structural_ok = false;
      continue;
    }
    std::optional<std::pair<std::optional<MemberId>, std::optional<MemberId>>> parents;
    for (MemberId id : group) {
      auto it = index.find(id);
      if (it == index.end()) {
        report(id, Severity::error, IssueCode::bad_twin_group, label + " names unknown member " + std::to_string(id));
        structural_ok = false;
        continue;
      }
      if (group_of[it->second] != SIZE_MAX) {
        report(id, Severity::error, IssueCode::bad_twin_group,
               "member " + std::to_string(id) + " belongs to more than one twin group");
        structural_ok = false;
      }
      group_of[it->second] = g;
      const auto& m = pedigree.members[it->second];
      if (m.is_founder()) {
        report(id, Severity::error, IssueCode::bad_twin_group, label + " member " + std::to_string(id) + " has no parents");
        structural_ok = false;
      }
      std::pair<std::optional<MemberId>, std::optional<MemberId>> mp{m.mother_id, m.father_id};
      if (!parents) {
        parents = mp;
      } else if (*parents != mp) {
        report(id, Severity::error, IssueCode::bad_twin_group, label + " members do not share both parents");
        structural_ok = false;
      }
    }
  }

  // Marriage loops: twins collapse to one node; each mating is a node linked to
  // both parents and every child. The graph must be a forest.
  if (structural_ok) {
    const std::size_t n = pedigree.members.size();
    std::vector<std::size_t> node(n);
    for (std::size_t i = 0; i < n; ++i) {
      node[i] = group_of[i] == SIZE_MAX ? i : n + group_of[i];
    }
    std::map<std::pair<std::size_t, std::size_t>, std::set<std::size_t>> matings;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& m = pedigree.members[i];
      if (m.is_founder()) continue;
      matings[{node[index.at(*m.mother_id)], node[index.at(*m.father_id)]}].insert(node[i]);
    }
    DisjointSets sets(n + pedigree.twin_groups.size() + matings.size());
    std::size_t mating_node = n + pedigree.twin_groups.size();
    bool loop = false;
    for (const auto& [couple, children] : matings) {
      loop |= !sets.unite(mating_node, couple.first);
      loop |= !sets.unite(mating_node, couple.second);
      for (std::size_t child : children) loop |= !sets.unite(mating_node, child);
      ++mating_node;
    }
    if (loop) {
      report(std::nullopt, Severity::error, IssueCode::marriage_loop,
             "pedigree contains a marriage or consanguinity loop, which is not supported");
    }
  }
  return issues;
}

bool has_errors(std::span<const ValidationIssue> issues) {
  return std::ranges::any_of(issues, [](const auto& i) { return i.severity == Severity::error; });
}

Pedigree clamp_ages(Pedigree pedigree, int max_age) {
  for (auto& m : pedigree.members) {
    for (auto* age : {&m.cur_age, &m.age_dx}) {
      if (*age) **age = std::clamp(**age, 1, max_age);
    }
  }
  return pedigree;
}

std::set<MemberId> founders(const Pedigree& pedigree) {
  std::set<MemberId> out;
  for (const auto& m : pedigree.members) {
    if (m.is_founder()) out.insert(m.id);
  }
  return out;
}

}  // namespace penetrance
