#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace penetrance {

enum class Sex : std::uint8_t { female, male, unknown };
enum class Affection : std::uint8_t { unaffected, affected, unknown };
enum class Genotype : std::uint8_t { noncarrier, carrier, unknown };

using MemberId = std::int64_t;

/// One row of the family-history table.
struct Individual {
  MemberId id = 0;
  std::string pedigree_id;
  Sex sex = Sex::unknown;
  std::optional<MemberId> mother_id;
  std::optional<MemberId> father_id;
  bool is_proband = false;
  std::optional<int> cur_age;  // censoring age
  Affection is_affected = Affection::unknown;
  std::optional<int> age_dx;
  Genotype genotype = Genotype::unknown;

  bool is_founder() const { return !mother_id && !father_id; }
  bool operator==(const Individual&) const = default;
};

struct Pedigree {
  std::string id;
  std::vector<Individual> members;
  // Monozygotic groups; members of a group share one genotype.
  std::vector<std::vector<MemberId>> twin_groups;

  std::optional<std::size_t> index_of(MemberId member) const;
  bool operator==(const Pedigree&) const = default;
};

enum class Severity : std::uint8_t { error, warning };

enum class IssueCode : std::uint8_t {
  single_parent,
  dangling_parent,
  mother_is_male,
  father_is_female,
  cycle,
  age_dx_without_affection,
  age_dx_after_cur_age,
  age_above_max,
  age_below_one,
  no_proband,
  multiple_probands,
  bad_twin_group,
  marriage_loop,
};

struct ValidationIssue {
  std::string pedigree_id;
  std::optional<MemberId> member_id;
  Severity severity = Severity::error;
  IssueCode code = IssueCode::cycle;
  std::string message;
};

std::string_view to_string(IssueCode code);
std::string_view to_string(Severity severity);

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The ten required column names, in canonical output order.
inline constexpr std::array<std::string_view, 10> kPedigreeColumns = {
    "PedigreeID", "ID", "Sex", "MotherID", "FatherID",
    "isProband", "CurAge", "isAff", "Age", "Geno"};

// Tabular ingestion. Header names match case-insensitively; extra columns are
// ignored. Missing values may be empty, NA or "NA". Members keep row order and
// pedigrees keep first-appearance order.
std::vector<Pedigree> parse_pedigrees_csv(std::istream& in);
std::vector<Pedigree> parse_pedigrees_json(const nlohmann::json& rows);
std::vector<Pedigree> read_pedigrees(const std::filesystem::path& path);

void write_pedigrees_csv(std::ostream& out, std::span<const Pedigree> pedigrees);

/// Twin specification: {"<pedigree id>": [[id, id], ...], ...}.
void attach_twin_groups(std::vector<Pedigree>& pedigrees, const nlohmann::json& twins);

std::vector<ValidationIssue> validate(const Pedigree& pedigree, int max_age);
bool has_errors(std::span<const ValidationIssue> issues);

/// Clamps ages into [1, max_age]; validate() reports each clamp as a warning.
Pedigree clamp_ages(Pedigree pedigree, int max_age);

std::set<MemberId> founders(const Pedigree& pedigree);

}  // namespace penetrance
