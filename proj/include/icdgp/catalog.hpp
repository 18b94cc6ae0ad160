#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "icdgp/detail/csv.hpp"
#include "icdgp/errors.hpp"
#include "icdgp/icd_code.hpp"

namespace icdgp {

/// The chronic-condition definitions: C named code sets with positive
/// importance weights. Code sets may overlap across conditions.
class ConditionCatalog {
 public:
  struct Condition {
    std::string name;
    std::vector<IcdCode> codes;  // sorted, unique
  };

  ConditionCatalog(std::vector<Condition> conditions,
                   std::vector<double> weights = {},
                   int max_code_length = kDefaultMaxCodeLength)
      : conditions_(std::move(conditions)),
        weights_(std::move(weights)),
        max_code_length_(max_code_length) {
    if (conditions_.empty()) throw InputError("catalog must define at least one condition");
    if (weights_.empty()) weights_.assign(conditions_.size(), 1.0);
    if (weights_.size() != conditions_.size())
      throw DimensionMismatchError("one weight per condition required");
    for (auto& cond : conditions_) {
      if (cond.codes.empty()) throw EmptyConditionDefinitionError(cond.name);
      std::sort(cond.codes.begin(), cond.codes.end());
      cond.codes.erase(std::unique(cond.codes.begin(), cond.codes.end()), cond.codes.end());
    }
    for (double w : weights_) {
      if (!(w > 0.0)) throw InputError("condition weights must be positive");
    }
  }

  std::size_t size() const { return conditions_.size(); }
  const std::vector<Condition>& conditions() const { return conditions_; }
  const Condition& condition(std::size_t c) const { return conditions_[c]; }
  const std::vector<double>& weights() const { return weights_; }
  int max_code_length() const { return max_code_length_; }

  void set_weights(std::vector<double> weights) {
    if (weights.size() != conditions_.size())
      throw DimensionMismatchError("one weight per condition required");
    for (double w : weights) {
      if (!(w > 0.0)) throw InputError("condition weights must be positive");
    }
    weights_ = std::move(weights);
  }

  bool contains(std::size_t c, const IcdCode& code) const {
    const auto& codes = conditions_[c].codes;
    return std::binary_search(codes.begin(), codes.end(), code);
  }

  /// Reads rows `condition,code`; order of first appearance defines the
  /// condition index.
  static ConditionCatalog read_csv(std::istream& in,
                                   int max_code_length = kDefaultMaxCodeLength) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty catalog file");
    auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "condition" || header[1] != "code")
      throw InputError("catalog header must be 'condition,code'");
    std::vector<Condition> conditions;
    std::map<std::string, std::size_t> index;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto fields = detail::split_csv_line(line);
      if (fields.size() != 2)
        throw InputError("catalog row must have two fields: " + line);
      auto [it, inserted] = index.try_emplace(fields[0], conditions.size());
      if (inserted) conditions.push_back(Condition{fields[0], {}});
      conditions[it->second].codes.push_back(IcdCode::parse(fields[1], max_code_length));
    }
    return ConditionCatalog(std::move(conditions), {}, max_code_length);
  }

  static ConditionCatalog read_csv_file(const std::string& path,
                                        int max_code_length = kDefaultMaxCodeLength) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open catalog file: " + path);
    return read_csv(in, max_code_length);
  }

  void write_csv(std::ostream& out) const {
    out << "condition,code\n";
    for (const auto& cond : conditions_) {
      for (const auto& code : cond.codes)
        out << detail::csv_quote(cond.name) << ',' << code.text() << '\n';
    }
  }

 private:
  std::vector<Condition> conditions_;
  std::vector<double> weights_;
  int max_code_length_;
};

/// One patient's diagnoses partitioned by condition; entry c is a subset of
/// the catalog's condition-c code set and may be empty.
struct Diagnosis {
  std::vector<std::vector<IcdCode>> per_condition;

  bool operator==(const Diagnosis&) const = default;

  std::size_t code_count() const {
    std::size_t total = 0;
    for (const auto& set : per_condition) total += set.size();
    return total;
  }
};

/// Validates subset membership against the catalog.
inline Diagnosis make_diagnosis(const ConditionCatalog& catalog,
                                std::vector<std::vector<IcdCode>> per_condition) {
  if (per_condition.size() != catalog.size())
    throw DimensionMismatchError("diagnosis must have one code set per condition");
  for (std::size_t c = 0; c < per_condition.size(); ++c) {
    auto& set = per_condition[c];
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    for (const auto& code : set) {
      if (!catalog.contains(c, code))
        throw InputError("code " + code.text() + " is not part of condition '" +
                         catalog.condition(c).name + "'");
    }
  }
  return Diagnosis{std::move(per_condition)};
}

struct ConditionAssignment {
  Diagnosis diagnosis;
  std::vector<IcdCode> unmatched;  // codes matching no condition, in input order
};

/// Intersects the raw codes with every condition set. A code belonging to
/// several conditions lands in each of them; codes matching none are
/// reported rather than dropped.
inline ConditionAssignment assign_to_conditions(std::span<const IcdCode> raw_codes,
                                                const ConditionCatalog& catalog) {
  Diagnosis diagnosis;
  diagnosis.per_condition.resize(catalog.size());
  std::vector<IcdCode> unmatched;
  for (const auto& code : raw_codes) {
    bool matched = false;
    for (std::size_t c = 0; c < catalog.size(); ++c) {
      if (catalog.contains(c, code)) {
        diagnosis.per_condition[c].push_back(code);
        matched = true;
      }
    }
    if (!matched) unmatched.push_back(code);
  }
  for (auto& set : diagnosis.per_condition) {
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
  }
  return ConditionAssignment{std::move(diagnosis), std::move(unmatched)};
}

}  // namespace icdgp
