#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace metaprime {

/// BIO tag inventory: "O" plus B-/I- tags for each entity type. Tag ids are
/// dense: 0 is O, then B-T, I-T per type in declaration order.
class LabelScheme {
 public:
  explicit LabelScheme(std::vector<std::string> entity_types);

  // O + {B,I} x {PER, ORG, LOC}: seven tags.
  static LabelScheme wikiann();

  std::size_t size() const { return tags_.size(); }
  const std::vector<std::string>& tags() const { return tags_; }
  const std::vector<std::string>& entity_types() const { return types_; }
  const std::string& tag(int id) const { return tags_.at(static_cast<std::size_t>(id)); }

  std::optional<int> find(std::string_view tag) const;
  // Throws ParseError for tags outside the scheme.
  int id(std::string_view tag) const;

  int outside() const { return 0; }
  int begin_of(std::string_view type) const;
  int inside_of(std::string_view type) const;

 private:
  std::vector<std::string> types_;
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> index_;
};

struct BioTag {
  char prefix = 'O';  // 'O', 'B' or 'I'
  std::string type;
};

// Throws ParseError unless the tag is "O", "B-<type>" or "I-<type>".
BioTag parse_bio(std::string_view tag);

// True when no I-X follows O, the sequence start, or a B-Y/I-Y with Y != X.
bool is_valid_bio(const std::vector<std::string>& labels);

// Relabels every offending I-X as B-X; returns the number of repairs.
std::size_t repair_bio(std::vector<std::string>& labels);

}  // namespace metaprime
