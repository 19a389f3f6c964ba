#include "metaprime/bio.hpp"

#include "metaprime/errors.hpp"

namespace metaprime {

LabelScheme::LabelScheme(std::vector<std::string> entity_types) : types_(std::move(entity_types)) {
  tags_.push_back("O");
  for (const auto& t : types_) {
    tags_.push_back("B-" + t);
    tags_.push_back("I-" + t);
  }
  for (std::size_t i = 0; i < tags_.size(); ++i) index_.emplace(tags_[i], static_cast<int>(i));
}

LabelScheme LabelScheme::wikiann() { return LabelScheme({"PER", "ORG", "LOC"}); }

std::optional<int> LabelScheme::find(std::string_view tag) const {
  auto it = index_.find(std::string(tag));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int LabelScheme::id(std::string_view tag) const {
  if (auto v = find(tag)) return *v;
  throw ParseError("unknown tag '" + std::string(tag) + "'");
}

int LabelScheme::begin_of(std::string_view type) const { return id("B-" + std::string(type)); }
int LabelScheme::inside_of(std::string_view type) const { return id("I-" + std::string(type)); }

BioTag parse_bio(std::string_view tag) {
  if (tag == "O") return {};
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    return {tag[0], std::string(tag.substr(2))};
  }
  throw ParseError("malformed BIO tag '" + std::string(tag) + "'");
}

namespace {

// Whether the I-tag at position i continues the entity to its left.
bool continues(const std::vector<std::string>& labels, std::size_t i, const BioTag& cur) {
  if (i == 0) return false;
  const BioTag prev = parse_bio(labels[i - 1]);
  return prev.prefix != 'O' && prev.type == cur.type;
}

}  // namespace

bool is_valid_bio(const std::vector<std::string>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const BioTag cur = parse_bio(labels[i]);
    if (cur.prefix == 'I' && !continues(labels, i, cur)) return false;
  }
  return true;
}

std::size_t repair_bio(std::vector<std::string>& labels) {
  std::size_t repairs = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const BioTag cur = parse_bio(labels[i]);
    if (cur.prefix == 'I' && !continues(labels, i, cur)) {
      labels[i] = "B-" + cur.type;
      ++repairs;
    }
  }
  return repairs;
}

}  // namespace metaprime
