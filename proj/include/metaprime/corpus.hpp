#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "metaprime/bio.hpp"

namespace metaprime {

struct TaggedSequence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;

  bool operator==(const TaggedSequence&) const = default;
};

struct Corpus {
  std::string name;
  std::vector<TaggedSequence> sequences;
  std::size_t repairs = 0;  // invalid I- tags relabeled to B- while loading

  std::size_t size() const { return sequences.size(); }
  bool empty() const { return sequences.empty(); }
};

// CoNLL-style columns: one "token<TAB>tag" line per token, blank lines between
// sentences. With more than two columns the first is the token and the last
// the tag. Unknown tags raise ParseError naming the line.
Corpus parse_conll(std::istream& in, const LabelScheme& scheme, std::string name = {});
Corpus load_conll(const std::filesystem::path& path, const LabelScheme& scheme);

void write_conll(std::ostream& out, const Corpus& corpus);
void save_conll(const std::filesystem::path& path, const Corpus& corpus);

}  // namespace metaprime
