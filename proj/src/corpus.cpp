#include "metaprime/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "metaprime/errors.hpp"

namespace metaprime {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

void finish(Corpus& corpus, TaggedSequence& current) {
  if (current.tokens.empty()) return;
  corpus.repairs += repair_bio(current.labels);
  corpus.sequences.push_back(std::move(current));
  current = {};
}

}  // namespace

Corpus parse_conll(std::istream& in, const LabelScheme& scheme, std::string name) {
  Corpus corpus;
  corpus.name = std::move(name);
  TaggedSequence current;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) {
      finish(corpus, current);
      continue;
    }
    const auto first_tab = line.find('\t');
    const auto last_tab = line.rfind('\t');
    if (first_tab == std::string_view::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected token<TAB>tag");
    }
    const std::string_view token = line.substr(0, first_tab);
    const std::string_view tag = line.substr(last_tab + 1);
    if (!scheme.find(tag)) {
      throw ParseError("line " + std::to_string(line_no) + ": unknown tag '" + std::string(tag) + "'");
    }
    current.tokens.emplace_back(token);
    current.labels.emplace_back(tag);
  }
  finish(corpus, current);
  return corpus;
}

Corpus load_conll(const std::filesystem::path& path, const LabelScheme& scheme) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot read corpus " + path.string());
  return parse_conll(in, scheme, path.stem().string());
}

void write_conll(std::ostream& out, const Corpus& corpus) {
  for (const auto& seq : corpus.sequences) {
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) out << seq.tokens[i] << '\t' << seq.labels[i] << '\n';
    out << '\n';
  }
}

void save_conll(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError("cannot write corpus " + path.string());
  write_conll(out, corpus);
}

}  // namespace metaprime
