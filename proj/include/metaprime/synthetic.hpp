#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "metaprime/corpus.hpp"

namespace metaprime {

/// Sizes of the word classes in the shared proto-lexicon. Every synthetic
/// language realizes the same classes under its own surface renaming.
struct ProtoLexiconSpec {
  std::size_t function_words = 16;  // first entry is the sentence terminator
  std::size_t content_words = 24;
  std::size_t names = 30;  // name pieces shared by all entity types
  std::size_t person_cues = 4;   // precede PER spans, tagged O
  std::size_t org_cues = 3;      // optionally precede ORG spans, tagged O
  std::size_t location_cues = 4; // precede LOC spans, tagged O
  std::size_t org_suffixes = 4;  // close ORG spans, tagged I-ORG
  std::size_t location_suffixes = 3;  // optionally close LOC spans, tagged I-LOC

  std::size_t total() const;

  bool operator==(const ProtoLexiconSpec&) const = default;
};

struct SyntheticLanguageSpec {
  std::string language_id;
  std::uint64_t seed = 0;
  // Surface tokens are "<prefix>_<n>"; defaults to language_id when empty.
  std::string surface_prefix;
  double entity_rate = 0.25;  // per-slot probability of emitting an entity
  double mean_length = 10.0;  // mean sentence length in slots
  double name_coverage = 0.6; // fraction of the name pool each type may use
  double stray_cue_rate = 0.05;  // cue words appearing outside any entity
  ProtoLexiconSpec lexicon;

  bool operator==(const SyntheticLanguageSpec&) const = default;
};

/// A surface token and the proto-lexicon entry it realizes.
struct SurfaceWord {
  std::string token;
  int proto_id = 0;
};

/// Deterministic corpus: a pure function of (spec, n_sentences). Labels are
/// valid BIO over {PER, ORG, LOC}.
Corpus generate_language(const SyntheticLanguageSpec& spec, std::size_t n_sentences);

/// Coarse lexical class of every proto-lexicon entry, in proto-id order:
/// 0 function, 1 content, 2 name, 3 person cue, 4 organization cue,
/// 5 location cue, 6 suffix. Says nothing about entity types.
inline constexpr int kWordClasses = 7;
std::vector<int> word_classes(const ProtoLexiconSpec& lexicon);

/// Every surface word of the language, in proto-id order.
std::vector<SurfaceWord> surface_lexicon(const SyntheticLanguageSpec& spec);

}  // namespace metaprime
