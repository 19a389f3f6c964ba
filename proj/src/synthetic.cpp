#include "metaprime/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "metaprime/errors.hpp"

namespace metaprime {

std::size_t ProtoLexiconSpec::total() const {
  return function_words + content_words + names + person_cues + org_cues + location_cues + org_suffixes +
         location_suffixes;
}

namespace {

// Contiguous proto-id ranges for each word class.
struct Layout {
  explicit Layout(const ProtoLexiconSpec& s) {
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
      const std::pair<int, int> r{static_cast<int>(at), static_cast<int>(at + n)};
      at += n;
      return r;
    };
    function = take(s.function_words);
    content = take(s.content_words);
    names = take(s.names);
    person_cues = take(s.person_cues);
    org_cues = take(s.org_cues);
    location_cues = take(s.location_cues);
    org_suffixes = take(s.org_suffixes);
    location_suffixes = take(s.location_suffixes);
  }

  std::pair<int, int> function, content, names, person_cues, org_cues, location_cues, org_suffixes,
      location_suffixes;
};

class Language {
 public:
  explicit Language(const SyntheticLanguageSpec& spec) : spec_(spec), layout_(spec.lexicon) {
    const auto& lx = spec.lexicon;
    if (lx.function_words == 0 || lx.content_words == 0 || lx.names == 0 || lx.person_cues == 0 ||
        lx.location_cues == 0 || lx.org_suffixes == 0) {
      throw ConfigError("synthetic language '" + spec.language_id + "': every required word class needs >= 1 word");
    }
    std::mt19937_64 rng(spec.seed);
    permutation_.resize(lx.total());
    std::iota(permutation_.begin(), permutation_.end(), 0);
    std::shuffle(permutation_.begin(), permutation_.end(), rng);

    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(spec.name_coverage * static_cast<double>(lx.names) + 0.5));
    for (auto& lexicon : type_names_) {
      std::vector<int> pool(lx.names);
      std::iota(pool.begin(), pool.end(), layout_.names.first);
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(std::min(keep, pool.size()));
      lexicon = std::move(pool);
    }
    prefix_ = spec.surface_prefix.empty() ? spec.language_id : spec.surface_prefix;
  }

  std::string surface(int proto) const {
    return prefix_ + "_" + std::to_string(permutation_[static_cast<std::size_t>(proto)]);
  }

  Corpus generate(std::size_t n_sentences) const {
    Corpus corpus;
    corpus.name = spec_.language_id;
    std::mt19937_64 rng(spec_.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::poisson_distribution<int> extra(std::max(spec_.mean_length - 3.0, 0.0));
    for (std::size_t s = 0; s < n_sentences; ++s) {
      TaggedSequence seq;
      const std::size_t slots = 3 + static_cast<std::size_t>(extra(rng));
      std::size_t used = 0;
      while (used < slots) {
        if (unit(rng) < spec_.entity_rate) {
          emit_entity(seq, rng);
        } else {
          emit_filler(seq, rng);
        }
        ++used;
      }
      emit(seq, layout_.function.first, "O");
      corpus.sequences.push_back(std::move(seq));
    }
    return corpus;
  }

 private:
  static int pick(std::pair<int, int> range, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(range.first, range.second - 1);
    return d(rng);
  }

  static int pick(const std::vector<int>& pool, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    return pool[d(rng)];
  }

  void emit(TaggedSequence& seq, int proto, std::string label) const {
    seq.tokens.push_back(surface(proto));
    seq.labels.push_back(std::move(label));
  }

  void emit_filler(TaggedSequence& seq, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < spec_.stray_cue_rate) {
      const double u = unit(rng);
      if (u < 1.0 / 3.0 || spec_.lexicon.org_cues == 0) {
        emit(seq, pick(u < 1.0 / 6.0 ? layout_.person_cues : layout_.location_cues, rng), "O");
      } else {
        emit(seq, pick(layout_.org_cues, rng), "O");
      }
      return;
    }
    if (unit(rng) < 0.5 && layout_.function.second - layout_.function.first > 1) {
      emit(seq, pick(std::pair<int, int>{layout_.function.first + 1, layout_.function.second}, rng), "O");
    } else {
      emit(seq, pick(layout_.content, rng), "O");
    }
  }

  void emit_entity(TaggedSequence& seq, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> type_dist(0, 2);
    switch (type_dist(rng)) {
      case 0: {  // PER: cue, then one or two names
        emit(seq, pick(layout_.person_cues, rng), "O");
        emit(seq, pick(type_names_[0], rng), "B-PER");
        if (unit(rng) < 0.5) emit(seq, pick(type_names_[0], rng), "I-PER");
        break;
      }
      case 1: {  // ORG: optional cue, one or two names, mandatory suffix
        if (spec_.lexicon.org_cues > 0 && unit(rng) < 0.5) emit(seq, pick(layout_.org_cues, rng), "O");
        emit(seq, pick(type_names_[1], rng), "B-ORG");
        if (unit(rng) < 0.4) emit(seq, pick(type_names_[1], rng), "I-ORG");
        emit(seq, pick(layout_.org_suffixes, rng), "I-ORG");
        break;
      }
      default: {  // LOC: cue, one name, optional second name or suffix
        emit(seq, pick(layout_.location_cues, rng), "O");
        emit(seq, pick(type_names_[2], rng), "B-LOC");
        if (unit(rng) < 0.3) emit(seq, pick(type_names_[2], rng), "I-LOC");
        if (spec_.lexicon.location_suffixes > 0 && unit(rng) < 0.4) {
          emit(seq, pick(layout_.location_suffixes, rng), "I-LOC");
        }
        break;
      }
    }
  }

  SyntheticLanguageSpec spec_;
  Layout layout_;
  std::vector<int> permutation_;
  std::vector<int> type_names_[3];
  std::string prefix_;
};

}  // namespace

Corpus generate_language(const SyntheticLanguageSpec& spec, std::size_t n_sentences) {
  if (n_sentences == 0) throw ConfigError("generate_language: n_sentences must be >= 1");
  return Language(spec).generate(n_sentences);
}

std::vector<int> word_classes(const ProtoLexiconSpec& lexicon) {
  const std::size_t counts[] = {lexicon.function_words, lexicon.content_words, lexicon.names,
                                lexicon.person_cues,    lexicon.org_cues,      lexicon.location_cues,
                                lexicon.org_suffixes + lexicon.location_suffixes};
  std::vector<int> out;
  for (int c = 0; c < kWordClasses; ++c) out.insert(out.end(), counts[c], c);
  return out;
}

std::vector<SurfaceWord> surface_lexicon(const SyntheticLanguageSpec& spec) {
  const Language lang(spec);
  std::vector<SurfaceWord> out;
  const auto n = static_cast<int>(spec.lexicon.total());
  for (int p = 0; p < n; ++p) out.push_back({lang.surface(p), p});
  return out;
}

}  // namespace metaprime
