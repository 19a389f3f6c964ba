#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "metaprime/bio.hpp"
#include "metaprime/corpus.hpp"
#include "metaprime/errors.hpp"
#include "metaprime/synthetic.hpp"
#include "metaprime/tasks.hpp"
#include "metaprime/vocab.hpp"
#include "test_support.hpp"

using namespace metaprime;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(METAPRIME_SOURCE_DIR) / "tests" / "fixtures";

std::map<std::string, int> entity_counts(const Corpus& c) {
  std::map<std::string, int> out;
  for (const auto& s : c.sequences) {
    for (const auto& l : s.labels) {
      if (l.starts_with("B-")) ++out[l.substr(2)];
    }
  }
  return out;
}

SyntheticLanguageSpec spec_for(const std::string& id, std::uint64_t seed) {
  SyntheticLanguageSpec s;
  s.language_id = id;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("empty CoNLL file yields an empty corpus") {
  const Corpus c = load_conll(kFixtures / "empty.conll", LabelScheme::wikiann());
  CHECK(c.empty());
}

TEST_CASE("two-sentence CoNLL fixture") {
  const Corpus c = load_conll(kFixtures / "two_sentences.conll", LabelScheme::wikiann());
  REQUIRE(c.size() == 2);
  CHECK(c.name == "two_sentences");
  CHECK(c.sequences[0].tokens.size() == 5);
  CHECK(c.sequences[1].labels == std::vector<std::string>{"O", "O"});
  const auto counts = entity_counts(c);
  CHECK(counts.at("PER") == 1);
  CHECK(counts.at("LOC") == 1);
  CHECK_FALSE(counts.contains("ORG"));
  CHECK(c.repairs == 0);
}

TEST_CASE("sentence-initial I- tag is repaired to B-") {
  const Corpus c = load_conll(kFixtures / "repair.conll", LabelScheme::wikiann());
  REQUIRE(c.size() == 1);
  CHECK(c.sequences[0].labels == std::vector<std::string>{"B-PER", "I-PER", "O"});
  CHECK(c.repairs == 1);
}

TEST_CASE("unknown tag names its line") {
  try {
    load_conll(kFixtures / "unknown_tag.conll", LabelScheme::wikiann());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  CHECK_THROWS_AS(load_conll(kFixtures / "missing.conll", LabelScheme::wikiann()), FileError);
  std::istringstream no_tab("token-without-tag\n");
  CHECK_THROWS_AS(parse_conll(no_tab, LabelScheme::wikiann()), ParseError);
}

TEST_CASE("CoNLL write and parse round-trip") {
  const Corpus c = generate_language(spec_for("rt", 3), 20);
  std::stringstream buf;
  write_conll(buf, c);
  const Corpus back = parse_conll(buf, LabelScheme::wikiann());
  CHECK(back.sequences == c.sequences);
}

TEST_CASE("BIO helpers") {
  CHECK(is_valid_bio({"B-PER", "I-PER", "O", "B-LOC"}));
  CHECK_FALSE(is_valid_bio({"O", "I-PER"}));
  CHECK_FALSE(is_valid_bio({"B-ORG", "I-PER"}));
  std::vector<std::string> l{"I-ORG", "I-ORG", "B-PER", "I-LOC"};
  CHECK(repair_bio(l) == 2);
  CHECK(l == std::vector<std::string>{"B-ORG", "I-ORG", "B-PER", "B-LOC"});
  CHECK_THROWS_AS(parse_bio("X-PER"), ParseError);
  const LabelScheme s = LabelScheme::wikiann();
  CHECK(s.size() == 7);
  CHECK(s.tag(0) == "O");
  CHECK(s.id("I-LOC") == s.inside_of("LOC"));
  CHECK_THROWS_AS(s.id("B-MISC"), ParseError);
}

TEST_CASE("synthetic generator is a pure function of its spec") {
  const auto spec = spec_for("lx", 11);
  const Corpus a = generate_language(spec, 50);
  const Corpus b = generate_language(spec, 50);
  CHECK(a.sequences == b.sequences);
  CHECK(generate_language(spec_for("lx", 12), 50).sequences != a.sequences);
  for (const auto& s : a.sequences) {
    CHECK(s.tokens.size() == s.labels.size());
    CHECK(is_valid_bio(s.labels));
  }
  const auto counts = entity_counts(a);
  CHECK(counts.contains("PER"));
  CHECK(counts.contains("ORG"));
  CHECK(counts.contains("LOC"));
}

TEST_CASE("entity rate zero gives only O tags") {
  auto spec = spec_for("lz", 1);
  spec.entity_rate = 0.0;
  for (const auto& s : generate_language(spec, 40).sequences) {
    for (const auto& l : s.labels) CHECK(l == "O");
  }
}

TEST_CASE("languages of a family have disjoint surface vocabularies") {
  std::set<std::string> seen_a, seen_b;
  for (const auto& w : surface_lexicon(spec_for("aa", 1))) seen_a.insert(w.token);
  for (const auto& w : surface_lexicon(spec_for("bb", 2))) seen_b.insert(w.token);
  CHECK(seen_a.size() == ProtoLexiconSpec{}.total());
  for (const auto& t : seen_a) CHECK_FALSE(seen_b.contains(t));
  const auto classes = word_classes(ProtoLexiconSpec{});
  CHECK(classes.size() == ProtoLexiconSpec{}.total());
  for (int c : classes) CHECK((c >= 0 && c < kWordClasses));
}

TEST_CASE("vocabulary reserves UNK and PAD and respects its cap") {
  const Corpus c = load_conll(kFixtures / "two_sentences.conll", LabelScheme::wikiann());
  const Corpus* list[] = {&c};
  const Vocabulary v = Vocabulary::build(list, 5);
  CHECK(v.size() == 5);
  CHECK(v.id("<unk>") == Vocabulary::kUnk);
  CHECK(v.id("<pad>") == Vocabulary::kPad);
  CHECK(v.id("Maria") == 2);
  CHECK(v.id("Riga") == Vocabulary::kUnk);

  const fs::path tmp = fs::temp_directory_path() / "metaprime_vocab_test.txt";
  v.save(tmp);
  const Vocabulary back = Vocabulary::load(tmp);
  CHECK(back.size() == v.size());
  CHECK(back.token(4) == v.token(4));
  fs::remove(tmp);
}

TEST_CASE("encoding truncates and counts unknowns") {
  const Corpus c = load_conll(kFixtures / "two_sentences.conll", LabelScheme::wikiann());
  const Corpus* list[] = {&c};
  const Vocabulary v = Vocabulary::build(list, 100);
  EncodeStats stats;
  const auto enc = encode_corpus(c, v, LabelScheme::wikiann(), 3, &stats);
  REQUIRE(enc.size() == 2);
  CHECK(enc[0].ids.size() == 3);
  CHECK(enc[1].ids.size() == 2);
  CHECK(stats.truncated == 1);
  CHECK(stats.unknown == 0);
  CHECK(enc[0].labels[0] == LabelScheme::wikiann().begin_of("PER"));
}

TEST_CASE("batches pad to the longest sequence") {
  const auto seqs = mpt::random_sequences(3, 20, 1, 2, 6);
  const Batch b = make_batch(std::span<const EncodedSequence>(seqs));
  std::size_t longest = 0, tokens = 0;
  for (const auto& s : seqs) {
    longest = std::max(longest, s.ids.size());
    tokens += s.ids.size();
  }
  CHECK(b.seq_len == longest);
  CHECK(b.tokens() == tokens);
  for (std::size_t i = 0; i < b.ids.size(); ++i) {
    if (b.padding[i]) {
      CHECK(b.ids[i] == Vocabulary::kPad);
      CHECK(b.labels[i] == -1);
    }
  }
}

TEST_CASE("batch cursor visits every sequence once per pass") {
  const auto seqs = mpt::random_sequences(10, 1000, 2, 1, 1);
  BatchCursor cur(seqs, 3, 5), twin(seqs, 3, 5);
  std::multiset<int> seen;
  for (int i = 0; i < 3; ++i) {
    const Batch b = cur.next();
    CHECK(b.ids == twin.next().ids);
    for (int id : b.ids) seen.insert(id);
  }
  const Batch last = cur.next();
  seen.insert(last.ids.front());
  std::multiset<int> all;
  for (const auto& s : seqs) all.insert(s.ids[0]);
  CHECK(seen == all);
  CHECK_THROWS_AS(BatchCursor({}, 2, 1).next(), DataError);
}

TEST_CASE("meta dataset: one task per source with disjoint support and query") {
  std::vector<SourceLanguage> sources(2);
  for (std::size_t i = 0; i < 2; ++i) {
    sources[i].language = i ? "beta" : "alpha";
    for (int j = 0; j < 10; ++j) sources[i].sequences.push_back({{100 * static_cast<int>(i) + j + 2}, {0}});
  }
  SplitSpec split;
  split.support = 4;
  split.query = 5;
  const auto tasks = build_meta_dataset(sources, split, {2, 2, 1});
  REQUIRE(tasks.size() == 2);
  CHECK(tasks[0].task_id == "alpha");
  CHECK(tasks[0].support.pool().size() == 4);
  CHECK(tasks[0].query.pool().size() == 5);
  std::set<int> support_ids;
  for (const auto& s : tasks[1].support.pool()) support_ids.insert(s.ids[0]);
  for (const auto& s : tasks[1].query.pool()) CHECK_FALSE(support_ids.contains(s.ids[0]));

  split.query = 7;
  CHECK_THROWS_AS(build_meta_dataset(sources, split, {}), DataError);
}

TEST_CASE("target splits are consecutive and disjoint") {
  const Corpus c = generate_language(spec_for("tt", 4), 30);
  const CorpusSplits s = split_target(c, SplitSpec{1, 1, 10, 5, 15});
  CHECK(s.train.size() == 10);
  CHECK(s.validation.sequences.front() == c.sequences[10]);
  CHECK(s.test.sequences.back() == c.sequences[29]);
  CHECK_THROWS_AS(split_target(c, SplitSpec{1, 1, 10, 10, 11}), DataError);
}
