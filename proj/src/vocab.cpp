#include "metaprime/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "metaprime/errors.hpp"

namespace metaprime {

Vocabulary::Vocabulary() {
  add("<unk>");
  add("<pad>");
}

Vocabulary Vocabulary::build(std::span<const Corpus* const> corpora, std::size_t max_size) {
  Vocabulary vocab;
  for (const Corpus* corpus : corpora)
    for (const auto& seq : corpus->sequences)
      for (const auto& tok : seq.tokens) {
        if (vocab.size() >= max_size) return vocab;
        vocab.add(tok);
      }
  return vocab;
}

int Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError("cannot write vocabulary " + path.string());
  for (const auto& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  if (lines.size() < 2 || lines[0] != "<unk>" || lines[1] != "<pad>") {
    throw ParseError("vocabulary " + path.string() + " must start with <unk>, <pad>");
  }
  Vocabulary vocab;
  for (std::size_t i = 2; i < lines.size(); ++i) vocab.add(lines[i]);
  return vocab;
}

std::vector<EncodedSequence> encode_corpus(const Corpus& corpus, const Vocabulary& vocab, const LabelScheme& scheme,
                                           std::size_t max_len, EncodeStats* stats) {
  std::vector<EncodedSequence> out;
  out.reserve(corpus.size());
  EncodeStats local;
  for (const auto& seq : corpus.sequences) {
    EncodedSequence enc;
    const std::size_t n = std::min(seq.tokens.size(), max_len);
    if (n < seq.tokens.size()) ++local.truncated;
    for (std::size_t i = 0; i < n; ++i) {
      const int id = vocab.id(seq.tokens[i]);
      if (id == Vocabulary::kUnk) ++local.unknown;
      enc.ids.push_back(id);
      enc.labels.push_back(scheme.id(seq.labels[i]));
    }
    if (!enc.ids.empty()) out.push_back(std::move(enc));
  }
  if (stats) *stats = local;
  return out;
}

std::size_t Batch::tokens() const {
  return static_cast<std::size_t>(std::count(padding.begin(), padding.end(), std::uint8_t{0}));
}

Batch make_batch(std::span<const EncodedSequence* const> sequences) {
  Batch b;
  b.batch = sequences.size();
  for (const auto* s : sequences) b.seq_len = std::max(b.seq_len, s->ids.size());
  const std::size_t n = b.batch * b.seq_len;
  b.ids.assign(n, Vocabulary::kPad);
  b.labels.assign(n, -1);
  b.padding.assign(n, 1);
  for (std::size_t r = 0; r < sequences.size(); ++r) {
    const auto& s = *sequences[r];
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
      b.ids[r * b.seq_len + i] = s.ids[i];
      b.labels[r * b.seq_len + i] = s.labels[i];
      b.padding[r * b.seq_len + i] = 0;
    }
  }
  return b;
}

Batch make_batch(std::span<const EncodedSequence> sequences) {
  std::vector<const EncodedSequence*> ptrs;
  for (const auto& s : sequences) ptrs.push_back(&s);
  return make_batch(std::span<const EncodedSequence* const>(ptrs));
}

BatchCursor::BatchCursor(std::vector<EncodedSequence> pool, std::size_t batch_size, std::uint64_t seed)
    : pool_(std::move(pool)), batch_size_(std::max<std::size_t>(batch_size, 1)), rng_(seed) {
  reshuffle();
}

void BatchCursor::reshuffle() {
  order_.resize(pool_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

Batch BatchCursor::next() {
  if (pool_.empty()) throw DataError("batch cursor: empty sequence pool");
  std::vector<const EncodedSequence*> picked;
  const std::size_t want = std::min(batch_size_, pool_.size());
  while (picked.size() < want) {
    if (pos_ == order_.size()) reshuffle();
    picked.push_back(&pool_[order_[pos_++]]);
  }
  return make_batch(std::span<const EncodedSequence* const>(picked));
}

}  // namespace metaprime
