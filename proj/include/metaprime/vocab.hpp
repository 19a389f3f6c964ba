#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "metaprime/bio.hpp"
#include "metaprime/corpus.hpp"

namespace metaprime {

/// Whitespace-token vocabulary. Id 0 is UNK and id 1 is PAD; the rest follow
/// first occurrence in corpus order.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;

  Vocabulary();

  // Adds tokens from each corpus in order until `max_size` ids exist; later
  // tokens map to UNK.
  static Vocabulary build(std::span<const Corpus* const> corpora, std::size_t max_size);

  int add(const std::string& token);
  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.contains(token); }

  // One token per line, id order.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct EncodedSequence {
  std::vector<int> ids;
  std::vector<int> labels;
};

struct EncodeStats {
  std::size_t truncated = 0;  // sequences cut to max_len
  std::size_t unknown = 0;    // tokens mapped to UNK
};

std::vector<EncodedSequence> encode_corpus(const Corpus& corpus, const Vocabulary& vocab, const LabelScheme& scheme,
                                           std::size_t max_len, EncodeStats* stats = nullptr);

/// Packed, right-padded batch: `batch` rows of `seq_len` positions.
struct Batch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<int> ids;              // PAD at padding positions
  std::vector<int> labels;           // -1 at padding positions
  std::vector<std::uint8_t> padding; // 1 at padding positions

  std::size_t tokens() const;  // non-padding positions
};

Batch make_batch(std::span<const EncodedSequence* const> sequences);
Batch make_batch(std::span<const EncodedSequence> sequences);

/// Cycles over a fixed sequence pool in mini-batches, reshuffling the order at
/// the start of every pass. Fully determined by (pool, batch_size, seed).
class BatchCursor {
 public:
  BatchCursor() = default;
  BatchCursor(std::vector<EncodedSequence> pool, std::size_t batch_size, std::uint64_t seed);

  // Throws DataError on an empty pool.
  Batch next();

  const std::vector<EncodedSequence>& pool() const { return pool_; }
  std::size_t batch_size() const { return batch_size_; }

 private:
  void reshuffle();

  std::vector<EncodedSequence> pool_;
  std::size_t batch_size_ = 1;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace metaprime
