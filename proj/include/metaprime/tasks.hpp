#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metaprime/corpus.hpp"
#include "metaprime/vocab.hpp"

namespace metaprime {

struct SplitSpec {
  // Per priming source language.
  std::size_t support = 800;
  std::size_t query = 800;
  // Per fine-tuning target language.
  std::size_t train = 200;
  std::size_t validation = 200;
  std::size_t test = 600;

  bool operator==(const SplitSpec&) const = default;
};

/// One meta-training task: a source language with disjoint support (inner
/// loop) and query (outer loop) pools, each served as cycling mini-batches.
struct MetaTask {
  std::string task_id;
  BatchCursor support;
  BatchCursor query;
};

struct SourceLanguage {
  std::string language;
  std::vector<EncodedSequence> sequences;
};

struct MetaBatching {
  std::size_t support_batch = 8;
  std::size_t query_batch = 8;
  std::uint64_t seed = 0;
};

// The first `support` sequences of each source feed the support pool and the
// next `query` the query pool. Throws DataError when a source is too small.
std::vector<MetaTask> build_meta_dataset(std::span<const SourceLanguage> sources, const SplitSpec& split,
                                         const MetaBatching& batching);

struct CorpusSplits {
  Corpus train;
  Corpus validation;
  Corpus test;
};

// Consecutive, disjoint train/validation/test slices of a target corpus.
CorpusSplits split_target(const Corpus& corpus, const SplitSpec& split);

// Consecutive support/query slices of a source corpus.
std::pair<Corpus, Corpus> split_source(const Corpus& corpus, const SplitSpec& split);

}  // namespace metaprime
