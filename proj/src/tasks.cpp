#include "metaprime/tasks.hpp"

#include "metaprime/errors.hpp"
#include "metaprime/seeding.hpp"

namespace metaprime {

namespace {

Corpus slice(const Corpus& corpus, std::size_t begin, std::size_t count, const std::string& suffix) {
  Corpus out;
  out.name = corpus.name + suffix;
  out.sequences.assign(corpus.sequences.begin() + static_cast<std::ptrdiff_t>(begin),
                       corpus.sequences.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return out;
}

}  // namespace

std::vector<MetaTask> build_meta_dataset(std::span<const SourceLanguage> sources, const SplitSpec& split,
                                         const MetaBatching& batching) {
  if (split.support == 0 || split.query == 0) throw ConfigError("meta dataset: support and query sizes must be > 0");
  std::vector<MetaTask> tasks;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& src = sources[i];
    if (src.sequences.size() < split.support + split.query) {
      throw DataError("meta dataset: source '" + src.language + "' has " + std::to_string(src.sequences.size()) +
                      " sequences, needs " + std::to_string(split.support + split.query));
    }
    std::vector<EncodedSequence> support(src.sequences.begin(),
                                         src.sequences.begin() + static_cast<std::ptrdiff_t>(split.support));
    std::vector<EncodedSequence> query(
        src.sequences.begin() + static_cast<std::ptrdiff_t>(split.support),
        src.sequences.begin() + static_cast<std::ptrdiff_t>(split.support + split.query));
    tasks.push_back(MetaTask{
        src.language,
        BatchCursor(std::move(support), batching.support_batch, derive_seed(batching.seed, "support/" + src.language)),
        BatchCursor(std::move(query), batching.query_batch, derive_seed(batching.seed, "query/" + src.language)),
    });
  }
  return tasks;
}

CorpusSplits split_target(const Corpus& corpus, const SplitSpec& split) {
  const std::size_t need = split.train + split.validation + split.test;
  if (corpus.size() < need) {
    throw DataError("target '" + corpus.name + "' has " + std::to_string(corpus.size()) + " sequences, needs " +
                    std::to_string(need));
  }
  return {slice(corpus, 0, split.train, ".train"), slice(corpus, split.train, split.validation, ".validation"),
          slice(corpus, split.train + split.validation, split.test, ".test")};
}

std::pair<Corpus, Corpus> split_source(const Corpus& corpus, const SplitSpec& split) {
  if (corpus.size() < split.support + split.query) {
    throw DataError("source '" + corpus.name + "' has " + std::to_string(corpus.size()) + " sequences, needs " +
                    std::to_string(split.support + split.query));
  }
  return {slice(corpus, 0, split.support, ".support"), slice(corpus, split.support, split.query, ".query")};
}

}  // namespace metaprime
