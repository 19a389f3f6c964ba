#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "metaprime/config.hpp"
#include "metaprime/finetune.hpp"
#include "metaprime/priming.hpp"

namespace metaprime {

/// Raw corpora of one experiment plus the shared vocabulary.
struct Family {
  std::vector<Corpus> sources;
  std::vector<Corpus> targets;
  Vocabulary vocab;
  // Per vocabulary id: proto-lexicon entry shared across languages, -1 when
  // the token has no cross-lingual counterpart (always for CoNLL data).
  std::vector<int> lexical_groups;
  // Word-class tagged text for the pretraining stand-in; empty for CoNLL data.
  std::vector<EncodedSequence> pretraining;
};

// Generates the synthetic family (a pure function of the config) or loads the
// configured CoNLL files.
Family build_family(const DataConfig& data, const ModelConfig& model);

/// Encoded views used by priming and fine-tuning.
struct PreparedData {
  std::vector<SourceLanguage> sources;
  std::vector<TargetData> targets;
  EncodeStats stats;
};

PreparedData prepare_data(const Family& family, const RunConfig& config);

// Pretrained stand-in: an encoder with cross-lingually aligned token
// embeddings, briefly trained to tag word classes on family text, plus a
// fresh adapter. Depends on the data config only, never the run seed.
ParameterRegistry pretrained_init(const TaggerModel& model, const Family& family, const DataConfig& data);

PrimingConfig priming_config_for(PrimingVariant variant, const PrimingConfig& base, std::uint64_t seed);

// Runs one priming variant from `init`; PrimingVariant::None returns `init`.
PrimingResult run_priming(const TaggerModel& model, const ParameterRegistry& init, const PreparedData& data,
                          PrimingVariant variant, const RunConfig& config, std::uint64_t seed,
                          const StepSink& sink = {});

struct SettingRun {
  EvalReport report;
  FineTuneResult finetune;
};

// Fine-tunes `start` under `setting` on one target and scores the
// best-validation parameters on its test split.
SettingRun run_setting(const TaggerModel& model, const ParameterRegistry& start, FineTuneSetting setting,
                       const TargetData& target, const FineTuneConfig& config, std::uint64_t seed);

using PrimingKey = std::pair<std::uint64_t, PrimingVariant>;  // (seed, variant)

struct GridOutput {
  std::vector<EvalReport> reports;  // sorted by (setting, language, seed)
  std::map<PrimingKey, PrimingResult> primings;
};

using Progress = std::function<void(const std::string&)>;

// Every (setting, target, seed) combination; each priming variant runs once
// per seed and is shared by the settings that start from it. Primings already
// present in `reuse` (from an earlier grid with the same config) are not
// recomputed. Independent runs are spread over config.workers threads without
// affecting the results.
GridOutput run_grid(const RunConfig& config, const std::vector<FineTuneSetting>& settings,
                    const std::vector<std::string>& languages = {}, const Progress& progress = {},
                    const std::map<PrimingKey, PrimingResult>* reuse = nullptr);

// Calls fn(i) for i in [0, n) on up to `workers` threads; rethrows the first
// failure by index.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace metaprime
