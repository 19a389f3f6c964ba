#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metaprime/finetune.hpp"
#include "metaprime/model.hpp"
#include "metaprime/priming.hpp"
#include "metaprime/synthetic.hpp"
#include "metaprime/tasks.hpp"

namespace metaprime {

/// Synthetic language family: every language realizes the same proto-lexicon
/// under its own surface forms.
struct FamilySpec {
  std::vector<std::string> sources{"src_a", "src_b"};
  std::vector<std::string> targets{"tgt_a", "tgt_b", "tgt_c"};
  double entity_rate = 0.25;
  double mean_length = 10.0;
  double name_coverage = 0.6;
  double stray_cue_rate = 0.05;
  ProtoLexiconSpec lexicon;
  std::uint64_t seed = 7;

  bool operator==(const FamilySpec&) const = default;
};

struct DataConfig {
  FamilySpec family;
  // language -> CoNLL path; when non-empty they replace the synthetic family.
  std::map<std::string, std::string> conll_sources;
  std::map<std::string, std::string> conll_targets;
  SplitSpec split;
  std::size_t support_batch = 8;
  std::size_t query_batch = 8;
  // Spread of token embeddings around their shared cross-lingual center.
  double alignment_noise = 0.3;
  // Word-class tagging that stands in for encoder pretraining (synthetic
  // family only; 0 steps keeps the encoder random apart from embeddings).
  std::size_t pretrain_steps = 600;
  std::size_t pretrain_sentences = 300;  // per language
  std::size_t pretrain_batch = 16;
  double pretrain_lr = 1e-3;

  bool synthetic() const { return conll_sources.empty() && conll_targets.empty(); }
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  PrimingConfig priming;
  FineTuneConfig finetune;
  DataConfig data;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string out = "runs/default";
  std::size_t workers = 1;

  // Throws ConfigError listing every violated constraint.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Missing keys keep their defaults. Unknown keys and type mismatches raise a
// ConfigError that lists each offending key path.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& config);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace metaprime
