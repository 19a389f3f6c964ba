#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "metaprime/metrics.hpp"
#include "metaprime/model.hpp"
#include "metaprime/optimizer.hpp"

namespace metaprime {

enum class FineTuneSetting {
  FullFt,
  HeadTuning,
  AdapterTuning,
  MetaPrimeAt,
  FtPrimeAt,
  MamlLoopPrimeAt,
  OneStepPrimeAt,
  MetaPrimeFullFt,
  MamlLoopPrimeFullFt,
  NoPrimeFullFt,
};

std::string_view setting_name(FineTuneSetting setting);
FineTuneSetting setting_from_name(std::string_view name);

/// Initialization a setting starts from.
enum class PrimingVariant {
  None,        // pretrained encoder, fresh adapter
  MetaPeSim,   // meta priming, PE-simulating inner loop
  FtPrime,     // fine-tuning-based priming
  MetaFull,    // meta priming with the encoder updated in the inner loop
  MetaOneStep, // meta priming with a single inner step
};

std::string_view priming_variant_name(PrimingVariant variant);

struct SettingSpec {
  TrainablePartitions partitions;
  PrimingVariant priming = PrimingVariant::None;
  bool full_ft = false;  // selects the full fine-tuning learning rate
};

SettingSpec setting_spec(FineTuneSetting setting);

// Rows of the settings x languages table, in display order.
std::vector<FineTuneSetting> table_settings();
// The four priming x fine-tuning cells plus the unprimed full-FT reference.
std::vector<FineTuneSetting> matrix_settings();

struct FineTuneConfig {
  double lr_full = 5e-5;   // FULL_FT-style settings
  double lr_light = 1e-3;  // adapter and head tuning
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  std::size_t eval_every = 50;
  AdamWConfig adamw;

  void validate() const;
  bool operator==(const FineTuneConfig&) const = default;
};

/// Labelled target data, already encoded.
struct TargetData {
  std::string language;
  std::vector<EncodedSequence> train;
  std::vector<EncodedSequence> validation;
  std::vector<EncodedSequence> test;
};

struct ValidationPoint {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean over steps since the previous point; 0 at step 0
  double validation_f1 = 0.0;
};

struct FineTuneResult {
  ParameterRegistry trained;  // best-validation parameters, head included
  std::vector<ValidationPoint> trace;
  std::size_t best_step = 0;
  double best_validation_f1 = 0.0;
};

/// Fine-tunes `init` (encoder, plus adapter unless the setting drops it) on a
/// target language with a fresh head named after the language. Only the
/// setting's trainable partitions change. Throws NumericError on a non-finite
/// loss and ContractError when the setting needs an adapter `init` lacks.
FineTuneResult finetune(const TaggerModel& model, const ParameterRegistry& init, FineTuneSetting setting,
                        const TargetData& data, const FineTuneConfig& config, std::uint64_t seed);

F1Scores evaluate(const TaggerModel& model, ParameterRegistry& registry, std::string_view task_id,
                  const std::vector<EncodedSequence>& sequences, const LabelScheme& scheme,
                  std::size_t batch_size = 32);

/// One row of the results JSONL.
struct EvalReport {
  FineTuneSetting setting = FineTuneSetting::FullFt;
  std::string language;
  std::uint64_t seed = 0;
  F1Scores scores;
  Fraction trainable_fraction;
  std::size_t best_step = 0;
};

}  // namespace metaprime
