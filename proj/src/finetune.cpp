#include "metaprime/finetune.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "metaprime/errors.hpp"
#include "metaprime/seeding.hpp"

namespace metaprime {

namespace {

constexpr std::array<std::pair<FineTuneSetting, std::string_view>, 10> kSettingNames{{
    {FineTuneSetting::FullFt, "FULL_FT"},
    {FineTuneSetting::HeadTuning, "HEAD_TUNING"},
    {FineTuneSetting::AdapterTuning, "ADAPTER_TUNING"},
    {FineTuneSetting::MetaPrimeAt, "META_PRIME_AT"},
    {FineTuneSetting::FtPrimeAt, "FT_PRIME_AT"},
    {FineTuneSetting::MamlLoopPrimeAt, "MAML_LOOP_PRIME_AT"},
    {FineTuneSetting::OneStepPrimeAt, "ONE_STEP_PRIME_AT"},
    {FineTuneSetting::MetaPrimeFullFt, "META_PRIME_FULLFT"},
    {FineTuneSetting::MamlLoopPrimeFullFt, "MAML_LOOP_PRIME_FULLFT"},
    {FineTuneSetting::NoPrimeFullFt, "NOPRIME_FULLFT"},
}};

}  // namespace

std::string_view setting_name(FineTuneSetting setting) {
  for (const auto& [s, name] : kSettingNames) {
    if (s == setting) return name;
  }
  return "?";
}

FineTuneSetting setting_from_name(std::string_view name) {
  for (const auto& [s, n] : kSettingNames) {
    if (n == name) return s;
  }
  throw ConfigError("unknown fine-tuning setting '" + std::string(name) + "'");
}

std::string_view priming_variant_name(PrimingVariant variant) {
  switch (variant) {
    case PrimingVariant::None: return "none";
    case PrimingVariant::MetaPeSim: return "meta_pe_sim";
    case PrimingVariant::FtPrime: return "ft_prime";
    case PrimingVariant::MetaFull: return "meta_full";
    case PrimingVariant::MetaOneStep: return "meta_one_step";
  }
  return "?";
}

SettingSpec setting_spec(FineTuneSetting setting) {
  const TrainablePartitions at{false, true, true, true};
  const TrainablePartitions full{true, true, true, true};
  switch (setting) {
    case FineTuneSetting::FullFt: return {{true, false, true, false}, PrimingVariant::None, true};
    case FineTuneSetting::HeadTuning: return {{false, false, true, true}, PrimingVariant::None, false};
    case FineTuneSetting::AdapterTuning: return {at, PrimingVariant::None, false};
    case FineTuneSetting::MetaPrimeAt: return {at, PrimingVariant::MetaPeSim, false};
    case FineTuneSetting::FtPrimeAt: return {at, PrimingVariant::FtPrime, false};
    case FineTuneSetting::MamlLoopPrimeAt: return {at, PrimingVariant::MetaFull, false};
    case FineTuneSetting::OneStepPrimeAt: return {at, PrimingVariant::MetaOneStep, false};
    case FineTuneSetting::MetaPrimeFullFt: return {full, PrimingVariant::MetaPeSim, true};
    case FineTuneSetting::MamlLoopPrimeFullFt: return {full, PrimingVariant::MetaFull, true};
    case FineTuneSetting::NoPrimeFullFt: return {full, PrimingVariant::None, true};
  }
  throw ContractError("unhandled setting");
}

std::vector<FineTuneSetting> table_settings() {
  return {FineTuneSetting::FullFt,      FineTuneSetting::HeadTuning,      FineTuneSetting::AdapterTuning,
          FineTuneSetting::MetaPrimeAt, FineTuneSetting::FtPrimeAt,       FineTuneSetting::MamlLoopPrimeAt,
          FineTuneSetting::OneStepPrimeAt};
}

std::vector<FineTuneSetting> matrix_settings() {
  return {FineTuneSetting::MetaPrimeAt, FineTuneSetting::MetaPrimeFullFt, FineTuneSetting::MamlLoopPrimeAt,
          FineTuneSetting::MamlLoopPrimeFullFt, FineTuneSetting::NoPrimeFullFt};
}

void FineTuneConfig::validate() const {
  std::string problems;
  if (!(lr_full > 0.0)) problems += " lr_full must be > 0;";
  if (!(lr_light > 0.0)) problems += " lr_light must be > 0;";
  if (batch_size == 0) problems += " batch_size must be >= 1;";
  if (eval_every == 0) problems += " eval_every must be >= 1;";
  if (!problems.empty()) throw ConfigError("invalid fine-tuning config:" + problems);
}

F1Scores evaluate(const TaggerModel& model, ParameterRegistry& registry, std::string_view task_id,
                  const std::vector<EncodedSequence>& sequences, const LabelScheme& scheme, std::size_t batch_size) {
  std::vector<std::vector<int>> gold;
  std::vector<std::vector<int>> predicted;
  for (std::size_t start = 0; start < sequences.size(); start += batch_size) {
    const std::size_t stop = std::min(sequences.size(), start + batch_size);
    const Batch batch = make_batch(std::span(sequences).subspan(start, stop - start));
    for (auto& row : model.predict(registry, batch, task_id)) predicted.push_back(std::move(row));
    for (std::size_t i = start; i < stop; ++i) gold.push_back(sequences[i].labels);
  }
  return micro_f1(gold, predicted, scheme);
}

FineTuneResult finetune(const TaggerModel& model, const ParameterRegistry& init, FineTuneSetting setting,
                        const TargetData& data, const FineTuneConfig& config, std::uint64_t seed) {
  config.validate();
  if (data.train.empty()) throw DataError("finetune: no training data for '" + data.language + "'");
  const SettingSpec spec = setting_spec(setting);
  const LabelScheme scheme = LabelScheme::wikiann();

  ParameterRegistry theta = init;
  TaggerModel::remove_heads(theta);
  if (!spec.partitions.adapter_present) {
    TaggerModel::remove_adapter(theta);
  } else if (!TaggerModel::has_adapter(theta)) {
    throw ContractError(std::string("finetune: setting ") + std::string(setting_name(setting)) +
                        " needs adapter weights in the initial checkpoint");
  }
  Rng head_rng(derive_seed(seed, "target-head/" + data.language));
  model.init_head(theta, data.language, head_rng);
  theta.set_trainable_partitions(spec.partitions.pretrained, spec.partitions.lightweight, spec.partitions.head);

  const double base_lr = spec.full_ft ? config.lr_full : config.lr_light;
  BatchCursor cursor(data.train, config.batch_size, derive_seed(seed, "target-batches/" + data.language));
  AdamW optimizer(config.adamw);

  FineTuneResult result;
  auto validate_at = [&](std::size_t step, double loss) {
    const double f1 = evaluate(model, theta, data.language, data.validation, scheme).f1;
    result.trace.push_back({step, loss, f1});
    if (step == 0 || f1 > result.best_validation_f1) {
      result.best_validation_f1 = f1;
      result.best_step = step;
      result.trained = theta;
    }
  };
  validate_at(0, 0.0);

  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Batch batch = cursor.next();
    Tape tape;
    Var loss = model.loss(tape, theta, batch, data.language);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      throw NumericError("finetune " + std::string(setting_name(setting)) + "/" + data.language + " step " +
                         std::to_string(step) + ": non-finite loss " + std::to_string(value));
    }
    loss_sum += value;
    ++loss_count;
    theta.zero_grad();
    optimizer.step(theta, tape.backward(loss), linear_schedule(base_lr, step, config.steps));
    const std::size_t done = step + 1;
    if (done % config.eval_every == 0 || done == config.steps) {
      validate_at(done, loss_sum / static_cast<double>(loss_count));
      loss_sum = 0.0;
      loss_count = 0;
    }
  }
  result.trained.zero_grad();
  return result;
}

}  // namespace metaprime
