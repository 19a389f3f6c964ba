#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "metaprime/autodiff.hpp"
#include "metaprime/seeding.hpp"
#include "metaprime/vocab.hpp"

namespace metaprime {

enum class Nonlinearity { Relu, Gelu };

std::string_view nonlinearity_name(Nonlinearity n);
Nonlinearity nonlinearity_from_name(std::string_view name);

struct ModelConfig {
  std::size_t vocab_size = 200;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
  std::size_t max_seq_len = 32;
  std::size_t n_labels = 7;
  std::size_t adapter_bottleneck = 8;
  Nonlinearity adapter_nonlinearity = Nonlinearity::Relu;
  bool adapter_residual = true;

  // Throws ConfigError on violated invariants.
  void validate() const;
  // Stable "key=value;" rendering, the input of hash().
  std::string canonical() const;
  std::uint64_t hash() const;

  bool operator==(const ModelConfig&) const = default;
};

// Token-classification dimensions of multilingual BERT-base with a
// bottleneck-64 adapter and a 7-tag head.
ModelConfig mbert_like_config();

/// Per-partition parameter counts computed from the configuration alone.
struct ParameterCounts {
  std::uint64_t pretrained = 0;
  std::uint64_t lightweight = 0;  // adapter
  std::uint64_t head = 0;         // one task head
};

ParameterCounts count_parameters(const ModelConfig& config);

/// Which partitions a fine-tuning setting trains, and whether the adapter
/// exists at all.
struct TrainablePartitions {
  bool pretrained = false;
  bool lightweight = false;
  bool head = true;
  bool adapter_present = true;
};

/// Exact ratio trainable/total; `total` covers every partition present.
struct Fraction {
  std::uint64_t trainable = 0;
  std::uint64_t total = 0;

  double value() const { return total ? static_cast<double>(trainable) / static_cast<double>(total) : 0.0; }
  double percent() const { return 100.0 * value(); }
};

Fraction count_trainable_fraction(const ModelConfig& config, const TrainablePartitions& partitions);

// Renders a fraction as a compact percentage: "100%", "0.06%", "3e-3%".
std::string format_percent(const Fraction& fraction);

std::string head_prefix(std::string_view task_id);

/// Common surface for models trained by the priming and fine-tuning loops.
class TaskModel {
 public:
  virtual ~TaskModel() = default;
  // Scalar loss of task `task_id` on `batch`.
  virtual Var loss(Tape& tape, ParameterRegistry& registry, const Batch& batch, std::string_view task_id) const = 0;
  // Adds (or re-initializes) the head of `task_id`.
  virtual void init_head(ParameterRegistry& registry, std::string_view task_id, Rng& rng) const = 0;
};

/// Token tagger h(g(f(x))): transformer encoder f (PRETRAINED), a single
/// bottleneck adapter g after the last layer (LIGHTWEIGHT) and one linear head
/// per task (HEAD). When the registry holds no adapter weights g is skipped.
class TaggerModel final : public TaskModel {
 public:
  explicit TaggerModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  void init_encoder(ParameterRegistry& registry, Rng& rng) const;
  // Down-projection uniform in +-scale, up-projection and biases zero, so the
  // residual adapter starts as the identity.
  void init_adapter(ParameterRegistry& registry, Rng& rng, double scale = 1e-2) const;
  void init_head(ParameterRegistry& registry, std::string_view task_id, Rng& rng) const override;

  static bool has_adapter(const ParameterRegistry& registry);
  static void remove_adapter(ParameterRegistry& registry);
  static void remove_heads(ParameterRegistry& registry);

  // [batch*seq_len, d_model]; padding keys are masked out of attention.
  Var encode(Tape& tape, ParameterRegistry& registry, const Batch& batch) const;
  Var adapt(Tape& tape, ParameterRegistry& registry, Var hidden) const;
  Var classify(Tape& tape, ParameterRegistry& registry, Var adapted, std::string_view task_id) const;
  Var logits(Tape& tape, ParameterRegistry& registry, const Batch& batch, std::string_view task_id) const;
  Var loss(Tape& tape, ParameterRegistry& registry, const Batch& batch, std::string_view task_id) const override;

  // Argmax tag ids per sequence, padding dropped.
  std::vector<std::vector<int>> predict(ParameterRegistry& registry, const Batch& batch,
                                        std::string_view task_id) const;

 private:
  ModelConfig config_;
};

/// Stand-in for multilingual pretraining: token-embedding rows that share a
/// lexical group (e.g. translations of one proto-word) are drawn around a
/// common group vector, so equivalent words start close together. Rows with
/// group -1 are left untouched. `noise` scales the per-token deviation.
void align_token_embeddings(ParameterRegistry& registry, std::span<const int> lexical_groups, double noise,
                            Rng& rng);

}  // namespace metaprime
