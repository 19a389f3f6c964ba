#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metaprime/model.hpp"
#include "metaprime/optimizer.hpp"
#include "metaprime/tasks.hpp"

namespace metaprime {

/// Inner-loop flavour. PeSim adapts only the adapter and head, simulating
/// parameter-efficient fine-tuning; FullMaml also adapts the encoder, as plain
/// MAML would.
enum class InnerMode { PeSim, FullMaml };

std::string_view inner_mode_name(InnerMode mode);
InnerMode inner_mode_from_name(std::string_view name);

struct PrimingConfig {
  double alpha = 0.03;       // inner SGD learning rate (PeSim)
  double beta = 5e-5;        // initial outer AdamW learning rate
  std::size_t inner_steps = 5;
  InnerMode inner_mode = InnerMode::PeSim;
  double alpha_full = 1e-4;  // inner learning rate for every partition under FullMaml
  std::size_t tasks_per_outer_batch = 2;
  std::size_t outer_steps = 200;
  std::uint64_t seed = 0;
  AdamWConfig adamw;

  // Throws ConfigError on violated invariants.
  void validate() const;
  double inner_lr() const { return inner_mode == InnerMode::FullMaml ? alpha_full : alpha; }

  bool operator==(const PrimingConfig&) const = default;
};

/// Samples `per_batch` distinct task indices per outer step in a random order.
class TaskSampler {
 public:
  TaskSampler(std::size_t n_tasks, std::size_t per_batch, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::size_t n_tasks_;
  std::size_t per_batch_;
  Rng rng_;
};

/// L2 norms of a gradient restricted to each partition.
struct PartitionNorms {
  double pretrained = 0.0;
  double lightweight = 0.0;
  double head = 0.0;
};

PartitionNorms partition_norms(const ParameterRegistry& registry, const GradientMap& grads);

/// One log record per (outer step, task).
struct StepLog {
  std::size_t outer_step = 0;
  std::string task_id;
  std::vector<double> support_losses;  // one per inner step
  double query_loss = 0.0;
  PartitionNorms grad_norms;
  double beta_current = 0.0;
};

using StepSink = std::function<void(const StepLog&)>;

struct InnerResult {
  ParameterRegistry adapted;
  std::vector<double> support_losses;
};

/// Copies `theta` and takes `inner_steps` SGD steps on consecutive support
/// batches of `task`. PeSim touches only LIGHTWEIGHT and HEAD parameters;
/// FullMaml updates every partition at alpha_full. Throws DataError on an
/// empty support pool and NumericError on a non-finite loss.
InnerResult inner_adapt(const TaskModel& model, const ParameterRegistry& theta, MetaTask& task,
                        const PrimingConfig& config);

/// First-order meta-gradient of one outer step, before the optimizer sees it.
struct MetaGradient {
  // Sum over tasks (batch order) of query-set gradients taken at each task's
  // adapted parameters; PRETRAINED and LIGHTWEIGHT entries only.
  GradientMap grads;
  // Adapted head of the first task in the batch.
  ParameterRegistry head_handoff;
  std::vector<StepLog> logs;
};

MetaGradient compute_meta_gradient(const TaskModel& model, const ParameterRegistry& theta,
                                   std::span<MetaTask* const> batch, const PrimingConfig& config);

/// One outer step: meta-gradient, AdamW on the encoder and adapter at
/// learning rate `lr`, then the first task's adapted head replaces its head
/// in `theta`. Throws ContractError for an empty batch.
MetaGradient outer_step(const TaskModel& model, ParameterRegistry& theta, std::span<MetaTask* const> batch,
                        const PrimingConfig& config, AdamW& optimizer, double lr);

/// Fresh head per task, seeded from config.seed. Shared by both priming loops.
void init_task_heads(const TaskModel& model, ParameterRegistry& theta, std::span<const MetaTask> tasks,
                     std::uint64_t seed);

struct PrimingResult {
  ParameterRegistry primed;  // PRETRAINED and LIGHTWEIGHT parameters only
  std::vector<StepLog> log;
};

/// Meta priming. `initial` holds the encoder and adapter; task heads are
/// created internally and dropped from the result.
PrimingResult prime(const TaskModel& model, const ParameterRegistry& initial, std::vector<MetaTask>& tasks,
                    const PrimingConfig& config, const StepSink& sink = {});

/// Gradient of the summed loss over (task, batch) pairs, accumulated in order.
GradientMap joint_gradient(const TaskModel& model, ParameterRegistry& registry,
                           std::span<const std::pair<std::string, Batch>> batches, std::vector<double>* losses = nullptr);

/// Fine-tuning-based priming baseline: AdamW on every partition (one head per
/// source language) over the union of support and query data, with the same
/// step budget, task sampling and schedule as prime().
PrimingResult ft_prime(const TaskModel& model, const ParameterRegistry& initial, std::vector<MetaTask>& tasks,
                       const PrimingConfig& config, const StepSink& sink = {});

}  // namespace metaprime
