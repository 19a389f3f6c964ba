#include "metaprime/priming.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "metaprime/errors.hpp"
#include "metaprime/seeding.hpp"

namespace metaprime {

std::string_view inner_mode_name(InnerMode mode) { return mode == InnerMode::PeSim ? "PE_SIM" : "FULL_MAML"; }

InnerMode inner_mode_from_name(std::string_view name) {
  if (name == "PE_SIM") return InnerMode::PeSim;
  if (name == "FULL_MAML") return InnerMode::FullMaml;
  throw ConfigError("unknown inner_mode '" + std::string(name) + "' (expected PE_SIM or FULL_MAML)");
}

void PrimingConfig::validate() const {
  std::vector<std::string> problems;
  if (!(alpha > 0.0)) problems.push_back("alpha must be > 0");
  if (!(beta > 0.0)) problems.push_back("beta must be > 0");
  if (!(alpha_full > 0.0)) problems.push_back("alpha_full must be > 0");
  if (tasks_per_outer_batch == 0) problems.push_back("tasks_per_outer_batch must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid priming config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
}

TaskSampler::TaskSampler(std::size_t n_tasks, std::size_t per_batch, std::uint64_t seed)
    : n_tasks_(n_tasks), per_batch_(std::min(per_batch, n_tasks)), rng_(derive_seed(seed, "task-sampler")) {
  if (n_tasks == 0) throw ContractError("task sampler: no tasks");
}

std::vector<std::size_t> TaskSampler::next() {
  std::vector<std::size_t> order(n_tasks_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);
  order.resize(per_batch_);
  return order;
}

PartitionNorms partition_norms(const ParameterRegistry& registry, const GradientMap& grads) {
  double sq[3] = {0.0, 0.0, 0.0};
  for (const auto& [id, g] : grads) {
    const auto* p = registry.find(id);
    if (!p) continue;
    double s = 0.0;
    for (double v : g.data()) s += v * v;
    sq[static_cast<int>(p->partition())] += s;
  }
  return {std::sqrt(sq[0]), std::sqrt(sq[1]), std::sqrt(sq[2])};
}

namespace {

double checked_loss(Var loss, std::string_view where, std::string_view task_id) {
  const double value = loss.value()[0];
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << where << ": non-finite loss " << value << " on task '" << task_id << "'";
    throw NumericError(msg.str());
  }
  return value;
}

bool meta_partition(const Parameter& p) { return p.partition() != Partition::Head; }

void accumulate(GradientMap& acc, const ParameterRegistry& registry, const GradientMap& grads,
                bool (*keep)(const Parameter&)) {
  for (const auto& [id, g] : grads) {
    if (keep && !keep(registry.get(id))) continue;
    auto [it, inserted] = acc.try_emplace(id, Tensor(g.shape()));
    auto dst = it->second.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = dst[i] + g[i];
  }
}

}  // namespace

InnerResult inner_adapt(const TaskModel& model, const ParameterRegistry& theta, MetaTask& task,
                        const PrimingConfig& config) {
  if (task.support.pool().empty()) throw DataError("inner_adapt: task '" + task.task_id + "' has no support data");
  InnerResult result{theta, {}};
  ParameterRegistry& adapted = result.adapted;
  const bool full = config.inner_mode == InnerMode::FullMaml;
  adapted.set_trainable_partitions(full, true, true);
  const double lr = config.inner_lr();
  for (std::size_t s = 0; s < config.inner_steps; ++s) {
    const Batch batch = task.support.next();
    adapted.zero_grad();
    Tape tape;
    Var loss = model.loss(tape, adapted, batch, task.task_id);
    result.support_losses.push_back(checked_loss(loss, "inner step " + std::to_string(s), task.task_id));
    sgd_step(adapted, tape.backward(loss), lr);
  }
  adapted.zero_grad();
  return result;
}

MetaGradient compute_meta_gradient(const TaskModel& model, const ParameterRegistry& theta,
                                   std::span<MetaTask* const> batch, const PrimingConfig& config) {
  if (batch.empty()) throw ContractError("meta-gradient: empty task batch");
  MetaGradient out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    MetaTask& task = *batch[i];
    InnerResult inner = inner_adapt(model, theta, task, config);
    ParameterRegistry& adapted = inner.adapted;
    adapted.set_trainable_partitions(true, true, true);

    const Batch query = task.query.next();
    Tape tape;
    Var loss = model.loss(tape, adapted, query, task.task_id);
    StepLog log;
    log.task_id = task.task_id;
    log.support_losses = std::move(inner.support_losses);
    log.query_loss = checked_loss(loss, "query", task.task_id);
    const GradientMap grads = tape.backward(loss);
    log.grad_norms = partition_norms(adapted, grads);
    out.logs.push_back(std::move(log));

    // First-order approximation: the query gradient at the adapted point is
    // applied as if it were taken at theta.
    accumulate(out.grads, adapted, grads, meta_partition);

    if (i == 0) {
      const std::string prefix = head_prefix(task.task_id);
      out.head_handoff = adapted.subset([&](const Parameter& p) {
        return p.partition() == Partition::Head && p.id().starts_with(prefix);
      });
    }
  }
  return out;
}

MetaGradient outer_step(const TaskModel& model, ParameterRegistry& theta, std::span<MetaTask* const> batch,
                        const PrimingConfig& config, AdamW& optimizer, double lr) {
  MetaGradient mg = compute_meta_gradient(model, theta, batch, config);
  optimizer.step(theta, mg.grads, lr);
  theta.assign_values(mg.head_handoff);
  for (auto& log : mg.logs) log.beta_current = lr;
  return mg;
}

void init_task_heads(const TaskModel& model, ParameterRegistry& theta, std::span<const MetaTask> tasks,
                     std::uint64_t seed) {
  Rng rng(derive_seed(seed, "source-heads"));
  for (const auto& task : tasks) model.init_head(theta, task.task_id, rng);
}

namespace {

ParameterRegistry without_heads(const ParameterRegistry& theta) {
  return theta.subset([](const Parameter& p) { return p.partition() != Partition::Head; });
}

void check_inputs(const ParameterRegistry& initial, const std::vector<MetaTask>& tasks, const PrimingConfig& config) {
  config.validate();
  if (tasks.empty()) throw ContractError("priming: at least one source task is required");
  for (const auto& p : initial) {
    if (p.partition() == Partition::Head) {
      throw ContractError("priming: initial registry must not contain heads (found '" + p.id() + "')");
    }
  }
}

template <typename Fn>
auto with_step_context(std::size_t step, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError("outer step " + std::to_string(step) + ": " + e.what());
  }
}

}  // namespace

PrimingResult prime(const TaskModel& model, const ParameterRegistry& initial, std::vector<MetaTask>& tasks,
                    const PrimingConfig& config, const StepSink& sink) {
  check_inputs(initial, tasks, config);
  ParameterRegistry theta = initial;
  init_task_heads(model, theta, tasks, config.seed);
  AdamW optimizer(config.adamw);
  TaskSampler sampler(tasks.size(), config.tasks_per_outer_batch, config.seed);

  PrimingResult result;
  for (std::size_t step = 0; step < config.outer_steps; ++step) {
    std::vector<MetaTask*> batch;
    for (std::size_t idx : sampler.next()) batch.push_back(&tasks[idx]);
    const double lr = linear_schedule(config.beta, step, config.outer_steps);
    MetaGradient mg = with_step_context(step, [&] { return outer_step(model, theta, batch, config, optimizer, lr); });
    for (auto& log : mg.logs) {
      log.outer_step = step;
      if (sink) sink(log);
      result.log.push_back(std::move(log));
    }
  }
  result.primed = without_heads(theta);
  return result;
}

GradientMap joint_gradient(const TaskModel& model, ParameterRegistry& registry,
                           std::span<const std::pair<std::string, Batch>> batches, std::vector<double>* losses) {
  GradientMap total;
  for (const auto& [task_id, batch] : batches) {
    Tape tape;
    Var loss = model.loss(tape, registry, batch, task_id);
    const double value = checked_loss(loss, "joint loss", task_id);
    if (losses) losses->push_back(value);
    accumulate(total, registry, tape.backward(loss), nullptr);
  }
  return total;
}

PrimingResult ft_prime(const TaskModel& model, const ParameterRegistry& initial, std::vector<MetaTask>& tasks,
                       const PrimingConfig& config, const StepSink& sink) {
  check_inputs(initial, tasks, config);
  ParameterRegistry theta = initial;
  init_task_heads(model, theta, tasks, config.seed);
  theta.set_trainable_partitions(true, true, true);

  std::vector<BatchCursor> cursors;
  for (const auto& task : tasks) {
    std::vector<EncodedSequence> pool = task.support.pool();
    pool.insert(pool.end(), task.query.pool().begin(), task.query.pool().end());
    cursors.emplace_back(std::move(pool), task.support.batch_size(), derive_seed(config.seed, "ft-prime/" + task.task_id));
  }

  AdamW optimizer(config.adamw);
  TaskSampler sampler(tasks.size(), config.tasks_per_outer_batch, config.seed);
  PrimingResult result;
  for (std::size_t step = 0; step < config.outer_steps; ++step) {
    std::vector<std::pair<std::string, Batch>> batches;
    for (std::size_t idx : sampler.next()) batches.emplace_back(tasks[idx].task_id, cursors[idx].next());
    const double lr = linear_schedule(config.beta, step, config.outer_steps);
    std::vector<double> losses;
    theta.zero_grad();
    const GradientMap grads = with_step_context(step, [&] { return joint_gradient(model, theta, batches, &losses); });
    optimizer.step(theta, grads, lr);
    const PartitionNorms norms = partition_norms(theta, grads);
    for (std::size_t i = 0; i < batches.size(); ++i) {
      StepLog log;
      log.outer_step = step;
      log.task_id = batches[i].first;
      log.query_loss = losses[i];
      log.grad_norms = norms;
      log.beta_current = lr;
      if (sink) sink(log);
      result.log.push_back(std::move(log));
    }
  }
  result.primed = without_heads(theta);
  return result;
}

}  // namespace metaprime
