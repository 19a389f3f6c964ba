#pragma once

// Small shared fixtures for the unit and acceptance tests.

#include <cmath>
#include <string>
#include <vector>

#include "metaprime/autodiff.hpp"
#include "metaprime/config.hpp"
#include "metaprime/errors.hpp"
#include "metaprime/experiment.hpp"
#include "metaprime/metrics.hpp"
#include "metaprime/model.hpp"
#include "metaprime/priming.hpp"
#include "metaprime/seeding.hpp"
#include "metaprime/tasks.hpp"

namespace mpt {

using namespace metaprime;

// Per-coordinate regression target read off a batch, so every batch gives a
// different loss: t_i = 0.1 * mean(label) + 0.05 * i.
inline std::vector<double> toy_targets(const Batch& batch, std::size_t k) {
  double total = 0.0;
  std::size_t n = 0;
  for (int l : batch.labels) {
    if (l >= 0) {
      total += l;
      ++n;
    }
  }
  const double mean = n ? total / static_cast<double>(n) : 0.0;
  std::vector<double> t(k);
  for (std::size_t i = 0; i < k; ++i) t[i] = 0.1 * mean + 0.05 * static_cast<double>(i);
  return t;
}

// loss = 0.5 * sum_i (p_i * a_i + h_i - t_i)^2 with p pretrained, a
// lightweight and h the task head.
class ToyModel final : public TaskModel {
 public:
  explicit ToyModel(std::size_t k = 3) : k_(k) {}

  std::size_t k() const { return k_; }

  ParameterRegistry init(std::uint64_t seed) const {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> p(k_), a(k_);
    for (auto& x : p) x = u(rng);
    for (auto& x : a) x = u(rng);
    ParameterRegistry r;
    r.add("p", Tensor::vector(p), Partition::Pretrained);
    r.add("a", Tensor::vector(a), Partition::Lightweight);
    return r;
  }

  Var loss(Tape& tape, ParameterRegistry& registry, const Batch& batch, std::string_view task_id) const override {
    if (batch.batch == 0) throw ContractError("toy loss: empty batch");
    Var p = tape.param(registry.get("p"));
    Var a = tape.param(registry.get("a"));
    Var h = tape.param(registry.get(head_prefix(task_id) + "weight"));
    std::vector<double> t = toy_targets(batch, k_);
    for (auto& x : t) x = -x;
    Var r = add(add(mul(p, a), h), tape.constant(Tensor::vector(t)));
    return scale(sum(mul(r, r)), 0.5);
  }

  void init_head(ParameterRegistry& registry, std::string_view task_id, Rng& rng) const override {
    const std::string prefix = head_prefix(task_id);
    registry.remove_if([&](const Parameter& p) { return p.id().starts_with(prefix); });
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::vector<double> h(k_);
    for (auto& x : h) x = u(rng);
    registry.add(prefix + "weight", Tensor::vector(h), Partition::Head);
  }

 private:
  std::size_t k_;
};

// Random labelled sequences (ids in [2, vocab), labels in [0, 7)).
inline std::vector<EncodedSequence> random_sequences(std::size_t n, std::size_t vocab, std::uint64_t seed,
                                                     std::size_t min_len = 2, std::size_t max_len = 8) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int> tok(2, static_cast<int>(vocab) - 1);
  std::uniform_int_distribution<int> lab(0, 6);
  std::vector<EncodedSequence> out(n);
  for (auto& s : out) {
    const std::size_t L = len(rng);
    for (std::size_t i = 0; i < L; ++i) {
      s.ids.push_back(tok(rng));
      s.labels.push_back(lab(rng));
    }
  }
  return out;
}

inline std::vector<MetaTask> toy_tasks(std::size_t n_tasks, std::uint64_t seed, std::size_t vocab = 50) {
  std::vector<MetaTask> tasks;
  for (std::size_t i = 0; i < n_tasks; ++i) {
    MetaTask t;
    t.task_id = "lang" + std::to_string(i);
    t.support = BatchCursor(random_sequences(12, vocab, derive_seed(seed, 2 * i)), 4, derive_seed(seed, 100 + i));
    t.query = BatchCursor(random_sequences(12, vocab, derive_seed(seed, 2 * i + 1)), 4, derive_seed(seed, 200 + i));
    tasks.push_back(std::move(t));
  }
  return tasks;
}

// The desk architecture (2 layers, d_model 32, bottleneck 8) over a small
// vocabulary.
inline ModelConfig desk_model(std::size_t vocab = 64) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 32;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 64;
  c.max_seq_len = 16;
  c.n_labels = 7;
  c.adapter_bottleneck = 8;
  return c;
}

inline ParameterRegistry random_init(const TaggerModel& model, std::uint64_t seed, bool adapter = true) {
  ParameterRegistry r;
  Rng rng(seed);
  model.init_encoder(r, rng);
  if (adapter) model.init_adapter(r, rng);
  return r;
}

// Same encoder with a nonzero adapter up-projection, so gradients reach every
// adapter weight.
inline void perturb_adapter(ParameterRegistry& r, std::uint64_t seed, double scale = 0.1) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& p : r) {
    if (p.partition() == Partition::Lightweight) {
      for (double& x : p.value().data()) x += u(rng);
    }
  }
}

inline bool partition_bit_equal(const ParameterRegistry& a, const ParameterRegistry& b, Partition part) {
  for (const auto& p : a) {
    if (p.partition() != part) continue;
    const auto* q = b.find(p.id());
    if (!q || !p.value().bit_equal(q->value())) return false;
  }
  return true;
}

// A run config small enough for unit tests: a few sentences, a few steps.
inline RunConfig tiny_run_config() {
  RunConfig c;
  c.model.vocab_size = 256;
  c.model.max_seq_len = 24;
  c.priming.beta = 1e-3;
  c.priming.outer_steps = 4;
  c.finetune.lr_full = 1e-3;
  c.finetune.steps = 6;
  c.finetune.eval_every = 3;
  c.data.split = SplitSpec{16, 16, 16, 8, 12};
  c.data.pretrain_steps = 4;
  c.data.pretrain_sentences = 8;
  c.seeds = {0};
  c.out = "tiny";
  return c;
}

using Vec = std::vector<double>;

inline Vec values(const ParameterRegistry& r, const std::string& id) {
  const auto d = r.get(id).value().data();
  return Vec(d.begin(), d.end());
}

// First-order meta-gradient of the toy loss, derived by hand:
// r = p*a + h - t, dL/dp = r*a, dL/da = r*p, dL/dh = r. Support batches adapt
// a and h (and p under FULL_MAML) by SGD; the query gradient at the adapted
// point is summed over tasks.
struct Oracle {
  GradientMap grads;
  Vec handoff;
};

inline Oracle two_pass(const ToyModel& toy, const ParameterRegistry& theta, std::vector<MetaTask> tasks,
                const std::vector<std::size_t>& order, const PrimingConfig& cfg) {
  const std::size_t k = toy.k();
  Oracle o;
  Vec gp(k, 0.0), ga(k, 0.0);
  for (std::size_t n = 0; n < order.size(); ++n) {
    MetaTask& task = tasks[order[n]];
    Vec p = values(theta, "p"), a = values(theta, "a"), h = values(theta, head_prefix(task.task_id) + "weight");
    auto residual = [&](const Batch& b) {
      const Vec t = toy_targets(b, k);
      Vec r(k);
      for (std::size_t i = 0; i < k; ++i) r[i] = (p[i] * a[i] + h[i]) + (-t[i]);
      return r;
    };
    const bool full = cfg.inner_mode == InnerMode::FullMaml;
    const double lr = full ? cfg.alpha_full : cfg.alpha;
    for (std::size_t s = 0; s < cfg.inner_steps; ++s) {
      const Vec r = residual(task.support.next());
      for (std::size_t i = 0; i < k; ++i) {
        const double dp = r[i] * a[i], da = r[i] * p[i];
        if (full) p[i] = p[i] - lr * dp;
        a[i] = a[i] - lr * da;
        h[i] = h[i] - lr * r[i];
      }
    }
    const Vec r = residual(task.query.next());
    for (std::size_t i = 0; i < k; ++i) {
      gp[i] = gp[i] + r[i] * a[i];
      ga[i] = ga[i] + r[i] * p[i];
    }
    if (n == 0) o.handoff = h;
  }
  o.grads.emplace("p", Tensor::vector(gp));
  o.grads.emplace("a", Tensor::vector(ga));
  return o;
}

using Labels = std::vector<std::string>;

// Every [i, j) is tested directly against the definition of an entity: it
// opens at B-X or at an I-X that cannot continue an X span, continues with
// I-X only, and is not followed by I-X.
inline std::vector<Span> brute_force_spans(const Labels& l) {
  std::vector<Span> out;
  const std::size_t n = l.size();
  for (const std::string type : {"PER", "ORG", "LOC"}) {
    const std::string B = "B-" + type, I = "I-" + type;
    for (std::size_t i = 0; i < n; ++i) {
      const bool continues = i > 0 && (l[i - 1] == B || l[i - 1] == I);
      const bool opens = l[i] == B || (l[i] == I && !continues);
      if (!opens) continue;
      for (std::size_t j = i + 1; j <= n; ++j) {
        bool inside = true;
        for (std::size_t m = i + 1; m < j; ++m) inside = inside && l[m] == I;
        if (inside && (j == n || l[j] != I)) out.push_back({type, i, j});
      }
    }
  }
  return out;
}

struct Counts {
  double gold = 0, pred = 0, hit = 0;
};

inline Counts brute_force_counts(const std::vector<Labels>& gold, const std::vector<Labels>& pred) {
  Counts c;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto g = brute_force_spans(gold[s]);
    const auto p = brute_force_spans(pred[s]);
    c.gold += static_cast<double>(g.size());
    c.pred += static_cast<double>(p.size());
    for (const auto& x : p) {
      for (const auto& y : g) {
        if (x == y) c.hit += 1;
      }
    }
  }
  return c;
}

// Target whose tag is a fixed function of the token, so every setting can
// learn something within a few dozen steps.
inline TargetData learnable_target(const std::string& lang, std::uint64_t seed) {
  auto make = [&](std::size_t n, std::uint64_t s) {
    auto seqs = random_sequences(n, 64, s, 3, 8);
    for (auto& q : seqs) {
      for (std::size_t i = 0; i < q.ids.size(); ++i) q.labels[i] = q.ids[i] % 5 == 0 ? 1 : 0;
    }
    return seqs;
  };
  return {lang, make(40, seed), make(20, seed + 1), make(20, seed + 2)};
}

// Plain multi-task training written out from the definition: fresh heads
// that never train, the sampler's task draws, the summed query loss, AdamW
// with linear decay. Returns the encoder and adapter.
inline ParameterRegistry multitask_adamw(const TaskModel& model, const ParameterRegistry& init,
                                         std::vector<MetaTask>& tasks, const PrimingConfig& cfg) {
  ParameterRegistry theta = init;
  init_task_heads(model, theta, tasks, cfg.seed);
  theta.set_trainable_partitions(true, true, false);
  TaskSampler sampler(tasks.size(), cfg.tasks_per_outer_batch, cfg.seed);
  AdamW opt(cfg.adamw);
  for (std::size_t step = 0; step < cfg.outer_steps; ++step) {
    GradientMap total;
    for (std::size_t idx : sampler.next()) {
      Tape tape;
      const GradientMap g = tape.backward(model.loss(tape, theta, tasks[idx].query.next(), tasks[idx].task_id));
      for (const auto& [id, t] : g) {
        auto [it, fresh] = total.try_emplace(id, Tensor(t.shape()));
        for (std::size_t i = 0; i < t.size(); ++i) it->second[i] = it->second[i] + t[i];
      }
    }
    theta.zero_grad();
    opt.step(theta, total, linear_schedule(cfg.beta, step, cfg.outer_steps));
  }
  theta.remove_if([](const Parameter& p) { return p.partition() == Partition::Head; });
  return theta;
}

}  // namespace mpt
