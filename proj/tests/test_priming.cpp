#include <doctest.h>

#include <cmath>

#include "metaprime/errors.hpp"
#include "metaprime/optimizer.hpp"
#include "metaprime/priming.hpp"
#include "test_support.hpp"

using namespace metaprime;

namespace {

ParameterRegistry toy_theta(const mpt::ToyModel& toy, std::vector<MetaTask>& tasks, std::uint64_t seed) {
  ParameterRegistry theta = toy.init(seed);
  init_task_heads(toy, theta, tasks, seed);
  return theta;
}

PrimingConfig toy_config(std::size_t S, InnerMode mode = InnerMode::PeSim) {
  PrimingConfig cfg;
  cfg.inner_steps = S;
  cfg.inner_mode = mode;
  cfg.alpha = 0.1;
  cfg.alpha_full = 0.05;
  cfg.beta = 1e-2;
  return cfg;
}

}  // namespace

TEST_CASE("scalar toy inner loop shrinks by (1 - alpha) per step") {
  // 0.5 * (p*a + h)^2 at p = 1, a = 1, h = 0 with target 0.
  mpt::ToyModel toy(1);
  ParameterRegistry theta;
  theta.add("p", Tensor::vector({1.0}), Partition::Pretrained);
  theta.add("a", Tensor::vector({1.0}), Partition::Lightweight);
  theta.add("head.z.weight", Tensor::vector({0.0}), Partition::Head);
  std::vector<EncodedSequence> zeros(2);
  for (auto& s : zeros) s = {{2, 3}, {0, 0}};
  MetaTask task{"z", BatchCursor(zeros, 2, 1), BatchCursor(zeros, 2, 2)};
  PrimingConfig cfg;
  cfg.alpha = 0.03;
  cfg.inner_steps = 1;
  InnerResult one = inner_adapt(toy, theta, task, cfg);
  CHECK(one.adapted.get("a").value()[0] == doctest::Approx(0.97).epsilon(1e-15));
  CHECK(one.adapted.get("head.z.weight").value()[0] == doctest::Approx(-0.03).epsilon(1e-15));

  // The head moves too, so five steps follow the coupled (a, h) recurrence.
  cfg.inner_steps = 5;
  InnerResult five = inner_adapt(toy, theta, task, cfg);
  double a = 1.0, h = 0.0;
  for (int s = 0; s < 5; ++s) {
    const double r = a + h;
    a -= 0.03 * r;
    h -= 0.03 * r;
  }
  CHECK(five.adapted.get("a").value()[0] == doctest::Approx(a).epsilon(1e-14));
  CHECK(five.support_losses.size() == 5);
  CHECK(five.support_losses.front() == doctest::Approx(0.5));
}

TEST_CASE("PE_SIM inner loop never moves the encoder; FULL_MAML does") {
  mpt::ToyModel toy;
  auto tasks = mpt::toy_tasks(2, 1);
  ParameterRegistry theta = toy_theta(toy, tasks, 3);
  InnerResult pe = inner_adapt(toy, theta, tasks[0], toy_config(5));
  CHECK(mpt::partition_bit_equal(theta, pe.adapted, Partition::Pretrained));
  CHECK_FALSE(mpt::partition_bit_equal(theta, pe.adapted, Partition::Lightweight));
  InnerResult full = inner_adapt(toy, theta, tasks[1], toy_config(5, InnerMode::FullMaml));
  CHECK_FALSE(mpt::partition_bit_equal(theta, full.adapted, Partition::Pretrained));
}

TEST_CASE("zero inner steps leave the parameters unchanged") {
  mpt::ToyModel toy;
  auto tasks = mpt::toy_tasks(1, 2);
  ParameterRegistry theta = toy_theta(toy, tasks, 3);
  InnerResult r = inner_adapt(toy, theta, tasks[0], toy_config(0));
  CHECK(r.adapted.values_bit_equal(theta));
  CHECK(r.support_losses.empty());
}

TEST_CASE("empty support pool is a data error") {
  mpt::ToyModel toy;
  auto tasks = mpt::toy_tasks(1, 2);
  ParameterRegistry theta = toy_theta(toy, tasks, 3);
  tasks[0].support = BatchCursor({}, 4, 1);
  CHECK_THROWS_AS(inner_adapt(toy, theta, tasks[0], toy_config(2)), DataError);
}

TEST_CASE("meta-gradient equals the two-pass computation bit for bit") {
  mpt::ToyModel toy(4);
  for (InnerMode mode : {InnerMode::PeSim, InnerMode::FullMaml}) {
    for (std::size_t S : {1u, 3u, 5u}) {
      auto tasks = mpt::toy_tasks(3, 10 + S);
      ParameterRegistry theta = toy_theta(toy, tasks, 4);
      const PrimingConfig cfg = toy_config(S, mode);
      const std::vector<std::size_t> order{2, 0};
      const mpt::Oracle o = mpt::two_pass(toy, theta, tasks, order, cfg);

      std::vector<MetaTask*> batch{&tasks[2], &tasks[0]};
      ParameterRegistry applied = theta;
      AdamW opt(cfg.adamw);
      const MetaGradient mg = outer_step(toy, applied, batch, cfg, opt, cfg.beta);
      REQUIRE(mg.grads.size() == 2);
      CHECK(mg.grads.at("p").bit_equal(o.grads.at("p")));
      CHECK(mg.grads.at("a").bit_equal(o.grads.at("a")));
      CHECK(applied.get("head.lang2.weight").value().bit_equal(Tensor::vector(o.handoff)));
      CHECK(applied.get("head.lang0.weight").value().bit_equal(theta.get("head.lang0.weight").value()));

      // The update applied to theta is AdamW on exactly that gradient.
      ParameterRegistry expected = theta;
      AdamW ref(cfg.adamw);
      ref.step(expected, o.grads, cfg.beta);
      CHECK(applied.get("p").value().bit_equal(expected.get("p").value()));
      CHECK(applied.get("a").value().bit_equal(expected.get("a").value()));
      REQUIRE(mg.logs.size() == 2);
      CHECK(mg.logs[0].task_id == "lang2");
      CHECK(mg.logs[0].support_losses.size() == S);
    }
  }
}

TEST_CASE("a duplicated task doubles the meta-gradient") {
  mpt::ToyModel toy;
  auto tasks = mpt::toy_tasks(1, 5);
  ParameterRegistry theta = toy_theta(toy, tasks, 6);
  auto twin = tasks;
  std::vector<MetaTask> pair{tasks[0], twin[0]};
  std::vector<MetaTask*> one{&tasks[0]};
  std::vector<MetaTask*> two{&pair[0], &pair[1]};
  const PrimingConfig cfg = toy_config(3);
  const MetaGradient g1 = compute_meta_gradient(toy, theta, one, cfg);
  const MetaGradient g2 = compute_meta_gradient(toy, theta, two, cfg);
  for (const auto& [id, g] : g1.grads) {
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g2.grads.at(id)[i] == 2.0 * g[i]);
  }
}

TEST_CASE("empty task batch is a contract error") {
  mpt::ToyModel toy;
  auto tasks = mpt::toy_tasks(1, 5);
  ParameterRegistry theta = toy_theta(toy, tasks, 6);
  std::vector<MetaTask*> none;
  CHECK_THROWS_AS(compute_meta_gradient(toy, theta, none, toy_config(1)), ContractError);
  std::vector<MetaTask> no_tasks;
  CHECK_THROWS_AS(prime(toy, toy.init(1), no_tasks, toy_config(1)), ContractError);
  CHECK_THROWS_AS(prime(toy, theta, tasks, toy_config(1)), ContractError);  // heads in the initial registry
}

TEST_CASE("with S = 0 priming is plain multi-task AdamW on the encoder and adapter") {
  const TaggerModel model(mpt::desk_model(48));
  const ParameterRegistry init = mpt::random_init(model, 21);
  auto tasks = mpt::toy_tasks(3, 22, 48);
  auto reference_tasks = tasks;

  PrimingConfig cfg;
  cfg.inner_steps = 0;
  cfg.outer_steps = 50;
  cfg.beta = 1e-3;
  cfg.seed = 23;
  const PrimingResult primed = prime(model, init, tasks, cfg);

  ParameterRegistry theta = mpt::multitask_adamw(model, init, reference_tasks, cfg);
  CHECK(primed.primed.size() == theta.size());
  CHECK(primed.primed.values_bit_equal(theta));
  CHECK_FALSE(primed.primed.values_bit_equal(init));
}

TEST_CASE("zero outer steps return the initialization") {
  const TaggerModel model(mpt::desk_model(48));
  const ParameterRegistry init = mpt::random_init(model, 21);
  auto tasks = mpt::toy_tasks(2, 22, 48);
  PrimingConfig cfg;
  cfg.outer_steps = 0;
  const PrimingResult r = prime(model, init, tasks, cfg);
  CHECK(r.primed.values_bit_equal(init));
  CHECK(r.primed.size() == init.size());
  CHECK(r.log.empty());
}

TEST_CASE("priming is deterministic and drops source heads") {
  const TaggerModel model(mpt::desk_model(48));
  const ParameterRegistry init = mpt::random_init(model, 1);
  PrimingConfig cfg;
  cfg.outer_steps = 5;
  cfg.inner_steps = 2;
  cfg.beta = 1e-3;
  cfg.seed = 4;
  auto t1 = mpt::toy_tasks(2, 3, 48);
  auto t2 = t1;
  std::vector<StepLog> streamed;
  const PrimingResult a = prime(model, init, t1, cfg, [&](const StepLog& l) { streamed.push_back(l); });
  const PrimingResult b = prime(model, init, t2, cfg);
  CHECK(a.primed.values_bit_equal(b.primed));
  CHECK(a.primed.count(Partition::Head) == 0);
  CHECK(a.log.size() == 10);
  CHECK(streamed.size() == 10);
  CHECK(a.log.back().outer_step == 4);
  CHECK(a.log.front().beta_current == doctest::Approx(1e-3));
  CHECK(a.log.back().beta_current == doctest::Approx(2e-4));
}

TEST_CASE("PE_SIM meta-gradient reaches the encoder even though the inner loop freezes it") {
  const TaggerModel model(mpt::desk_model(48));
  ParameterRegistry theta = mpt::random_init(model, 1);
  mpt::perturb_adapter(theta, 2);
  auto tasks = mpt::toy_tasks(2, 3, 48);
  init_task_heads(model, theta, tasks, 5);
  std::vector<MetaTask*> batch{&tasks[0], &tasks[1]};
  const MetaGradient mg = compute_meta_gradient(model, theta, batch, toy_config(2));
  CHECK(mg.grads.count("encoder.token_embedding") == 1);
  CHECK(mg.grads.count("adapter.up.weight") == 1);
  for (const auto& [id, g] : mg.grads) CHECK_FALSE(id.starts_with("head."));
  CHECK(mg.logs[0].grad_norms.pretrained > 0.0);
  CHECK(mg.logs[0].grad_norms.head > 0.0);
}

TEST_CASE("joint gradient is the gradient of the summed loss") {
  const TaggerModel model(mpt::desk_model(48));
  ParameterRegistry theta = mpt::random_init(model, 1);
  mpt::perturb_adapter(theta, 2);
  auto tasks = mpt::toy_tasks(2, 3, 48);
  init_task_heads(model, theta, tasks, 5);
  std::vector<std::pair<std::string, Batch>> batches{{"lang0", tasks[0].query.next()}, {"lang1", tasks[1].query.next()}};
  std::vector<double> losses;
  const GradientMap joint = joint_gradient(model, theta, batches, &losses);
  Tape tape;
  Var total = add(model.loss(tape, theta, batches[0].second, "lang0"), model.loss(tape, theta, batches[1].second, "lang1"));
  const GradientMap ref = tape.backward(total);
  CHECK(losses.size() == 2);
  CHECK(losses[0] + losses[1] == doctest::Approx(total.value()[0]).epsilon(1e-14));
  REQUIRE(joint.size() == ref.size());
  for (const auto& [id, g] : ref) {
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(joint.at(id)[i] == doctest::Approx(g[i]).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("fine-tuning priming trains the encoder and lands elsewhere than meta priming") {
  const TaggerModel model(mpt::desk_model(48));
  ParameterRegistry init = mpt::random_init(model, 1);
  mpt::perturb_adapter(init, 2);
  PrimingConfig cfg;
  cfg.outer_steps = 5;
  cfg.inner_steps = 2;
  cfg.beta = 1e-3;
  auto t1 = mpt::toy_tasks(2, 3, 48);
  auto t2 = t1;
  const PrimingResult ft = ft_prime(model, init, t1, cfg);
  const PrimingResult meta = prime(model, init, t2, cfg);
  CHECK(ft.primed.count(Partition::Head) == 0);
  CHECK_FALSE(mpt::partition_bit_equal(init, ft.primed, Partition::Pretrained));
  CHECK_FALSE(mpt::partition_bit_equal(ft.primed, meta.primed, Partition::Lightweight));
  CHECK(ft.log.size() == 10);
}

TEST_CASE("task sampler draws distinct tasks deterministically") {
  TaskSampler a(5, 2, 9), b(5, 2, 9);
  for (int i = 0; i < 20; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    REQUIRE(x.size() == 2);
    CHECK(x[0] != x[1]);
    CHECK(x[0] < 5);
  }
  CHECK(TaskSampler(1, 4, 0).next().size() == 1);
}

TEST_CASE("priming lowers the query loss") {
  const RunConfig cfg = mpt::tiny_run_config();
  const TaggerModel model(cfg.model);
  const Family family = build_family(cfg.data, cfg.model);
  const PreparedData data = prepare_data(family, cfg);
  const ParameterRegistry init = pretrained_init(model, family, cfg.data);
  double first = 0.0, last = 0.0;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    RunConfig rc = cfg;
    rc.priming.outer_steps = 60;
    rc.priming.beta = 3e-3;
    const PrimingResult r = run_priming(model, init, data, PrimingVariant::MetaPeSim, rc, seed);
    const std::size_t n = r.log.size(), w = 20;
    for (std::size_t i = 0; i < w; ++i) {
      first += r.log[i].query_loss;
      last += r.log[n - w + i].query_loss;
    }
  }
  CHECK(last < first);
}

TEST_CASE("config validation") {
  PrimingConfig cfg;
  cfg.alpha = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(inner_mode_from_name("FULL_MAML") == InnerMode::FullMaml);
  CHECK_THROWS_AS(inner_mode_from_name("other"), ConfigError);
  CHECK(linear_schedule(1.0, 0, 4) == 1.0);
  CHECK(linear_schedule(1.0, 3, 4) == 0.25);
}
