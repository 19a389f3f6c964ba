// Acceptance checks. Usage: acceptance [criterion numbers...] (default: all).
// Prints one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "metaprime/checkpoint.hpp"
#include "metaprime/gradcheck.hpp"
#include "metaprime/report.hpp"
#include "test_support.hpp"

using namespace metaprime;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

const fs::path kDesk = fs::path(METAPRIME_SOURCE_DIR) / "configs" / "desk.json";
const fs::path kSmoke = fs::path(METAPRIME_SOURCE_DIR) / "configs" / "smoke.json";

void note(const std::string& s) { std::cerr << "  " << s << std::endl; }

// 1. every parameter of the desk architecture against central differences.
Outcome gradient_soundness() {
  const RunConfig desk = load_run_config(kDesk);
  const TaggerModel model(desk.model);
  ParameterRegistry r = mpt::random_init(model, 11);
  mpt::perturb_adapter(r, 12);
  Rng rng(13);
  model.init_head(r, "t", rng);
  const auto seqs = mpt::random_sequences(2, desk.model.vocab_size, 14, 4, 6);
  const Batch batch = make_batch(std::span<const EncodedSequence>(seqs));
  const auto t0 = Clock::now();
  GradCheckOptions opt;
  opt.epsilon = 1e-5;
  opt.tolerance = 1e-4;
  const GradCheckReport rep = finite_difference_check(
      [&](Tape& tape, ParameterRegistry& reg) { return model.loss(tape, reg, batch, "t"); }, r, opt);
  const double secs = seconds_since(t0);
  std::size_t scalars = 0;
  for (const auto& p : r) scalars += p.value().size();
  std::ostringstream d;
  d << rep.entries.size() << " tensors / " << scalars << " scalars, max rel error " << rep.max_rel_error << ", "
    << fmt("%.1f", secs) << " s";
  for (const auto& f : rep.failures) d << "; failed " << f;
  return {rep.passed() && rep.entries.size() == r.size() && secs < 120.0, d.str()};
}

// 2. frozen partitions stay bit-identical.
Outcome freezing_invariants() {
  const TaggerModel model(mpt::desk_model());
  ParameterRegistry theta = mpt::random_init(model, 21);
  mpt::perturb_adapter(theta, 22);
  auto tasks = mpt::toy_tasks(3, 23, 64);
  init_task_heads(model, theta, tasks, 24);
  Rng rng(25);
  std::uniform_int_distribution<std::size_t> pick_task(0, tasks.size() - 1), pick_steps(1, 5);
  std::uniform_real_distribution<double> pick_lr(1e-3, 0.1);
  std::size_t inner_bad = 0, inner_steps = 0, moved = 0;
  for (int trial = 0; trial < 100; ++trial) {
    PrimingConfig cfg;
    cfg.inner_steps = pick_steps(rng);
    cfg.alpha = pick_lr(rng);
    const InnerResult r = inner_adapt(model, theta, tasks[pick_task(rng)], cfg);
    inner_steps += cfg.inner_steps;
    if (!mpt::partition_bit_equal(theta, r.adapted, Partition::Pretrained)) ++inner_bad;
    if (!mpt::partition_bit_equal(theta, r.adapted, Partition::Lightweight)) ++moved;
  }

  ParameterRegistry init = theta;
  TaggerModel::remove_heads(init);
  FineTuneConfig ft;
  ft.steps = 100;
  ft.eval_every = 100;
  std::size_t ft_bad = 0, ft_trained = 0, n_settings = 0;
  for (auto setting : table_settings()) {
    const SettingSpec spec = setting_spec(setting);
    if (spec.full_ft) continue;
    ++n_settings;
    const FineTuneResult r = finetune(model, init, setting, mpt::learnable_target("tgt", 30 + n_settings), ft, 40 + n_settings);
    bool ok = true;
    if (!spec.partitions.pretrained) ok = ok && mpt::partition_bit_equal(init, r.trained, Partition::Pretrained);
    if (!spec.partitions.lightweight) ok = ok && mpt::partition_bit_equal(init, r.trained, Partition::Lightweight);
    if (!ok) ++ft_bad;
    if (r.best_step == 100) ++ft_trained;
  }
  std::ostringstream d;
  d << "PE_SIM inner loops: " << inner_bad << "/100 moved the encoder (" << inner_steps << " SGD steps, adapter moved in "
    << moved << "); PE settings: " << ft_bad << "/" << n_settings << " moved a frozen partition over 100 steps ("
    << ft_trained << " kept the final step)";
  return {inner_bad == 0 && ft_bad == 0 && moved == 100, d.str()};
}

// 3. first-order meta-gradient oracle and the S = 0 reduction.
Outcome meta_gradient_oracle() {
  const mpt::ToyModel toy(4);
  std::size_t cases = 0, exact = 0;
  for (InnerMode mode : {InnerMode::PeSim, InnerMode::FullMaml}) {
    for (std::size_t S : {1u, 2u, 5u}) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto tasks = mpt::toy_tasks(3, 50 + seed + 10 * S);
        ParameterRegistry theta = toy.init(seed);
        init_task_heads(toy, theta, tasks, seed);
        PrimingConfig cfg;
        cfg.inner_steps = S;
        cfg.inner_mode = mode;
        cfg.alpha = 0.1;
        cfg.alpha_full = 0.05;
        const std::vector<std::size_t> order{seed % 3, (seed + 1) % 3};
        const mpt::Oracle o = mpt::two_pass(toy, theta, tasks, order, cfg);
        std::vector<MetaTask*> batch{&tasks[order[0]], &tasks[order[1]]};
        ParameterRegistry applied = theta;
        AdamW opt(cfg.adamw);
        const MetaGradient mg = outer_step(toy, applied, batch, cfg, opt, 1e-2);
        ParameterRegistry expected = theta;
        AdamW ref(cfg.adamw);
        ref.step(expected, o.grads, 1e-2);
        const std::string head = head_prefix(tasks[order[0]].task_id) + "weight";
        ++cases;
        if (mg.grads.size() == 2 && mg.grads.at("p").bit_equal(o.grads.at("p")) &&
            mg.grads.at("a").bit_equal(o.grads.at("a")) && applied.get("p").value().bit_equal(expected.get("p").value()) &&
            applied.get("a").value().bit_equal(expected.get("a").value()) &&
            applied.get(head).value().bit_equal(Tensor::vector(o.handoff))) {
          ++exact;
        }
      }
    }
  }

  const TaggerModel model(mpt::desk_model(48));
  const ParameterRegistry init = mpt::random_init(model, 60);
  auto tasks = mpt::toy_tasks(3, 61, 48);
  auto reference_tasks = tasks;
  PrimingConfig cfg;
  cfg.inner_steps = 0;
  cfg.outer_steps = 50;
  cfg.beta = 1e-3;
  cfg.seed = 62;
  const PrimingResult primed = prime(model, init, tasks, cfg);
  const ParameterRegistry reference = mpt::multitask_adamw(model, init, reference_tasks, cfg);
  const bool s0 = primed.primed.size() == reference.size() && primed.primed.values_bit_equal(reference) &&
                  !primed.primed.values_bit_equal(init);
  std::ostringstream d;
  d << exact << "/" << cases << " outer steps bit-exact against the two-pass oracle; S=0 priming "
    << (s0 ? "bit-equal to" : "differs from") << " 50 steps of multi-task AdamW";
  return {exact == cases && s0, d.str()};
}

// 4. parameter accounting at multilingual-BERT dimensions.
Outcome parameter_accounting() {
  const ModelConfig c = mbert_like_config();
  const Fraction ht = count_trainable_fraction(c, setting_spec(FineTuneSetting::HeadTuning).partitions);
  const Fraction at = count_trainable_fraction(c, setting_spec(FineTuneSetting::AdapterTuning).partitions);
  std::ostringstream d;
  d << "head tuning " << ht.trainable << "/" << ht.total << " -> \"" << format_percent(ht) << "\"; adapter tuning "
    << at.trainable << "/" << at.total << " = " << fmt("%.4f", at.percent()) << "%";
  return {format_percent(ht) == "3e-3%" && at.percent() < 0.4, d.str()};
}

// 5. micro F1 against brute-force span enumeration.
Outcome f1_oracle() {
  Rng rng(5);
  static const char* tags[] = {"O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC"};
  std::discrete_distribution<int> pick({6, 2, 2, 1, 1, 1, 1});
  std::uniform_int_distribution<std::size_t> len(0, 15);
  auto labels = [&](std::size_t n) {
    mpt::Labels l(n);
    for (auto& t : l) t = tags[pick(rng)];
    return l;
  };
  std::size_t agree = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = len(rng);
    const std::vector<mpt::Labels> g{labels(n)}, p{labels(n)};
    const F1Scores s = micro_f1(g, p);
    const mpt::Counts c = mpt::brute_force_counts(g, p);
    const double P = c.pred > 0 ? 100.0 * c.hit / c.pred : 0.0;
    const double R = c.gold > 0 ? 100.0 * c.hit / c.gold : 0.0;
    const double F = P + R > 0 ? 2 * P * R / (P + R) : 0.0;
    if (s.total.gold == c.gold && s.total.predicted == c.pred && s.total.correct == c.hit && s.precision == P &&
        s.recall == R && std::abs(s.f1 - F) <= 1e-12 * std::max(1.0, F)) {
      ++agree;
    }
  }
  const F1Scores hand = micro_f1(std::vector<mpt::Labels>{{"B-PER", "O", "B-LOC"}},
                                 std::vector<mpt::Labels>{{"B-PER", "O", "O"}});
  std::ostringstream d;
  d << agree << "/1000 random pairs agree; P=100 R=50 gives F1 " << fmt("%.4f", hand.f1);
  return {agree == 1000 && hand.precision == 100.0 && hand.recall == 50.0 && std::abs(hand.f1 - 66.67) <= 0.01,
          d.str()};
}

// Shared by 6 and 7 so primings run once.
struct Replication {
  RunConfig config;
  GridOutput table;
  double table_seconds = 0.0;
  bool have_table = false;
};

Replication& replication() {
  static Replication r{load_run_config(kDesk), {}, 0.0, false};
  return r;
}

const Progress kProgress = [](const std::string& msg) { note(msg); };

// 6. priming helps adapter tuning.
Outcome priming_helps() {
  Replication& rep = replication();
  const auto t0 = Clock::now();
  rep.table = run_grid(rep.config,
                       {FineTuneSetting::AdapterTuning, FineTuneSetting::MetaPrimeAt, FineTuneSetting::FtPrimeAt}, {},
                       kProgress);
  rep.table_seconds = seconds_since(t0);
  rep.have_table = true;
  std::size_t wins = 0;
  std::ostringstream d;
  for (const auto& lang : rep.config.data.family.targets) {
    const double at = *mean_f1(rep.table.reports, FineTuneSetting::AdapterTuning, lang);
    const double meta = *mean_f1(rep.table.reports, FineTuneSetting::MetaPrimeAt, lang);
    const double ftp = *mean_f1(rep.table.reports, FineTuneSetting::FtPrimeAt, lang);
    const bool ok = meta > at && meta >= ftp;
    wins += ok;
    d << lang << ": META_PRIME_AT " << fmt("%.2f", meta) << " vs ADAPTER_TUNING " << fmt("%.2f", at)
      << " / FT_PRIME_AT " << fmt("%.2f", ftp) << (ok ? " ok" : " no") << "; ";
  }
  d << wins << "/" << rep.config.data.family.targets.size() << " targets over " << rep.config.seeds.size()
    << " seeds, " << fmt("%.0f", rep.table_seconds) << " s";
  return {wins >= 2 && rep.config.seeds.size() >= 3 && rep.table_seconds < 1800.0, d.str()};
}

// 7. diagonal of the priming x fine-tuning matrix, per seed.
Outcome diagonal() {
  Replication& rep = replication();
  const auto t0 = Clock::now();
  const GridOutput grid =
      run_grid(rep.config, matrix_settings(), {}, kProgress, rep.have_table ? &rep.table.primings : nullptr);
  const MatrixSummary m = summarize_matrix(grid.reports);
  std::size_t rows_ok = 0, cols_ok = 0;
  std::ostringstream d;
  for (const auto& [seed, c] : m.per_seed) {
    rows_ok += c.diagonal_holds();
    cols_ok += c.at_column_matches() && c.full_column_matches();
    d << "seed " << seed << " [PE/AT " << fmt("%.2f", c.pe_at) << ", PE/Full " << fmt("%.2f", c.pe_full)
      << ", Full/AT " << fmt("%.2f", c.full_at) << ", Full/Full " << fmt("%.2f", c.full_full) << "] rows "
      << (c.pe_row_diagonal() ? "PE ok" : "PE off") << "/" << (c.full_row_diagonal() ? "Full ok" : "Full off")
      << ", columns " << (c.at_column_matches() ? "AT ok" : "AT off") << "/"
      << (c.full_column_matches() ? "Full ok" : "Full off") << "; ";
  }
  d << "row diagonal in " << rows_ok << "/" << m.per_seed.size() << " seeds (column reading: " << cols_ok << "/"
    << m.per_seed.size() << "), " << fmt("%.0f", seconds_since(t0)) << " s";
  return {rows_ok >= 2, d.str()};
}

struct PipelineBytes {
  std::string jsonl;
  std::string primed;
  std::string finetuned;
};

PipelineBytes pipeline(const RunConfig& cfg) {
  const TaggerModel model(cfg.model);
  const Family family = build_family(cfg.data, cfg.model);
  const PreparedData data = prepare_data(family, cfg);
  const ParameterRegistry init = pretrained_init(model, family, cfg.data);
  const std::uint64_t seed = cfg.seeds.front();
  const PrimingResult primed = run_priming(model, init, data, PrimingVariant::MetaPeSim, cfg, seed);
  std::vector<EvalReport> reports;
  std::string finetuned;
  for (const auto& target : data.targets) {
    const SettingRun run = run_setting(model, primed.primed, FineTuneSetting::MetaPrimeAt, target, cfg.finetune, seed);
    reports.push_back(run.report);
    finetuned += encode_checkpoint(run.finetune.trained, cfg.model.hash());
  }
  std::ostringstream jsonl;
  write_jsonl(jsonl, reports);
  for (const auto& log : primed.log) jsonl << to_json(log).dump() << '\n';
  return {jsonl.str(), encode_checkpoint(primed.primed, cfg.model.hash()), finetuned};
}

// 8. identical config and seed give identical bytes.
Outcome determinism() {
  RunConfig cfg = load_run_config(kSmoke);
  const PipelineBytes a = pipeline(cfg);
  const PipelineBytes b = pipeline(cfg);
  cfg.workers = 2;
  const GridOutput g1 = run_grid(cfg, {FineTuneSetting::AdapterTuning, FineTuneSetting::MetaPrimeAt});
  const GridOutput g2 = run_grid(cfg, {FineTuneSetting::AdapterTuning, FineTuneSetting::MetaPrimeAt});
  std::ostringstream j1, j2;
  write_jsonl(j1, g1.reports);
  write_jsonl(j2, g2.reports);
  const bool same = a.jsonl == b.jsonl && a.primed == b.primed && a.finetuned == b.finetuned && j1.str() == j2.str();
  std::ostringstream d;
  d << "metrics+log JSONL " << a.jsonl.size() << " B, primed checkpoint " << a.primed.size() << " B, fine-tuned "
    << a.finetuned.size() << " B, grid JSONL " << j1.str().size() << " B: " << (same ? "identical" : "DIFFERENT");
  return {same, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"gradient soundness", gradient_soundness}},
      {2, {"freezing invariants", freezing_invariants}},
      {3, {"first-order meta-gradient oracle", meta_gradient_oracle}},
      {4, {"parameter accounting", parameter_accounting}},
      {5, {"F1 oracle equivalence", f1_oracle}},
      {6, {"priming helps adapter tuning", priming_helps}},
      {7, {"priming x fine-tuning diagonal", diagonal}},
      {8, {"determinism", determinism}},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (!criteria.contains(n)) {
      std::cerr << "unknown criterion '" << argv[i] << "'\n";
      return 2;
    }
    wanted.insert(n);
  }
  if (wanted.empty()) {
    for (const auto& [n, c] : criteria) wanted.insert(n);
  }

  bool all = true;
  for (int n : wanted) {
    const auto& [name, fn] = criteria.at(n);
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << n << " (" << name << "): " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
