// Command-line harness: data generation, priming, fine-tuning, evaluation,
// the experiment grids and markdown reports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "metaprime/checkpoint.hpp"
#include "metaprime/config.hpp"
#include "metaprime/errors.hpp"
#include "metaprime/experiment.hpp"
#include "metaprime/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace metaprime;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string init_checkpoint;
  std::string setting;
  std::string language;
  std::string variant = "meta_pe_sim";
  std::string grid = "all";
  std::string input;
};

RunConfig load_config(const Flags& f) {
  if (f.config.empty()) throw ConfigError("--config is required");
  return load_run_config(f.config);
}

fs::path out_dir(const Flags& f, const RunConfig& cfg) {
  fs::path dir = f.out.empty() ? fs::path(cfg.out) : fs::path(f.out);
  fs::create_directories(dir);
  return dir;
}

std::uint64_t seed_of(const Flags& f, const RunConfig& cfg) { return f.seed ? *f.seed : cfg.seeds.front(); }

ParameterRegistry load_init(const Flags& f, const fs::path& dir, const RunConfig& cfg) {
  const fs::path path = f.init_checkpoint.empty() ? dir / "init.ckpt" : fs::path(f.init_checkpoint);
  if (!fs::exists(path)) throw FileError("checkpoint not found: " + path.string());
  return load_checkpoint(path, cfg.model.hash());
}

const TargetData& find_target(const PreparedData& data, const std::string& language) {
  for (const auto& t : data.targets) {
    if (t.language == language) return t;
  }
  throw LookupError("unknown target language '" + language + "'");
}

PrimingVariant variant_from_name(const std::string& name) {
  for (auto v : {PrimingVariant::MetaPeSim, PrimingVariant::FtPrime, PrimingVariant::MetaFull,
                 PrimingVariant::MetaOneStep}) {
    if (priming_variant_name(v) == name) return v;
  }
  throw ConfigError("unknown priming variant '" + name +
                    "' (expected meta_pe_sim, ft_prime, meta_full or meta_one_step)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << text;
}

int cmd_generate(const Flags& f) {
  const RunConfig cfg = load_config(f);
  const fs::path dir = out_dir(f, cfg);
  const Family family = build_family(cfg.data, cfg.model);
  fs::create_directories(dir / "data");
  for (const auto* list : {&family.sources, &family.targets}) {
    for (const auto& c : *list) save_conll(dir / "data" / (c.name + ".conll"), c);
  }
  family.vocab.save(dir / "vocab.txt");
  write_text(dir / "lexical_groups.json", json(family.lexical_groups).dump() + "\n");
  const TaggerModel model(cfg.model);
  save_checkpoint(dir / "init.ckpt", pretrained_init(model, family, cfg.data), cfg.model.hash());
  save_run_config(dir / "config.json", cfg);
  std::cout << json{{"out", dir.string()},
                    {"sources", family.sources.size()},
                    {"targets", family.targets.size()},
                    {"vocab", family.vocab.size()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_prime(const Flags& f) {
  const RunConfig cfg = load_config(f);
  const fs::path dir = out_dir(f, cfg);
  const ParameterRegistry init = load_init(f, dir, cfg);
  const TaggerModel model(cfg.model);
  const PreparedData data = prepare_data(build_family(cfg.data, cfg.model), cfg);
  const PrimingVariant variant = variant_from_name(f.variant);

  std::ofstream log(dir / "prime_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw FileError("cannot write " + (dir / "prime_log.jsonl").string());
  const auto result = run_priming(model, init, data, variant, cfg, seed_of(f, cfg), [&](const StepLog& entry) {
    log << to_json(entry).dump() << '\n';
    log.flush();
  });
  save_checkpoint(dir / "primed.ckpt", result.primed, cfg.model.hash());
  save_run_config(dir / "config.json", cfg);
  std::cout << json{{"checkpoint", (dir / "primed.ckpt").string()}, {"steps", cfg.priming.outer_steps}}.dump()
            << '\n';
  return 0;
}

int cmd_finetune(const Flags& f) {
  const RunConfig cfg = load_config(f);
  if (f.setting.empty() || f.language.empty()) throw ConfigError("finetune needs --setting and --language");
  const fs::path dir = out_dir(f, cfg);
  const ParameterRegistry init = load_init(f, dir, cfg);
  const TaggerModel model(cfg.model);
  const PreparedData data = prepare_data(build_family(cfg.data, cfg.model), cfg);
  const SettingRun run = run_setting(model, init, setting_from_name(f.setting), find_target(data, f.language),
                                     cfg.finetune, seed_of(f, cfg));
  save_checkpoint(dir / "finetuned.ckpt", run.finetune.trained, cfg.model.hash());
  std::ofstream trace(dir / "trace.jsonl", std::ios::binary);
  for (const auto& p : run.finetune.trace) {
    trace << json{{"step", p.step}, {"train_loss", p.train_loss}, {"validation_f1", p.validation_f1}}.dump() << '\n';
  }
  std::ofstream results(dir / "result.jsonl", std::ios::binary);
  write_jsonl(results, {run.report});
  save_run_config(dir / "config.json", cfg);
  std::cout << to_json(run.report).dump() << '\n';
  return 0;
}

int cmd_evaluate(const Flags& f) {
  const RunConfig cfg = load_config(f);
  if (f.language.empty()) throw ConfigError("evaluate needs --language");
  if (f.init_checkpoint.empty()) throw ConfigError("evaluate needs --init-checkpoint (a fine-tuned checkpoint)");
  if (!fs::exists(f.init_checkpoint)) throw FileError("checkpoint not found: " + f.init_checkpoint);
  ParameterRegistry registry = load_checkpoint(f.init_checkpoint, cfg.model.hash());
  const TaggerModel model(cfg.model);
  const PreparedData data = prepare_data(build_family(cfg.data, cfg.model), cfg);
  EvalReport report;
  report.setting = f.setting.empty() ? FineTuneSetting::AdapterTuning : setting_from_name(f.setting);
  report.language = f.language;
  report.seed = seed_of(f, cfg);
  report.scores = evaluate(model, registry, f.language, find_target(data, f.language).test, LabelScheme::wikiann());
  report.trainable_fraction = count_trainable_fraction(cfg.model, setting_spec(report.setting).partitions);
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    std::ofstream out(fs::path(f.out) / "eval.jsonl", std::ios::binary);
    write_jsonl(out, {report});
  }
  std::cout << to_json(report).dump() << '\n';
  return 0;
}

int cmd_matrix(const Flags& f) {
  RunConfig cfg = load_config(f);
  if (f.seed) cfg.seeds = {*f.seed};
  const fs::path dir = out_dir(f, cfg);
  std::vector<FineTuneSetting> settings;
  if (f.grid == "table" || f.grid == "all") settings = table_settings();
  if (f.grid == "matrix" || f.grid == "all") {
    for (auto s : matrix_settings()) {
      if (std::find(settings.begin(), settings.end(), s) == settings.end()) settings.push_back(s);
    }
  }
  if (settings.empty()) throw ConfigError("--grid must be matrix, table or all");
  std::vector<std::string> languages;
  if (!f.language.empty()) languages.push_back(f.language);

  save_run_config(dir / "config.json", cfg);
  const GridOutput grid = run_grid(cfg, settings, languages, [](const std::string& msg) { std::cerr << msg << '\n'; });
  for (const auto& [key, result] : grid.primings) {
    std::ofstream log(dir / ("prime_log-" + std::string(priming_variant_name(key.second)) + "-seed" +
                             std::to_string(key.first) + ".jsonl"),
                      std::ios::binary);
    for (const auto& entry : result.log) log << to_json(entry).dump() << '\n';
  }
  {
    std::ofstream out(dir / "results.jsonl", std::ios::binary);
    write_jsonl(out, grid.reports);
  }
  write_text(dir / "report.md", render_report(grid.reports));
  std::cout << render_report(grid.reports);
  return 0;
}

int cmd_report(const Flags& f) {
  fs::path input = f.input;
  if (input.empty()) {
    if (f.out.empty()) throw ConfigError("report needs --input or --out");
    input = fs::path(f.out) / "results.jsonl";
  }
  const std::string text = render_report(read_jsonl(input));
  if (!f.out.empty()) write_text(fs::path(f.out) / "report.md", text);
  std::cout << text;
  return 0;
}

void fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta priming of lightweight fine-tuning: experiment harness"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", f.config, "run configuration (JSON)");
    if (config_required) opt->required();
    sub->add_option("--seed", f.seed, "run seed (defaults to the first configured seed)");
    sub->add_option("--out", f.out, "output directory (defaults to the config's out)");
  };

  auto* gen = app.add_subcommand("generate-data", "write corpora, vocabulary and the initial checkpoint");
  add_common(gen, true);

  auto* prime = app.add_subcommand("prime", "prime an initial checkpoint on the source languages");
  add_common(prime, true);
  prime->add_option("--init-checkpoint", f.init_checkpoint, "initial checkpoint (default <out>/init.ckpt)");
  prime->add_option("--variant", f.variant, "meta_pe_sim | ft_prime | meta_full | meta_one_step");

  auto* ft = app.add_subcommand("finetune", "fine-tune on one target language and score its test split");
  add_common(ft, true);
  ft->add_option("--init-checkpoint", f.init_checkpoint, "starting checkpoint (default <out>/init.ckpt)");
  ft->add_option("--setting", f.setting, "fine-tuning setting, e.g. ADAPTER_TUNING")->required();
  ft->add_option("--language", f.language, "target language")->required();

  auto* ev = app.add_subcommand("evaluate", "score a fine-tuned checkpoint on a target test split");
  add_common(ev, true);
  ev->add_option("--init-checkpoint", f.init_checkpoint, "fine-tuned checkpoint")->required();
  ev->add_option("--language", f.language, "target language")->required();
  ev->add_option("--setting", f.setting, "setting label for the report");

  auto* mx = app.add_subcommand("matrix", "run the experiment grid");
  add_common(mx, true);
  mx->add_option("--grid", f.grid, "matrix | table | all")->check(CLI::IsMember({"matrix", "table", "all"}));
  mx->add_option("--language", f.language, "restrict to one target language");

  auto* rep = app.add_subcommand("report", "render markdown tables from a results JSONL");
  add_common(rep, false);
  rep->add_option("--input", f.input, "results JSONL (default <out>/results.jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(f);
    if (prime->parsed()) return cmd_prime(f);
    if (ft->parsed()) return cmd_finetune(f);
    if (ev->parsed()) return cmd_evaluate(f);
    if (mx->parsed()) return cmd_matrix(f);
    if (rep->parsed()) return cmd_report(f);
  } catch (const Error& e) {
    fail(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    fail("internal", e.what());
    return 1;
  }
  return 1;
}
