#include "metaprime/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include "metaprime/errors.hpp"
#include "metaprime/seeding.hpp"
#include "metaprime/synthetic.hpp"

namespace metaprime {

namespace {

SyntheticLanguageSpec language_spec(const FamilySpec& family, const std::string& language) {
  SyntheticLanguageSpec spec;
  spec.language_id = language;
  spec.seed = derive_seed(family.seed, "language/" + language);
  spec.surface_prefix = language;
  spec.entity_rate = family.entity_rate;
  spec.mean_length = family.mean_length;
  spec.name_coverage = family.name_coverage;
  spec.stray_cue_rate = family.stray_cue_rate;
  spec.lexicon = family.lexicon;
  return spec;
}

}  // namespace

Family build_family(const DataConfig& data, const ModelConfig& model) {
  Family family;
  const LabelScheme scheme = LabelScheme::wikiann();
  if (!data.synthetic()) {
    for (const auto& [lang, path] : data.conll_sources) {
      family.sources.push_back(load_conll(path, scheme));
      family.sources.back().name = lang;
    }
    for (const auto& [lang, path] : data.conll_targets) {
      family.targets.push_back(load_conll(path, scheme));
      family.targets.back().name = lang;
    }
    std::vector<const Corpus*> all;
    for (const auto& c : family.sources) all.push_back(&c);
    for (const auto& c : family.targets) all.push_back(&c);
    family.vocab = Vocabulary::build(all, model.vocab_size);
    family.lexical_groups.assign(family.vocab.size(), -1);
    return family;
  }

  // The vocabulary covers every surface word of every language, as a
  // multilingual pretrained vocabulary would.
  const auto& f = data.family;
  std::vector<std::string> languages = f.sources;
  languages.insert(languages.end(), f.targets.begin(), f.targets.end());
  std::unordered_map<std::string, int> proto_of;
  for (const auto& lang : languages) {
    for (const auto& w : surface_lexicon(language_spec(f, lang))) {
      proto_of[w.token] = w.proto_id;
      if (family.vocab.size() < model.vocab_size) family.vocab.add(w.token);
    }
  }
  family.lexical_groups.assign(family.vocab.size(), -1);
  for (std::size_t id = 0; id < family.vocab.size(); ++id) {
    auto it = proto_of.find(family.vocab.token(static_cast<int>(id)));
    if (it != proto_of.end()) family.lexical_groups[id] = it->second;
  }

  for (const auto& lang : f.sources) {
    family.sources.push_back(generate_language(language_spec(f, lang), data.split.support + data.split.query));
  }
  for (const auto& lang : f.targets) {
    family.targets.push_back(
        generate_language(language_spec(f, lang), data.split.train + data.split.validation + data.split.test));
  }

  if (data.pretrain_sentences > 0) {
    const std::vector<int> classes = word_classes(f.lexicon);
    for (const auto& lang : languages) {
      SyntheticLanguageSpec spec = language_spec(f, lang);
      spec.seed = derive_seed(spec.seed, "pretraining-text");
      for (const auto& seq : generate_language(spec, data.pretrain_sentences).sequences) {
        EncodedSequence enc;
        for (std::size_t i = 0; i < seq.tokens.size() && i < model.max_seq_len; ++i) {
          enc.ids.push_back(family.vocab.id(seq.tokens[i]));
          enc.labels.push_back(classes[static_cast<std::size_t>(proto_of.at(seq.tokens[i]))]);
        }
        family.pretraining.push_back(std::move(enc));
      }
    }
  }
  return family;
}

PreparedData prepare_data(const Family& family, const RunConfig& config) {
  PreparedData out;
  const LabelScheme scheme = LabelScheme::wikiann();
  const std::size_t max_len = config.model.max_seq_len;
  for (const auto& corpus : family.sources) {
    auto [support, query] = split_source(corpus, config.data.split);
    SourceLanguage src{corpus.name, encode_corpus(support, family.vocab, scheme, max_len, &out.stats)};
    auto q = encode_corpus(query, family.vocab, scheme, max_len, &out.stats);
    src.sequences.insert(src.sequences.end(), q.begin(), q.end());
    out.sources.push_back(std::move(src));
  }
  for (const auto& corpus : family.targets) {
    const CorpusSplits splits = split_target(corpus, config.data.split);
    out.targets.push_back(TargetData{
        corpus.name,
        encode_corpus(splits.train, family.vocab, scheme, max_len, &out.stats),
        encode_corpus(splits.validation, family.vocab, scheme, max_len, &out.stats),
        encode_corpus(splits.test, family.vocab, scheme, max_len, &out.stats),
    });
  }
  return out;
}

ParameterRegistry pretrained_init(const TaggerModel& model, const Family& family, const DataConfig& data) {
  ParameterRegistry registry;
  Rng rng(derive_seed(data.family.seed, "pretrained"));
  model.init_encoder(registry, rng);
  std::vector<int> groups = family.lexical_groups;
  groups.resize(std::min(groups.size(), model.config().vocab_size));
  align_token_embeddings(registry, groups, data.alignment_noise, rng);

  if (data.pretrain_steps > 0 && !family.pretraining.empty()) {
    if (model.config().n_labels < static_cast<std::size_t>(kWordClasses)) {
      throw ConfigError("pretraining needs n_labels >= " + std::to_string(kWordClasses));
    }
    const std::string task = "word_class";
    model.init_head(registry, task, rng);
    BatchCursor cursor(family.pretraining, data.pretrain_batch, derive_seed(data.family.seed, "pretraining-batches"));
    AdamW optimizer;
    for (std::size_t step = 0; step < data.pretrain_steps; ++step) {
      const Batch batch = cursor.next();
      Tape tape;
      Var loss = model.loss(tape, registry, batch, task);
      if (!std::isfinite(loss.value()[0])) {
        throw NumericError("pretraining step " + std::to_string(step) + ": non-finite loss");
      }
      registry.zero_grad();
      optimizer.step(registry, tape.backward(loss), linear_schedule(data.pretrain_lr, step, data.pretrain_steps));
    }
    TaggerModel::remove_heads(registry);
    registry.zero_grad();
    for (auto& p : registry) p.value().drop_grad();
  }

  Rng adapter_rng(derive_seed(data.family.seed, "adapter"));
  model.init_adapter(registry, adapter_rng);
  return registry;
}

PrimingConfig priming_config_for(PrimingVariant variant, const PrimingConfig& base, std::uint64_t seed) {
  PrimingConfig cfg = base;
  cfg.seed = derive_seed(seed, std::string("priming/") + std::string(priming_variant_name(variant)));
  switch (variant) {
    case PrimingVariant::MetaPeSim:
    case PrimingVariant::FtPrime:
    case PrimingVariant::None:
      cfg.inner_mode = InnerMode::PeSim;
      break;
    case PrimingVariant::MetaFull:
      cfg.inner_mode = InnerMode::FullMaml;
      break;
    case PrimingVariant::MetaOneStep:
      cfg.inner_mode = InnerMode::PeSim;
      cfg.inner_steps = 1;
      break;
  }
  return cfg;
}

PrimingResult run_priming(const TaggerModel& model, const ParameterRegistry& init, const PreparedData& data,
                          PrimingVariant variant, const RunConfig& config, std::uint64_t seed,
                          const StepSink& sink) {
  if (variant == PrimingVariant::None) return PrimingResult{init, {}};
  const PrimingConfig cfg = priming_config_for(variant, config.priming, seed);
  MetaBatching batching{config.data.support_batch, config.data.query_batch, derive_seed(cfg.seed, "meta-batches")};
  SplitSpec split = config.data.split;
  std::vector<MetaTask> tasks = build_meta_dataset(data.sources, split, batching);
  return variant == PrimingVariant::FtPrime ? ft_prime(model, init, tasks, cfg, sink)
                                            : prime(model, init, tasks, cfg, sink);
}

SettingRun run_setting(const TaggerModel& model, const ParameterRegistry& start, FineTuneSetting setting,
                       const TargetData& target, const FineTuneConfig& config, std::uint64_t seed) {
  SettingRun run;
  run.finetune = finetune(model, start, setting, target, config, seed);
  run.report.setting = setting;
  run.report.language = target.language;
  run.report.seed = seed;
  run.report.scores =
      evaluate(model, run.finetune.trained, target.language, target.test, LabelScheme::wikiann());
  run.report.trainable_fraction = count_trainable_fraction(model.config(), setting_spec(setting).partitions);
  run.report.best_step = run.finetune.best_step;
  return run;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

GridOutput run_grid(const RunConfig& config, const std::vector<FineTuneSetting>& settings,
                    const std::vector<std::string>& languages, const Progress& progress,
                    const std::map<PrimingKey, PrimingResult>* reuse) {
  config.validate();
  const TaggerModel model(config.model);
  const Family family = build_family(config.data, config.model);
  const PreparedData data = prepare_data(family, config);
  const ParameterRegistry init = pretrained_init(model, family, config.data);

  std::vector<const TargetData*> targets;
  for (const auto& t : data.targets) {
    if (languages.empty() || std::find(languages.begin(), languages.end(), t.language) != languages.end()) {
      targets.push_back(&t);
    }
  }
  if (targets.empty()) throw LookupError("no target language matches the requested languages");

  std::set<PrimingVariant> variants;
  for (auto s : settings) {
    if (setting_spec(s).priming != PrimingVariant::None) variants.insert(setting_spec(s).priming);
  }
  GridOutput out;
  std::vector<PrimingKey> priming_jobs;
  for (auto seed : config.seeds) {
    for (auto v : variants) {
      if (reuse && reuse->contains({seed, v})) out.primings.emplace(PrimingKey{seed, v}, reuse->at({seed, v}));
      else priming_jobs.emplace_back(seed, v);
    }
  }
  std::vector<PrimingResult> primed(priming_jobs.size());
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    progress(msg);
  };
  parallel_for(priming_jobs.size(), config.workers, [&](std::size_t i) {
    const auto [seed, variant] = priming_jobs[i];
    primed[i] = run_priming(model, init, data, variant, config, seed);
    say("primed " + std::string(priming_variant_name(variant)) + " seed " + std::to_string(seed));
  });

  for (std::size_t i = 0; i < priming_jobs.size(); ++i) out.primings.emplace(priming_jobs[i], std::move(primed[i]));

  struct Job {
    FineTuneSetting setting;
    const TargetData* target;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto s : settings) {
    for (const auto* t : targets) {
      for (auto seed : config.seeds) jobs.push_back({s, t, seed});
    }
  }
  out.reports.resize(jobs.size());
  parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const PrimingVariant variant = setting_spec(job.setting).priming;
    const ParameterRegistry& start =
        variant == PrimingVariant::None ? init : out.primings.at({job.seed, variant}).primed;
    out.reports[i] = run_setting(model, start, job.setting, *job.target, config.finetune, job.seed).report;
    say(std::string(setting_name(job.setting)) + " " + job.target->language + " seed " + std::to_string(job.seed) +
        ": F1 " + std::to_string(out.reports[i].scores.f1));
  });
  return out;
}

}  // namespace metaprime
