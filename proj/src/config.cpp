#include "metaprime/config.hpp"

#include <fstream>
#include <set>

#include "metaprime/errors.hpp"

namespace metaprime {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object, recording unknown keys and type
// mismatches instead of stopping at the first one.
class Section {
 public:
  Section(const json& node, std::string path, std::vector<std::string>& problems)
      : node_(node), path_(std::move(path)), problems_(problems) {
    if (!node_.is_object()) problems_.push_back(where() + ": expected an object");
  }

  ~Section() {
    if (!node_.is_object()) return;
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.contains(key)) problems_.push_back(path_ + (path_.empty() ? "" : ".") + key + ": unknown key");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    const json* v = take(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw std::runtime_error("expected true or false");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v->is_number_unsigned()) throw std::runtime_error("expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw std::runtime_error("expected a number");
      }
      out = v->get<T>();
    } catch (const std::exception& e) {
      problems_.push_back(key_path(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) { return take(key); }
  std::string key_path(const char* key) const { return path_ + (path_.empty() ? "" : ".") + key; }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    if (!node_.is_object()) return nullptr;
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json& node_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

template <typename Fn>
void with_child(Section& parent, const char* key, std::vector<std::string>& problems, Fn&& fn) {
  if (const json* node = parent.child(key)) {
    Section s(*node, parent.key_path(key), problems);
    fn(s);
  }
}

template <typename Enum, typename Parse>
void get_enum(Section& s, const char* key, Enum& out, Parse parse, std::vector<std::string>& problems) {
  std::string name;
  bool present = false;
  if (const json* v = s.child(key)) {
    present = true;
    if (v->is_string()) name = v->get<std::string>();
    else problems.push_back(s.key_path(key) + ": expected a string");
  }
  if (!present || name.empty()) return;
  try {
    out = parse(name);
  } catch (const Error& e) {
    problems.push_back(s.key_path(key) + ": " + e.what());
  }
}

void read_adamw(Section& s, AdamWConfig& c) {
  s.get("beta1", c.beta1);
  s.get("beta2", c.beta2);
  s.get("epsilon", c.epsilon);
  s.get("weight_decay", c.weight_decay);
}

json adamw_json(const AdamWConfig& c) {
  return {{"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}, {"weight_decay", c.weight_decay}};
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  std::vector<std::string> problems;
  {
    Section root(doc, "", problems);
    with_child(root, "model", problems, [&](Section& s) {
      auto& m = cfg.model;
      s.get("vocab_size", m.vocab_size);
      s.get("d_model", m.d_model);
      s.get("n_layers", m.n_layers);
      s.get("n_heads", m.n_heads);
      s.get("d_ff", m.d_ff);
      s.get("max_seq_len", m.max_seq_len);
      s.get("n_labels", m.n_labels);
      s.get("adapter_bottleneck", m.adapter_bottleneck);
      get_enum(s, "adapter_nonlinearity", m.adapter_nonlinearity, nonlinearity_from_name, problems);
      s.get("adapter_residual", m.adapter_residual);
    });
    with_child(root, "priming", problems, [&](Section& s) {
      auto& p = cfg.priming;
      s.get("alpha", p.alpha);
      s.get("beta", p.beta);
      s.get("inner_steps", p.inner_steps);
      get_enum(s, "inner_mode", p.inner_mode, inner_mode_from_name, problems);
      s.get("alpha_full", p.alpha_full);
      s.get("tasks_per_outer_batch", p.tasks_per_outer_batch);
      s.get("outer_steps", p.outer_steps);
      with_child(s, "adamw", problems, [&](Section& a) { read_adamw(a, p.adamw); });
    });
    with_child(root, "finetune", problems, [&](Section& s) {
      auto& f = cfg.finetune;
      s.get("lr_full", f.lr_full);
      s.get("lr_light", f.lr_light);
      s.get("steps", f.steps);
      s.get("batch_size", f.batch_size);
      s.get("eval_every", f.eval_every);
      with_child(s, "adamw", problems, [&](Section& a) { read_adamw(a, f.adamw); });
    });
    with_child(root, "data", problems, [&](Section& s) {
      auto& d = cfg.data;
      with_child(s, "family", problems, [&](Section& f) {
        f.get("sources", d.family.sources);
        f.get("targets", d.family.targets);
        f.get("entity_rate", d.family.entity_rate);
        f.get("mean_length", d.family.mean_length);
        f.get("name_coverage", d.family.name_coverage);
        f.get("stray_cue_rate", d.family.stray_cue_rate);
        f.get("seed", d.family.seed);
        with_child(f, "lexicon", problems, [&](Section& l) {
          auto& x = d.family.lexicon;
          l.get("function_words", x.function_words);
          l.get("content_words", x.content_words);
          l.get("names", x.names);
          l.get("person_cues", x.person_cues);
          l.get("org_cues", x.org_cues);
          l.get("location_cues", x.location_cues);
          l.get("org_suffixes", x.org_suffixes);
          l.get("location_suffixes", x.location_suffixes);
        });
      });
      s.get("conll_sources", d.conll_sources);
      s.get("conll_targets", d.conll_targets);
      with_child(s, "split", problems, [&](Section& p) {
        p.get("support", d.split.support);
        p.get("query", d.split.query);
        p.get("train", d.split.train);
        p.get("validation", d.split.validation);
        p.get("test", d.split.test);
      });
      s.get("support_batch", d.support_batch);
      s.get("query_batch", d.query_batch);
      s.get("alignment_noise", d.alignment_noise);
      s.get("pretrain_steps", d.pretrain_steps);
      s.get("pretrain_sentences", d.pretrain_sentences);
      s.get("pretrain_batch", d.pretrain_batch);
      s.get("pretrain_lr", d.pretrain_lr);
    });
    root.get("seeds", cfg.seeds);
    root.get("out", cfg.out);
    root.get("workers", cfg.workers);
  }
  if (!problems.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  auto collect = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  };
  collect([&] { model.validate(); });
  collect([&] { priming.validate(); });
  collect([&] { finetune.validate(); });
  if (seeds.empty()) problems.push_back("seeds: at least one seed is required");
  if (workers == 0) problems.push_back("workers: must be >= 1");
  if (data.support_batch == 0 || data.query_batch == 0 || data.pretrain_batch == 0) {
    problems.push_back("data: batch sizes must be >= 1");
  }
  if (data.pretrain_steps > 0 && !(data.pretrain_lr > 0.0)) problems.push_back("data.pretrain_lr: must be > 0");
  if (data.synthetic()) {
    if (data.family.sources.empty()) problems.push_back("data.family.sources: at least one source language");
    if (data.family.targets.empty()) problems.push_back("data.family.targets: at least one target language");
    std::set<std::string> names;
    for (const auto* list : {&data.family.sources, &data.family.targets}) {
      for (const auto& n : *list) {
        if (n.empty() || !names.insert(n).second) problems.push_back("data.family: empty or duplicate language '" + n + "'");
      }
    }
  } else if (data.conll_sources.empty() || data.conll_targets.empty()) {
    problems.push_back("data: conll_sources and conll_targets must both be given");
  }
  if (!problems.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

json to_json(const RunConfig& c) {
  const auto& m = c.model;
  const auto& p = c.priming;
  const auto& f = c.finetune;
  const auto& d = c.data;
  const auto& x = d.family.lexicon;
  return {
      {"model",
       {{"vocab_size", m.vocab_size},
        {"d_model", m.d_model},
        {"n_layers", m.n_layers},
        {"n_heads", m.n_heads},
        {"d_ff", m.d_ff},
        {"max_seq_len", m.max_seq_len},
        {"n_labels", m.n_labels},
        {"adapter_bottleneck", m.adapter_bottleneck},
        {"adapter_nonlinearity", nonlinearity_name(m.adapter_nonlinearity)},
        {"adapter_residual", m.adapter_residual}}},
      {"priming",
       {{"alpha", p.alpha},
        {"beta", p.beta},
        {"inner_steps", p.inner_steps},
        {"inner_mode", inner_mode_name(p.inner_mode)},
        {"alpha_full", p.alpha_full},
        {"tasks_per_outer_batch", p.tasks_per_outer_batch},
        {"outer_steps", p.outer_steps},
        {"adamw", adamw_json(p.adamw)}}},
      {"finetune",
       {{"lr_full", f.lr_full},
        {"lr_light", f.lr_light},
        {"steps", f.steps},
        {"batch_size", f.batch_size},
        {"eval_every", f.eval_every},
        {"adamw", adamw_json(f.adamw)}}},
      {"data",
       {{"family",
         {{"sources", d.family.sources},
          {"targets", d.family.targets},
          {"entity_rate", d.family.entity_rate},
          {"mean_length", d.family.mean_length},
          {"name_coverage", d.family.name_coverage},
          {"stray_cue_rate", d.family.stray_cue_rate},
          {"seed", d.family.seed},
          {"lexicon",
           {{"function_words", x.function_words},
            {"content_words", x.content_words},
            {"names", x.names},
            {"person_cues", x.person_cues},
            {"org_cues", x.org_cues},
            {"location_cues", x.location_cues},
            {"org_suffixes", x.org_suffixes},
            {"location_suffixes", x.location_suffixes}}}}},
        {"conll_sources", d.conll_sources},
        {"conll_targets", d.conll_targets},
        {"split",
         {{"support", d.split.support},
          {"query", d.split.query},
          {"train", d.split.train},
          {"validation", d.split.validation},
          {"test", d.split.test}}},
        {"support_batch", d.support_batch},
        {"query_batch", d.query_batch},
        {"alignment_noise", d.alignment_noise},
        {"pretrain_steps", d.pretrain_steps},
        {"pretrain_sentences", d.pretrain_sentences},
        {"pretrain_batch", d.pretrain_batch},
        {"pretrain_lr", d.pretrain_lr}}},
      {"seeds", c.seeds},
      {"out", c.out},
      {"workers", c.workers},
  };
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write config " + path.string());
  out << to_json(config).dump(2) << '\n';
}

}  // namespace metaprime
