// Python bindings: configs, reports and logs cross the boundary as JSON text,
// decoded on the Python side; parameters come back as numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "metaprime/checkpoint.hpp"
#include "metaprime/config.hpp"
#include "metaprime/errors.hpp"
#include "metaprime/experiment.hpp"
#include "metaprime/gradcheck.hpp"
#include "metaprime/metrics.hpp"
#include "metaprime/report.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using nlohmann::json;
using namespace metaprime;

namespace {

RunConfig config_from(const std::string& text) {
  RunConfig c = parse_run_config(json::parse(text));
  c.validate();
  return c;
}

PrimingVariant variant_from(const std::string& name) {
  for (auto v : {PrimingVariant::None, PrimingVariant::MetaPeSim, PrimingVariant::FtPrime, PrimingVariant::MetaFull,
                 PrimingVariant::MetaOneStep}) {
    if (priming_variant_name(v) == name) return v;
  }
  throw ConfigError("unknown priming variant '" + name + "'");
}

std::string reports_json(const std::vector<EvalReport>& reports) {
  json out = json::array();
  for (const auto& r : reports) out.push_back(to_json(r));
  return out.dump();
}

std::vector<EvalReport> reports_from(const std::string& text) {
  std::vector<EvalReport> out;
  for (const auto& j : json::parse(text)) out.push_back(eval_report_from_json(j));
  return out;
}

std::string scores_json(const F1Scores& s) {
  json per_type = json::object();
  for (const auto& [t, c] : s.per_type) per_type[t] = {{"gold", c.gold}, {"predicted", c.predicted}, {"correct", c.correct}};
  return json{{"precision", s.precision},
              {"recall", s.recall},
              {"f1", s.f1},
              {"gold", s.total.gold},
              {"predicted", s.total.predicted},
              {"correct", s.total.correct},
              {"per_type", per_type}}
      .dump();
}

struct Session {
  RunConfig config;
  TaggerModel model;
  Family family;
  PreparedData data;

  explicit Session(const RunConfig& c)
      : config(c), model(c.model), family(build_family(c.data, c.model)), data(prepare_data(family, c)) {}

  const TargetData& target(const std::string& lang) const {
    for (const auto& t : data.targets) {
      if (t.language == lang) return t;
    }
    throw LookupError("unknown target language '" + lang + "'");
  }
};

}  // namespace

PYBIND11_MODULE(_metaprime, m) {
  m.doc() = "Meta priming of lightweight fine-tuning (C++ core)";

  py::register_exception<Error>(m, "Error");

  m.def("parse_config", [](const std::string& text) { return to_json(config_from(text)).dump(); },
        "Validates a run config (JSON text) and returns it with every default filled in.");
  m.def("load_config", [](const fs::path& path) { return to_json(load_run_config(path)).dump(); });

  m.def(
      "trainable_fraction",
      [](const std::string& model_json, const std::string& setting) {
        RunConfig c = parse_run_config(json{{"model", json::parse(model_json)}});
        const Fraction f = count_trainable_fraction(c.model, setting_spec(setting_from_name(setting)).partitions);
        return py::make_tuple(f.trainable, f.total, format_percent(f));
      },
      py::arg("model_config"), py::arg("setting"));

  m.def("extract_spans", [](const std::vector<std::string>& labels) {
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> out;
    for (const auto& s : extract_spans(labels)) out.emplace_back(s.type, s.start, s.end);
    return out;
  });
  m.def("micro_f1", [](const std::vector<std::vector<std::string>>& gold,
                       const std::vector<std::vector<std::string>>& predicted) {
    return scores_json(micro_f1(gold, predicted));
  });

  m.def(
      "load_checkpoint",
      [](const fs::path& path) {
        const ParameterRegistry r = load_checkpoint(path);
        py::dict out;
        for (const auto& p : r) {
          const auto& t = p.value();
          std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
          py::array_t<double> a(shape);
          std::copy(t.data().begin(), t.data().end(), a.mutable_data());
          out[py::str(p.id())] = py::make_tuple(std::string(partition_name(p.partition())), a);
        }
        return out;
      },
      "Maps parameter id to (partition, numpy array).");

  m.def(
      "gradient_check",
      [](const std::string& config_json, std::uint64_t seed) {
        const RunConfig c = config_from(config_json);
        const TaggerModel model(c.model);
        ParameterRegistry r;
        Rng rng(seed);
        model.init_encoder(r, rng);
        model.init_adapter(r, rng, 0.1);
        for (auto& p : r) {
          if (p.id() == "adapter.up.weight") {
            std::uniform_real_distribution<double> u(-0.1, 0.1);
            for (double& x : p.value().data()) x = u(rng);
          }
        }
        model.init_head(r, "t", rng);
        std::vector<EncodedSequence> seqs(2);
        std::uniform_int_distribution<int> tok(2, static_cast<int>(c.model.vocab_size) - 1), lab(0, 6);
        for (auto& s : seqs) {
          for (int i = 0; i < 5; ++i) {
            s.ids.push_back(tok(rng));
            s.labels.push_back(lab(rng));
          }
        }
        const Batch batch = make_batch(std::span<const EncodedSequence>(seqs));
        py::gil_scoped_release release;
        const GradCheckReport rep = finite_difference_check(
            [&](Tape& tape, ParameterRegistry& reg) { return model.loss(tape, reg, batch, "t"); }, r);
        return std::make_pair(rep.max_rel_error, rep.failures);
      },
      py::arg("config"), py::arg("seed") = 0);

  py::class_<Session>(m, "Session", "Generated or loaded data plus the model for one run config.")
      .def(py::init([](const std::string& config_json) {
             const RunConfig c = config_from(config_json);
             py::gil_scoped_release release;
             return std::make_unique<Session>(c);
           }),
           py::arg("config"))
      .def_property_readonly("targets",
                             [](const Session& s) {
                               std::vector<std::string> out;
                               for (const auto& t : s.data.targets) out.push_back(t.language);
                               return out;
                             })
      .def_property_readonly("vocab_size", [](const Session& s) { return s.family.vocab.size(); })
      .def(
          "initial_checkpoint",
          [](const Session& s, const fs::path& path) {
            py::gil_scoped_release release;
            save_checkpoint(path, pretrained_init(s.model, s.family, s.config.data), s.config.model.hash());
          },
          py::arg("path"))
      .def(
          "prime",
          [](const Session& s, const fs::path& init, const fs::path& out, const std::string& variant,
             std::uint64_t seed) {
            const PrimingVariant v = variant_from(variant);
            std::vector<std::string> log;
            {
              py::gil_scoped_release release;
              const ParameterRegistry start = load_checkpoint(init, s.config.model.hash());
              const PrimingResult r = run_priming(s.model, start, s.data, v, s.config, seed);
              save_checkpoint(out, r.primed, s.config.model.hash());
              for (const auto& l : r.log) log.push_back(to_json(l).dump());
            }
            return log;
          },
          py::arg("init"), py::arg("out"), py::arg("variant") = "meta_pe_sim", py::arg("seed") = 0,
          "Primes a checkpoint; returns the step log as JSON lines.")
      .def(
          "finetune",
          [](const Session& s, const fs::path& init, const std::string& setting, const std::string& language,
             std::uint64_t seed, std::optional<fs::path> out) {
            const FineTuneSetting st = setting_from_name(setting);
            py::gil_scoped_release release;
            const ParameterRegistry start = load_checkpoint(init, s.config.model.hash());
            const SettingRun run = run_setting(s.model, start, st, s.target(language), s.config.finetune, seed);
            if (out) save_checkpoint(*out, run.finetune.trained, s.config.model.hash());
            return to_json(run.report).dump();
          },
          py::arg("init"), py::arg("setting"), py::arg("language"), py::arg("seed") = 0, py::arg("out") = py::none(),
          "Fine-tunes and scores on the test split; returns the report as JSON.")
      .def(
          "evaluate",
          [](const Session& s, const fs::path& checkpoint, const std::string& language) {
            py::gil_scoped_release release;
            ParameterRegistry r = load_checkpoint(checkpoint, s.config.model.hash());
            return scores_json(evaluate(s.model, r, language, s.target(language).test, LabelScheme::wikiann()));
          },
          py::arg("checkpoint"), py::arg("language"));

  m.def(
      "run_grid",
      [](const std::string& config_json, const std::vector<std::string>& settings,
         const std::vector<std::string>& languages) {
        const RunConfig c = config_from(config_json);
        std::vector<FineTuneSetting> s;
        for (const auto& name : settings) s.push_back(setting_from_name(name));
        py::gil_scoped_release release;
        return reports_json(run_grid(c, s, languages).reports);
      },
      py::arg("config"), py::arg("settings"), py::arg("languages") = std::vector<std::string>{});

  m.def("render_report", [](const std::string& reports) { return render_report(reports_from(reports)); });
}
