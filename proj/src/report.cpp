#include "metaprime/report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "metaprime/errors.hpp"

namespace metaprime {

using nlohmann::json;

namespace {

json counts_json(const SpanCounts& c) {
  return {{"gold", c.gold}, {"predicted", c.predicted}, {"correct", c.correct}};
}

SpanCounts counts_from(const json& j) {
  return {j.at("gold").get<std::uint64_t>(), j.at("predicted").get<std::uint64_t>(),
          j.at("correct").get<std::uint64_t>()};
}

std::string fixed2(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

bool full_ft_group(FineTuneSetting s) { return setting_spec(s).full_ft; }

std::vector<std::string> languages_of(const std::vector<EvalReport>& reports) {
  std::vector<std::string> langs;
  for (const auto& r : reports) {
    if (std::find(langs.begin(), langs.end(), r.language) == langs.end()) langs.push_back(r.language);
  }
  std::sort(langs.begin(), langs.end());
  return langs;
}

std::optional<double> mean_where(const std::vector<EvalReport>& reports, FineTuneSetting setting,
                                 const std::optional<std::string>& language, const std::optional<std::uint64_t>& seed) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : reports) {
    if (r.setting != setting) continue;
    if (language && r.language != *language) continue;
    if (seed && r.seed != *seed) continue;
    sum += r.scores.f1;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

json to_json(const EvalReport& r) {
  json per_type = json::object();
  for (const auto& [type, c] : r.scores.per_type) per_type[type] = counts_json(c);
  return {
      {"setting", setting_name(r.setting)},
      {"language", r.language},
      {"seed", r.seed},
      {"precision", r.scores.precision},
      {"recall", r.scores.recall},
      {"f1", r.scores.f1},
      {"spans", counts_json(r.scores.total)},
      {"per_type", per_type},
      {"trainable_params", r.trainable_fraction.trainable},
      {"total_params", r.trainable_fraction.total},
      {"trainable_fraction", format_percent(r.trainable_fraction)},
      {"best_step", r.best_step},
  };
}

EvalReport eval_report_from_json(const json& j) {
  try {
    EvalReport r;
    r.setting = setting_from_name(j.at("setting").get<std::string>());
    r.language = j.at("language").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.scores.precision = j.at("precision").get<double>();
    r.scores.recall = j.at("recall").get<double>();
    r.scores.f1 = j.at("f1").get<double>();
    r.scores.total = counts_from(j.at("spans"));
    for (const auto& [type, c] : j.at("per_type").items()) r.scores.per_type[type] = counts_from(c);
    r.trainable_fraction = {j.at("trainable_params").get<std::uint64_t>(), j.at("total_params").get<std::uint64_t>()};
    r.best_step = j.value("best_step", std::size_t{0});
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed result record: ") + e.what());
  }
}

json to_json(const StepLog& log) {
  return {
      {"outer_step", log.outer_step},
      {"task_id", log.task_id},
      {"support_loss_per_inner_step", log.support_losses},
      {"query_loss", log.query_loss},
      {"grad_norms",
       {{"pretrained", log.grad_norms.pretrained},
        {"lightweight", log.grad_norms.lightweight},
        {"head", log.grad_norms.head}}},
      {"beta_current", log.beta_current},
  };
}

void write_jsonl(std::ostream& out, const std::vector<EvalReport>& reports) {
  for (const auto& r : reports) out << to_json(r).dump() << '\n';
}

std::vector<EvalReport> read_jsonl(std::istream& in) {
  std::vector<EvalReport> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(eval_report_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ParseError("results line " + std::to_string(number) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("results line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<EvalReport> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open results " + path.string());
  return read_jsonl(in);
}

std::optional<double> mean_f1(const std::vector<EvalReport>& reports, FineTuneSetting setting,
                              const std::string& language) {
  return mean_where(reports, setting, language, std::nullopt);
}

std::string render_table(const std::vector<EvalReport>& reports) {
  const auto langs = languages_of(reports);
  std::vector<FineTuneSetting> rows;
  for (auto s : table_settings()) {
    if (mean_where(reports, s, std::nullopt, std::nullopt)) rows.push_back(s);
  }
  for (auto s : matrix_settings()) {
    if (std::find(rows.begin(), rows.end(), s) == rows.end() && mean_where(reports, s, std::nullopt, std::nullopt)) {
      rows.push_back(s);
    }
  }

  // cells[row][col]; the last column is the average over languages.
  std::vector<std::vector<std::optional<double>>> cells;
  for (auto s : rows) {
    auto& row = cells.emplace_back();
    double sum = 0.0;
    bool complete = true;
    for (const auto& l : langs) {
      row.push_back(mean_f1(reports, s, l));
      if (row.back()) sum += *row.back();
      else complete = false;
    }
    row.push_back(complete && !langs.empty() ? std::optional(sum / static_cast<double>(langs.size())) : std::nullopt);
  }

  std::ostringstream out;
  out << "| Setting |";
  for (const auto& l : langs) out << ' ' << l << " |";
  out << " Avg |\n|---|";
  for (std::size_t c = 0; c <= langs.size(); ++c) out << "---:|";
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto it = std::find_if(reports.begin(), reports.end(),
                                 [&](const EvalReport& e) { return e.setting == rows[r]; });
    const Fraction frac = it->trainable_fraction;
    out << "| " << setting_name(rows[r]) << " (" << format_percent(frac) << ") |";
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (!cells[r][c]) {
        out << " - |";
        continue;
      }
      bool best = true;
      for (std::size_t o = 0; o < rows.size(); ++o) {
        if (full_ft_group(rows[o]) == full_ft_group(rows[r]) && cells[o][c] && *cells[o][c] > *cells[r][c]) best = false;
      }
      const std::string v = fixed2(*cells[r][c]);
      out << ' ' << (best ? "**" + v + "**" : v) << " |";
    }
    out << '\n';
  }
  std::set<std::uint64_t> seeds;
  for (const auto& r : reports) seeds.insert(r.seed);
  out << "\nTest F1, mean over " << seeds.size() << " seed(s). Bold: best in column among full fine-tuning rows and"
      << " among lightweight rows.\n";
  return out.str();
}

MatrixSummary summarize_matrix(const std::vector<EvalReport>& reports) {
  const FineTuneSetting cells[4] = {FineTuneSetting::MetaPrimeAt, FineTuneSetting::MetaPrimeFullFt,
                                    FineTuneSetting::MamlLoopPrimeAt, FineTuneSetting::MamlLoopPrimeFullFt};
  auto fill = [&](const std::optional<std::string>& lang, const std::optional<std::uint64_t>& seed) {
    double v[4];
    for (int i = 0; i < 4; ++i) {
      const auto m = mean_where(reports, cells[i], lang, seed);
      if (!m) throw DataError(std::string("matrix: no results for ") + std::string(setting_name(cells[i])));
      v[i] = *m;
    }
    return MatrixCells{v[0], v[1], v[2], v[3]};
  };
  MatrixSummary out;
  out.mean = fill(std::nullopt, std::nullopt);
  std::set<std::uint64_t> seeds;
  for (const auto& r : reports) seeds.insert(r.seed);
  for (auto s : seeds) out.per_seed[s] = fill(std::nullopt, s);
  for (const auto& l : languages_of(reports)) out.per_language[l] = fill(l, std::nullopt);
  return out;
}

std::string render_matrix(const std::vector<EvalReport>& reports) {
  const MatrixSummary m = summarize_matrix(reports);
  auto mark = [](double v, bool best) { return best ? "**" + fixed2(v) + "**" : fixed2(v); };
  auto yes = [](bool b) { return b ? "yes" : "no"; };
  std::ostringstream out;
  out << "| Priming \\ Fine-tuning | Adapter tuning | Full fine-tuning |\n|---|---:|---:|\n";
  out << "| PE-simulating inner loop | " << mark(m.mean.pe_at, m.mean.pe_row_diagonal()) << " | "
      << mark(m.mean.pe_full, !m.mean.pe_row_diagonal()) << " |\n";
  out << "| Full inner loop | " << mark(m.mean.full_at, !m.mean.full_row_diagonal()) << " | "
      << mark(m.mean.full_full, m.mean.full_row_diagonal()) << " |\n";
  out << "\nMean test F1 over languages and seeds; bold marks the better cell of each row.\n";
  if (const auto ref = [&]() -> std::optional<double> {
        return mean_where(reports, FineTuneSetting::NoPrimeFullFt, std::nullopt, std::nullopt);
      }()) {
    out << "Unprimed full fine-tuning reference: " << fixed2(*ref) << ".\n";
  }

  out << "\n| Seed | PE/AT | PE/Full | Full/AT | Full/Full | Row diagonal | Column diagonal |\n"
      << "|---|---:|---:|---:|---:|---|---|\n";
  std::size_t rows_ok = 0;
  for (const auto& [seed, c] : m.per_seed) {
    rows_ok += c.diagonal_holds();
    out << "| " << seed << " | " << fixed2(c.pe_at) << " | " << fixed2(c.pe_full) << " | " << fixed2(c.full_at)
        << " | " << fixed2(c.full_full) << " | " << yes(c.diagonal_holds()) << " | "
        << yes(c.at_column_matches() && c.full_column_matches()) << " |\n";
  }
  out << "\nRow diagonal holds in " << rows_ok << " of " << m.per_seed.size() << " seed(s).\n";

  out << "\n| Language | PE/AT | PE/Full | Full/AT | Full/Full |\n|---|---:|---:|---:|---:|\n";
  for (const auto& [lang, c] : m.per_language) {
    out << "| " << lang << " | " << fixed2(c.pe_at) << " | " << fixed2(c.pe_full) << " | " << fixed2(c.full_at)
        << " | " << fixed2(c.full_full) << " |\n";
  }
  return out.str();
}

std::string render_report(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  bool any_table = false;
  for (auto s : table_settings()) any_table = any_table || mean_where(reports, s, std::nullopt, std::nullopt);
  if (any_table) out << "## Settings by language\n\n" << render_table(reports);
  bool matrix = true;
  for (auto s : {FineTuneSetting::MetaPrimeAt, FineTuneSetting::MetaPrimeFullFt, FineTuneSetting::MamlLoopPrimeAt,
                 FineTuneSetting::MamlLoopPrimeFullFt}) {
    matrix = matrix && mean_where(reports, s, std::nullopt, std::nullopt);
  }
  if (matrix) out << (any_table ? "\n" : "") << "## Priming x fine-tuning\n\n" << render_matrix(reports);
  if (!any_table && !matrix) out << render_table(reports);
  return out.str();
}

}  // namespace metaprime
