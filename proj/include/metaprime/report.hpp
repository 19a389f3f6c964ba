#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metaprime/finetune.hpp"
#include "metaprime/priming.hpp"

namespace metaprime {

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StepLog& log);

// One compact JSON document per line.
void write_jsonl(std::ostream& out, const std::vector<EvalReport>& reports);
std::vector<EvalReport> read_jsonl(std::istream& in);
std::vector<EvalReport> read_jsonl(const std::filesystem::path& path);

// Mean test F1 of (setting, language) over whatever seeds are present.
std::optional<double> mean_f1(const std::vector<EvalReport>& reports, FineTuneSetting setting,
                              const std::string& language);

// Settings x languages table with an average column. In each column the best
// row of each group (full fine-tuning rows, lightweight rows) is bold.
std::string render_table(const std::vector<EvalReport>& reports);

/// The four priming x fine-tuning cells for one seed (or the seed mean).
struct MatrixCells {
  double pe_at = 0.0;    // PE-simulating priming, adapter tuning
  double pe_full = 0.0;  // PE-simulating priming, full fine-tuning
  double full_at = 0.0;  // full-MAML priming, adapter tuning
  double full_full = 0.0;

  bool pe_row_diagonal() const { return pe_at >= pe_full; }
  bool full_row_diagonal() const { return full_full >= full_at; }
  bool diagonal_holds() const { return pe_row_diagonal() && full_row_diagonal(); }
  // Column view: the priming that matches the fine-tuning strategy wins.
  bool at_column_matches() const { return pe_at >= full_at; }
  bool full_column_matches() const { return full_full >= pe_full; }
};

struct MatrixSummary {
  MatrixCells mean;
  std::map<std::uint64_t, MatrixCells> per_seed;  // cell = mean over languages
  std::map<std::string, MatrixCells> per_language;  // cell = mean over seeds
};

// Throws DataError when a cell has no reports.
MatrixSummary summarize_matrix(const std::vector<EvalReport>& reports);

std::string render_matrix(const std::vector<EvalReport>& reports);

// Table, matrix, or both depending on which settings the reports cover.
std::string render_report(const std::vector<EvalReport>& reports);

}  // namespace metaprime
