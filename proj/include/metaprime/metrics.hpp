#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metaprime/bio.hpp"

namespace metaprime {

/// Entity span; `end` is exclusive.
struct Span {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const Span&) const = default;
};

// Maximal spans of a BIO sequence. An I-X that does not continue an X span
// opens a new one, which matches extracting from the repaired sequence.
std::vector<Span> extract_spans(const std::vector<std::string>& labels);

struct SpanCounts {
  std::uint64_t gold = 0;
  std::uint64_t predicted = 0;
  std::uint64_t correct = 0;

  bool operator==(const SpanCounts&) const = default;
};

/// Entity-level micro scores in percent.
struct F1Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  SpanCounts total;
  std::map<std::string, SpanCounts> per_type;
};

// Throws ContractError when the corpora differ in sequence count or any
// sequence pair differs in length.
F1Scores micro_f1(const std::vector<std::vector<std::string>>& gold,
                  const std::vector<std::vector<std::string>>& predicted);

// Same, over tag ids of `scheme`.
F1Scores micro_f1(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& predicted,
                  const LabelScheme& scheme);

// P, R in percent -> F1 in percent; 0 when both are 0.
double f1_from(double precision, double recall);

}  // namespace metaprime
