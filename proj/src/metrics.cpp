#include "metaprime/metrics.hpp"

#include <algorithm>

#include "metaprime/errors.hpp"

namespace metaprime {

std::vector<Span> extract_spans(const std::vector<std::string>& labels) {
  std::vector<Span> spans;
  bool open = false;
  Span current;
  auto close = [&](std::size_t at) {
    if (open) {
      current.end = at;
      spans.push_back(current);
      open = false;
    }
  };
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const BioTag tag = parse_bio(labels[i]);
    if (tag.prefix == 'O') {
      close(i);
    } else if (tag.prefix == 'B' || !open || current.type != tag.type) {
      close(i);
      current = Span{tag.type, i, i};
      open = true;
    }
  }
  close(labels.size());
  return spans;
}

double f1_from(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

F1Scores micro_f1(const std::vector<std::vector<std::string>>& gold,
                  const std::vector<std::vector<std::string>>& predicted) {
  if (gold.size() != predicted.size()) {
    throw ContractError("micro_f1: " + std::to_string(gold.size()) + " gold sequences vs " +
                        std::to_string(predicted.size()) + " predicted");
  }
  F1Scores out;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != predicted[s].size()) {
      throw ContractError("micro_f1: length mismatch in sequence " + std::to_string(s));
    }
    auto g = extract_spans(gold[s]);
    auto p = extract_spans(predicted[s]);
    std::sort(g.begin(), g.end());
    std::sort(p.begin(), p.end());
    for (const auto& span : g) ++out.per_type[span.type].gold;
    for (const auto& span : p) ++out.per_type[span.type].predicted;
    std::vector<Span> both;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(both));
    for (const auto& span : both) ++out.per_type[span.type].correct;
  }
  for (const auto& [type, c] : out.per_type) {
    out.total.gold += c.gold;
    out.total.predicted += c.predicted;
    out.total.correct += c.correct;
  }
  const auto& t = out.total;
  out.precision = t.predicted ? 100.0 * static_cast<double>(t.correct) / static_cast<double>(t.predicted) : 0.0;
  out.recall = t.gold ? 100.0 * static_cast<double>(t.correct) / static_cast<double>(t.gold) : 0.0;
  out.f1 = f1_from(out.precision, out.recall);
  return out;
}

F1Scores micro_f1(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& predicted,
                  const LabelScheme& scheme) {
  auto to_tags = [&](const std::vector<std::vector<int>>& ids) {
    std::vector<std::vector<std::string>> out;
    out.reserve(ids.size());
    for (const auto& seq : ids) {
      auto& tags = out.emplace_back();
      for (int id : seq) tags.push_back(scheme.tag(id));
    }
    return out;
  };
  return micro_f1(to_tags(gold), to_tags(predicted));
}

}  // namespace metaprime
