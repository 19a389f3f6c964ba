#include "metaprime/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "metaprime/errors.hpp"

namespace metaprime {

namespace {

double evaluate(const LossBuilder& loss_fn, ParameterRegistry& registry) {
  Tape tape;
  const double value = loss_fn(tape, registry).value()[0];
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "finite-difference check: loss is not finite (" << value << ")";
    throw NumericError(msg.str());
  }
  return value;
}

}  // namespace

GradCheckReport finite_difference_check(const LossBuilder& loss_fn, ParameterRegistry& registry,
                                         const GradCheckOptions& options) {
  GradCheckReport report;

  registry.zero_grad();
  GradientMap analytic;
  {
    Tape tape;
    Var loss = loss_fn(tape, registry);
    if (!std::isfinite(loss.value()[0])) {
      std::ostringstream msg;
      msg << "finite-difference check: loss is not finite (" << loss.value()[0] << ")";
      throw NumericError(msg.str());
    }
    analytic = tape.backward(loss);
  }

  for (auto& param : registry) {
    if (!param.trainable()) continue;
    GradCheckEntry entry;
    entry.id = param.id();
    auto values = param.value().data();
    const auto found = analytic.find(param.id());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.epsilon;
      const double plus = evaluate(loss_fn, registry);
      values[i] = original - options.epsilon;
      const double minus = evaluate(loss_fn, registry);
      values[i] = original;
      report.evaluations += 2;

      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double exact = found == analytic.end() ? 0.0 : found->second[i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(exact - numeric) / denom;
      if (rel > entry.max_rel_error || i == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, rel);
        entry.worst_index = i;
        entry.analytic = exact;
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    if (entry.max_rel_error > options.tolerance) report.failures.push_back(entry.id);
    report.entries.push_back(std::move(entry));
  }
  registry.zero_grad();
  return report;
}

}  // namespace metaprime
