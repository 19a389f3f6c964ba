#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metaprime/autodiff.hpp"

namespace metaprime {

/// Builds a scalar loss on the given tape from the registry's current values.
/// Must be deterministic.
using LossBuilder = std::function<Var(Tape&, ParameterRegistry&)>;

struct GradCheckEntry {
  std::string id;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // one per checked parameter, registry order
  std::vector<std::string> failures;    // ids whose error exceeds the tolerance
  double max_rel_error = 0.0;
  std::size_t evaluations = 0;

  bool passed() const { return failures.empty(); }
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Lower bound on the relative-error denominator, so entries whose true
  // gradient is ~0 are judged on absolute error instead.
  double denominator_floor = 1e-6;
};

/// Compares tape gradients of every trainable parameter against central
/// differences. Parameter values are restored bit-exactly afterwards.
/// Throws NumericError when the loss is not finite.
GradCheckReport finite_difference_check(const LossBuilder& loss_fn, ParameterRegistry& registry,
                                         const GradCheckOptions& options = {});

}  // namespace metaprime
