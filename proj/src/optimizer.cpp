#include "metaprime/optimizer.hpp"

#include <cmath>

#include "metaprime/errors.hpp"

namespace metaprime {

void AdamW::step(ParameterRegistry& registry, const GradientMap& grads, double lr) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  const double step_size = lr / bias1;
  const double sqrt_bias2 = std::sqrt(bias2);
  for (const auto& [id, grad] : grads) {
    auto values = registry.get(id).value().data();
    if (values.size() != grad.size()) throw DimensionError("adamw: gradient shape mismatch for '" + id + "'");
    auto& m = moments_[id];
    if (m.first.empty()) {
      m.first.assign(values.size(), 0.0);
      m.second.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      values[i] *= 1.0 - lr * config_.weight_decay;
      m.first[i] = config_.beta1 * m.first[i] + (1.0 - config_.beta1) * g;
      m.second[i] = config_.beta2 * m.second[i] + (1.0 - config_.beta2) * g * g;
      const double denom = std::sqrt(m.second[i]) / sqrt_bias2 + config_.epsilon;
      values[i] -= step_size * m.first[i] / denom;
    }
  }
}

double linear_schedule(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  return base_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps);
}

void sgd_step(ParameterRegistry& registry, const GradientMap& grads, double lr) {
  for (const auto& [id, grad] : grads) {
    auto values = registry.get(id).value().data();
    if (values.size() != grad.size()) throw DimensionError("sgd: gradient shape mismatch for '" + id + "'");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = values[i] - lr * grad[i];
  }
}

}  // namespace metaprime
