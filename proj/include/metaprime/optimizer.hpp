#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metaprime/parameters.hpp"

namespace metaprime {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  bool operator==(const AdamWConfig&) const = default;
};

/// AdamW with decoupled weight decay (PyTorch update order: decay, then the
/// bias-corrected Adam step). Moments are created lazily for every parameter
/// that receives a gradient.
class AdamW {
 public:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // One optimizer step at learning rate `lr` over every entry of `grads`.
  void step(ParameterRegistry& registry, const GradientMap& grads, double lr);

  std::uint64_t step_count() const { return steps_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

// Linear decay to zero without warmup: base * (total - step) / total for the
// 0-based step index.
double linear_schedule(double base_lr, std::size_t step, std::size_t total_steps);

// p <- p - lr * g for every entry of `grads`.
void sgd_step(ParameterRegistry& registry, const GradientMap& grads, double lr);

}  // namespace metaprime
