#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "metaprime/tensor.hpp"

namespace metaprime {

/// Which parameter set a weight belongs to: the pretrained encoder, the added
/// lightweight (adapter) weights, or a task-specific head.
enum class Partition : unsigned char { Pretrained = 0, Lightweight = 1, Head = 2 };

std::string_view partition_name(Partition p);
Partition partition_from_name(std::string_view name);

class Parameter {
 public:
  Parameter(std::string id, Tensor value, Partition partition, bool trainable = true)
      : id_(std::move(id)), value_(std::move(value)), partition_(partition), trainable_(trainable) {}

  const std::string& id() const { return id_; }
  Partition partition() const { return partition_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool trainable) { trainable_ = trainable; }

  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }

 private:
  std::string id_;
  Tensor value_;
  Partition partition_;
  bool trainable_;
};

/// Gradients keyed by parameter id, ordered for deterministic iteration.
using GradientMap = std::map<std::string, Tensor>;

/// Insertion-ordered collection of parameters. Copying a registry deep-copies
/// every value, which is how snapshots are taken.
class ParameterRegistry {
 public:
  Parameter& add(std::string id, Tensor value, Partition partition, bool trainable = true);

  bool contains(std::string_view id) const;
  Parameter& get(std::string_view id);
  const Parameter& get(std::string_view id) const;
  Parameter* find(std::string_view id);
  const Parameter* find(std::string_view id) const;

  // Removes every parameter matching the predicate, preserving the order of
  // the rest.
  void remove_if(const std::function<bool(const Parameter&)>& pred);

  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t count(Partition p) const;
  std::size_t count_trainable() const;
  std::size_t count_total() const;

  void zero_grad();
  void set_trainable(const std::function<bool(const Parameter&)>& pred);
  void set_trainable_partitions(bool pretrained, bool lightweight, bool head);

  // Collects the accumulated gradient buffers of trainable parameters.
  GradientMap gradients() const;

  // Deep copy of the parameters accepted by the predicate.
  ParameterRegistry subset(const std::function<bool(const Parameter&)>& pred) const;

  // Overwrites values of every parameter present in `other` (ids must exist
  // here with identical shapes).
  void assign_values(const ParameterRegistry& other);

  bool values_bit_equal(const ParameterRegistry& other) const;

 private:
  void reindex();

  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace metaprime
