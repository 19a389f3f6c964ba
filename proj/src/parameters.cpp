#include "metaprime/parameters.hpp"

#include <algorithm>

#include "metaprime/errors.hpp"

namespace metaprime {

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::Pretrained: return "PRETRAINED";
    case Partition::Lightweight: return "LIGHTWEIGHT";
    case Partition::Head: return "HEAD";
  }
  return "?";
}

Partition partition_from_name(std::string_view name) {
  if (name == "PRETRAINED") return Partition::Pretrained;
  if (name == "LIGHTWEIGHT") return Partition::Lightweight;
  if (name == "HEAD") return Partition::Head;
  throw ParseError("unknown partition '" + std::string(name) + "'");
}

Parameter& ParameterRegistry::add(std::string id, Tensor value, Partition partition, bool trainable) {
  if (index_.contains(id)) throw ContractError("registry: duplicate parameter id '" + id + "'");
  index_.emplace(id, params_.size());
  params_.emplace_back(std::move(id), std::move(value), partition, trainable);
  return params_.back();
}

bool ParameterRegistry::contains(std::string_view id) const { return index_.contains(std::string(id)); }

Parameter* ParameterRegistry::find(std::string_view id) {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterRegistry::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& ParameterRegistry::get(std::string_view id) {
  if (auto* p = find(id)) return *p;
  throw LookupError("registry: no parameter '" + std::string(id) + "'");
}

const Parameter& ParameterRegistry::get(std::string_view id) const {
  if (auto* p = find(id)) return *p;
  throw LookupError("registry: no parameter '" + std::string(id) + "'");
}

void ParameterRegistry::remove_if(const std::function<bool(const Parameter&)>& pred) {
  std::erase_if(params_, pred);
  reindex();
}

void ParameterRegistry::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) index_.emplace(params_[i].id(), i);
}

std::size_t ParameterRegistry::count(Partition p) const {
  std::size_t n = 0;
  for (const auto& param : params_)
    if (param.partition() == p) n += param.value().size();
  return n;
}

std::size_t ParameterRegistry::count_trainable() const {
  std::size_t n = 0;
  for (const auto& param : params_)
    if (param.trainable()) n += param.value().size();
  return n;
}

std::size_t ParameterRegistry::count_total() const {
  std::size_t n = 0;
  for (const auto& param : params_) n += param.value().size();
  return n;
}

void ParameterRegistry::zero_grad() {
  for (auto& param : params_) param.value().zero_grad();
}

void ParameterRegistry::set_trainable(const std::function<bool(const Parameter&)>& pred) {
  for (auto& param : params_) param.set_trainable(pred(param));
}

void ParameterRegistry::set_trainable_partitions(bool pretrained, bool lightweight, bool head) {
  set_trainable([&](const Parameter& p) {
    switch (p.partition()) {
      case Partition::Pretrained: return pretrained;
      case Partition::Lightweight: return lightweight;
      case Partition::Head: return head;
    }
    return false;
  });
}

GradientMap ParameterRegistry::gradients() const {
  GradientMap out;
  for (const auto& param : params_) {
    if (!param.trainable() || !param.value().has_grad()) continue;
    auto g = param.value().grad();
    out.emplace(param.id(), Tensor(param.value().shape(), std::vector<double>(g.begin(), g.end())));
  }
  return out;
}

ParameterRegistry ParameterRegistry::subset(const std::function<bool(const Parameter&)>& pred) const {
  ParameterRegistry out;
  for (const auto& param : params_) {
    if (!pred(param)) continue;
    Tensor value(param.value().shape(),
                 std::vector<double>(param.value().data().begin(), param.value().data().end()));
    out.add(param.id(), std::move(value), param.partition(), param.trainable());
  }
  return out;
}

void ParameterRegistry::assign_values(const ParameterRegistry& other) {
  for (const auto& src : other) {
    auto& dst = get(src.id());
    if (dst.value().shape() != src.value().shape()) {
      throw DimensionError("registry: shape mismatch assigning '" + src.id() + "': " +
                           shape_string(dst.value().shape()) + " vs " + shape_string(src.value().shape()));
    }
    std::ranges::copy(src.value().data(), dst.value().data().begin());
  }
}

bool ParameterRegistry::values_bit_equal(const ParameterRegistry& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.id() != b.id() || a.partition() != b.partition() || !a.value().bit_equal(b.value())) return false;
  }
  return true;
}

}  // namespace metaprime
