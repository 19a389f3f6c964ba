#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "metaprime/parameters.hpp"
#include "metaprime/tensor.hpp"

namespace metaprime {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Reverse-mode computation tape. Nodes are appended in evaluation order, so
/// the tape order is already topological and backward walks it in reverse.
///
/// Gradients of trainable parameters are *added* into each parameter's grad
/// buffer; callers zero them between steps. Parameters that do not take part
/// in the loss (or are frozen) are absent from the returned map and their
/// buffers are left untouched.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const double> out_grad)>;

  // With record_gradients=false nothing is kept for backward (inference).
  explicit Tape(bool record_gradients = true) : record_gradients_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // One leaf per parameter; repeated calls return the same node.
  Var param(Parameter& parameter);

  GradientMap backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Primitive-author API.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  const Tensor& value(std::size_t node) const;
  bool requires_grad(std::size_t node) const { return nodes_[node].requires_grad; }
  // Gradient buffer of a node, allocated (zeroed) on first access.
  std::span<double> grad(std::size_t node);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Parameter* parameter = nullptr;
    std::vector<double> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
  bool record_gradients_ = true;
};

// Primitives. Every result lives on the tape of its operands; all operands
// must share one tape.

// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
// Same-shape sum, or row-broadcast when b is rank-1 with b.size == a.cols.
Var add(Var a, Var b);
// Elementwise product of same-shape operands.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// Sum of all entries; returns a scalar.
Var sum(Var a);
// Rows of `table` selected by ids: [n, d].
Var embedding(Var table, std::span<const int> ids);
// Row-wise softmax.
Var softmax(Var a);
// Row-wise layer normalization with learned gain and bias (both rank-1, size = cols).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var relu(Var a);
// Exact (erf-based) GELU.
Var gelu(Var a);
// Evaluation-mode dropout: identity.
Var dropout(Var a);
// Mean softmax cross-entropy over rows whose gold label is >= 0; rows with a
// negative label (padding) are ignored.
Var cross_entropy(Var logits, std::span<const int> gold);

/// Multi-head scaled dot-product attention over a packed batch.
/// q, k, v: [batch*seq_len, d]. key_mask[i] != 0 marks row i as padding; padded
/// keys receive zero attention weight. Heads split the feature axis evenly.
Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t seq_len, std::size_t heads,
              std::span<const std::uint8_t> key_mask);

}  // namespace metaprime
