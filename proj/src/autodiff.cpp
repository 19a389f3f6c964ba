#include "metaprime/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "metaprime/errors.hpp"

namespace metaprime {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("var: empty handle");
  return tape_->value(index_);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& parameter) {
  if (auto it = param_nodes_.find(&parameter); it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.external = &parameter.value();
  node.parameter = &parameter;
  node.requires_grad = record_gradients_ && parameter.trainable();
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(&parameter, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError("tape: operand recorded on a different tape");
    node.requires_grad = node.requires_grad || nodes_[in.index_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t node) const {
  const Node& n = nodes_.at(node);
  return n.external ? *n.external : n.value;
}

std::span<double> Tape::grad(std::size_t node) {
  Node& n = nodes_[node];
  if (n.grad.empty()) n.grad.assign(value(node).size(), 0.0);
  return n.grad;
}

GradientMap Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss belongs to a different tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  if (backward_done_) throw ContractError("backward: tape already consumed");
  backward_done_ = true;

  GradientMap out;
  if (!nodes_[loss.index_].requires_grad) return out;

  grad(loss.index_)[0] = 1.0;
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }

  for (auto& n : nodes_) {
    if (!n.parameter || !n.requires_grad || n.grad.empty()) continue;
    auto dst = n.parameter->value().grad();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad[j];
    out.emplace(n.parameter->id(), Tensor(n.parameter->value().shape(), std::move(n.grad)));
    n.grad.clear();
  }
  return out;
}

namespace {

Tape& common_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands must share one tape");
  }
  return a.tape();
}

void require_matrix(const Tensor& t, const char* op, const char* operand) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": " + operand + " must be rank-2, got " + shape_string(t.shape()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = common_tape(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix(A, "matmul", "lhs");
  require_matrix(B, "matmul", "rhs");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_string(A.shape()) + " x " +
                         shape_string(B.shape()));
  }
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out.at(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A.at(i, p);
      const double* brow = &B.at(p, 0);
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::size_t ia = a.index(), ib = b.index();
  return tape.record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::span<const double> g) {
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.requires_grad(ia)) {
      auto ga = t.grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &B.at(p, 0);
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * brow[j];
          ga[i * k + p] += acc;
        }
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A.at(i, p);
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = common_tape(a, b, "add");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool broadcast = B.rank() == 1 && A.rank() == 2 && B.size() == A.cols();
  if (!broadcast && A.shape() != B.shape()) {
    throw DimensionError("add: incompatible shapes " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
  }
  Tensor out = A;
  out.drop_grad();
  const std::size_t cols = broadcast ? B.size() : out.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i % cols];
  const std::size_t ia = a.index(), ib = b.index();
  return tape.record(std::move(out), {a, b}, [ia, ib, cols](Tape& t, std::span<const double> g) {
    if (t.requires_grad(ia)) {
      auto ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = common_tape(a, b, "mul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) {
    throw DimensionError("mul: incompatible shapes " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
  }
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  const std::size_t ia = a.index(), ib = b.index();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape& t, std::span<const double> g) {
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.requires_grad(ia)) {
      auto ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out(a.shape());
  const Tensor& A = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * factor;
  const std::size_t ia = a.index();
  return a.tape().record(std::move(out), {a}, [ia, factor](Tape& t, std::span<const double> g) {
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  const std::size_t ia = a.index();
  return a.tape().record(Tensor::scalar(total), {a}, [ia](Tape& t, std::span<const double> g) {
    auto ga = t.grad(ia);
    for (double& x : ga) x += g[0];
  });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& T = table.value();
  require_matrix(T, "embedding", "table");
  const std::size_t vocab = T.dim(0), d = T.dim(1);
  Tensor out(Shape{ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw InputError("embedding: token id " + std::to_string(ids[r]) + " out of range [0, " +
                       std::to_string(vocab) + ")");
    }
    std::copy_n(&T.at(static_cast<std::size_t>(ids[r]), 0), d, &out.at(r, 0));
  }
  const std::size_t it = table.index();
  std::vector<int> rows(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table},
                             [it, d, rows = std::move(rows)](Tape& t, std::span<const double> g) {
                               auto gt = t.grad(it);
                               for (std::size_t r = 0; r < rows.size(); ++r) {
                                 double* dst = &gt[static_cast<std::size_t>(rows[r]) * d];
                                 for (std::size_t j = 0; j < d; ++j) dst[j] += g[r * d + j];
                               }
                             });
}

namespace {

void softmax_row(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - mx);
    z += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= z;
}

}  // namespace

Var softmax(Var a) {
  const Tensor& A = a.value();
  const std::size_t rows = A.rows(), cols = A.cols();
  if (cols == 0) throw DimensionError("softmax: empty rows in " + shape_string(A.shape()));
  Tensor out(A.shape());
  for (std::size_t r = 0; r < rows; ++r) softmax_row(&A[r * cols], &out[r * cols], cols);
  const std::size_t ia = a.index(), io = a.tape().size();
  return a.tape().record(std::move(out), {a}, [ia, io, rows, cols](Tape& t, std::span<const double> g) {
    const Tensor& Y = t.value(io);
    auto ga = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * Y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += Y[r * cols + j] * (g[r * cols + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = common_tape(x, gain, "layer_norm");
  common_tape(x, bias, "layer_norm");
  const Tensor& X = x.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" + shape_string(bias.shape()) +
                         " do not match feature width " + std::to_string(cols));
  }
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor out(X.shape());
  std::vector<double> xhat(X.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &X[r * cols];
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      xhat[r * cols + j] = (xr[j] - mean) * inv_std[r];
      out[r * cols + j] = xhat[r * cols + j] * G[j] + B[j];
    }
  }
  const std::size_t ix = x.index(), ig = gain.index(), ib = bias.index();
  return tape.record(std::move(out), {x, gain, bias},
                     [ix, ig, ib, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                         Tape& t, std::span<const double> g) {
                       const Tensor& G = t.value(ig);
                       if (t.requires_grad(ig)) {
                         auto gg = t.grad(ig);
                         for (std::size_t i = 0; i < g.size(); ++i) gg[i % cols] += g[i] * xhat[i];
                       }
                       if (t.requires_grad(ib)) {
                         auto gb = t.grad(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
                       }
                       if (!t.requires_grad(ix)) return;
                       auto gx = t.grad(ix);
                       const double n = static_cast<double>(cols);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double mean_d = 0.0, mean_dx = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) {
                           const double d = g[r * cols + j] * G[j];
                           mean_d += d;
                           mean_dx += d * xhat[r * cols + j];
                         }
                         mean_d /= n;
                         mean_dx /= n;
                         for (std::size_t j = 0; j < cols; ++j) {
                           const double d = g[r * cols + j] * G[j];
                           gx[r * cols + j] += inv_std[r] * (d - mean_d - xhat[r * cols + j] * mean_dx);
                         }
                       }
                     });
}

Var relu(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] > 0.0 ? A[i] : 0.0;
  const std::size_t ia = a.index();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::span<const double> g) {
    const Tensor& A = t.value(ia);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (A[i] > 0.0) ga[i] += g[i];
  });
}

Var gelu(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * A[i] * (1.0 + std::erf(A[i] * std::numbers::sqrt2 / 2.0));
  const std::size_t ia = a.index();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::span<const double> g) {
    const Tensor& A = t.value(ia);
    auto ga = t.grad(ia);
    const double inv_sqrt_2pi = std::numbers::inv_sqrtpi / std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = A[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      ga[i] += g[i] * (cdf + x * pdf);
    }
  });
}

Var dropout(Var a) { return a; }

Var cross_entropy(Var logits, std::span<const int> gold) {
  const Tensor& L = logits.value();
  require_matrix(L, "cross_entropy", "logits");
  const std::size_t rows = L.dim(0), cols = L.dim(1);
  if (gold.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(gold.size()) + " labels for logits " +
                         shape_string(L.shape()));
  }
  std::size_t counted = 0;
  double total = 0.0;
  Tensor probs(L.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    if (gold[r] < 0) continue;
    if (static_cast<std::size_t>(gold[r]) >= cols) {
      throw InputError("cross_entropy: label " + std::to_string(gold[r]) + " out of range for " +
                       std::to_string(cols) + " classes");
    }
    softmax_row(&L[r * cols], &probs[r * cols], cols);
    double mx = L[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, L[r * cols + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(L[r * cols + j] - mx);
    total += (mx + std::log(z)) - L[r * cols + static_cast<std::size_t>(gold[r])];
    ++counted;
  }
  if (counted == 0) throw ContractError("cross_entropy: every position is padding");
  const double inv = 1.0 / static_cast<double>(counted);
  const std::size_t il = logits.index();
  std::vector<int> labels(gold.begin(), gold.end());
  return logits.tape().record(
      Tensor::scalar(total * inv), {logits},
      [il, cols, inv, labels = std::move(labels), probs = std::move(probs)](Tape& t, std::span<const double> g) {
        auto gl = t.grad(il);
        for (std::size_t r = 0; r < labels.size(); ++r) {
          if (labels[r] < 0) continue;
          for (std::size_t j = 0; j < cols; ++j) {
            const double target = static_cast<int>(j) == labels[r] ? 1.0 : 0.0;
            gl[r * cols + j] += g[0] * inv * (probs[r * cols + j] - target);
          }
        }
      });
}

Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t seq_len, std::size_t heads,
              std::span<const std::uint8_t> key_mask) {
  Tape& tape = common_tape(q, k, "attention");
  common_tape(q, v, "attention");
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  require_matrix(Q, "attention", "q");
  const std::size_t rows = batch * seq_len, d = Q.cols();
  if (Q.rows() != rows || K.shape() != Q.shape() || V.shape() != Q.shape()) {
    throw DimensionError("attention: q/k/v " + shape_string(Q.shape()) + "/" + shape_string(K.shape()) + "/" +
                         shape_string(V.shape()) + " do not match batch " + std::to_string(batch) + " x seq " +
                         std::to_string(seq_len));
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (key_mask.size() != rows) {
    throw DimensionError("attention: key mask length " + std::to_string(key_mask.size()) + " != " +
                         std::to_string(rows));
  }
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs[(b, h, i, j)] for query i and key j within sequence b.
  std::vector<double> probs(batch * heads * seq_len * seq_len, 0.0);
  Tensor out(Q.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * seq_len;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < seq_len; ++i) {
        double* p = &probs[((b * heads + h) * seq_len + i) * seq_len];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < seq_len; ++j) {
          if (key_mask[base + j]) continue;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += Q.at(base + i, off + c) * K.at(base + j, off + c);
          p[j] = s * inv_scale;
          mx = std::max(mx, p[j]);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;
        double z = 0.0;
        for (std::size_t j = 0; j < seq_len; ++j) {
          if (key_mask[base + j]) continue;
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        for (std::size_t j = 0; j < seq_len; ++j) {
          if (key_mask[base + j]) continue;
          p[j] /= z;
          for (std::size_t c = 0; c < dh; ++c) out.at(base + i, off + c) += p[j] * V.at(base + j, off + c);
        }
      }
    }
  }
  const std::size_t iq = q.index(), ik = k.index(), iv = v.index();
  std::vector<std::uint8_t> mask(key_mask.begin(), key_mask.end());
  return tape.record(
      std::move(out), {q, k, v},
      [iq, ik, iv, batch, seq_len, heads, dh, d, inv_scale, probs = std::move(probs), mask = std::move(mask)](
          Tape& t, std::span<const double> g) {
        const Tensor& Q = t.value(iq);
        const Tensor& K = t.value(ik);
        const Tensor& V = t.value(iv);
        const bool need_q = t.requires_grad(iq), need_k = t.requires_grad(ik), need_v = t.requires_grad(iv);
        std::span<double> gq, gk, gv;
        if (need_q) gq = t.grad(iq);
        if (need_k) gk = t.grad(ik);
        if (need_v) gv = t.grad(iv);
        std::vector<double> dp(seq_len);
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t base = b * seq_len;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < seq_len; ++i) {
              const double* p = &probs[((b * heads + h) * seq_len + i) * seq_len];
              const double* go = &g[(base + i) * d + off];
              double dot = 0.0;
              for (std::size_t j = 0; j < seq_len; ++j) {
                if (mask[base + j]) continue;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += go[c] * V.at(base + j, off + c);
                dp[j] = s;
                dot += s * p[j];
                if (need_v)
                  for (std::size_t c = 0; c < dh; ++c) gv[(base + j) * d + off + c] += p[j] * go[c];
              }
              for (std::size_t j = 0; j < seq_len; ++j) {
                if (mask[base + j]) continue;
                const double ds = p[j] * (dp[j] - dot) * inv_scale;
                for (std::size_t c = 0; c < dh; ++c) {
                  if (need_q) gq[(base + i) * d + off + c] += ds * K.at(base + j, off + c);
                  if (need_k) gk[(base + j) * d + off + c] += ds * Q.at(base + i, off + c);
                }
              }
            }
          }
        }
      });
}

}  // namespace metaprime
