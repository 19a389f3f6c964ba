#include "metaprime/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "metaprime/checkpoint.hpp"
#include "metaprime/errors.hpp"

namespace metaprime {

std::string_view nonlinearity_name(Nonlinearity n) { return n == Nonlinearity::Relu ? "relu" : "gelu"; }

Nonlinearity nonlinearity_from_name(std::string_view name) {
  if (name == "relu" || name == "RELU") return Nonlinearity::Relu;
  if (name == "gelu" || name == "GELU") return Nonlinearity::Gelu;
  throw ConfigError("unknown adapter nonlinearity '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  std::vector<std::string> problems;
  if (vocab_size < 2) problems.push_back("vocab_size must be >= 2 (UNK and PAD are reserved)");
  if (d_model == 0) problems.push_back("d_model must be >= 1");
  if (n_heads == 0 || d_model % n_heads != 0) problems.push_back("d_model must be divisible by n_heads");
  if (d_ff == 0) problems.push_back("d_ff must be >= 1");
  if (max_seq_len == 0) problems.push_back("max_seq_len must be >= 1");
  if (n_labels < 2) problems.push_back("n_labels must be >= 2");
  if (adapter_bottleneck < 1) problems.push_back("adapter_bottleneck must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
}

std::string ModelConfig::canonical() const {
  std::ostringstream out;
  out << "vocab_size=" << vocab_size << ";d_model=" << d_model << ";n_layers=" << n_layers
      << ";n_heads=" << n_heads << ";d_ff=" << d_ff << ";max_seq_len=" << max_seq_len << ";n_labels=" << n_labels
      << ";adapter_bottleneck=" << adapter_bottleneck
      << ";adapter_nonlinearity=" << nonlinearity_name(adapter_nonlinearity)
      << ";adapter_residual=" << (adapter_residual ? 1 : 0) << ";";
  return out.str();
}

std::uint64_t ModelConfig::hash() const { return fnv1a64(canonical()); }

ModelConfig mbert_like_config() {
  ModelConfig c;
  c.vocab_size = 119547;
  c.d_model = 768;
  c.n_layers = 12;
  c.n_heads = 12;
  c.d_ff = 3072;
  c.max_seq_len = 512;
  c.n_labels = 7;
  c.adapter_bottleneck = 64;
  return c;
}

ParameterCounts count_parameters(const ModelConfig& c) {
  const std::uint64_t d = c.d_model, ff = c.d_ff;
  ParameterCounts counts;
  counts.pretrained = c.vocab_size * d + c.max_seq_len * d + 2 * d;
  const std::uint64_t per_layer = 4 * (d * d + d)  // q, k, v, o
                                  + 2 * d          // attention norm
                                  + d * ff + ff + ff * d + d  // feed-forward
                                  + 2 * d;         // feed-forward norm
  counts.pretrained += c.n_layers * per_layer;
  counts.lightweight = d * c.adapter_bottleneck + c.adapter_bottleneck + c.adapter_bottleneck * d + d;
  counts.head = d * c.n_labels + c.n_labels;
  return counts;
}

Fraction count_trainable_fraction(const ModelConfig& config, const TrainablePartitions& partitions) {
  const ParameterCounts counts = count_parameters(config);
  Fraction f;
  f.total = counts.pretrained + counts.head;
  if (partitions.pretrained) f.trainable += counts.pretrained;
  if (partitions.head) f.trainable += counts.head;
  if (partitions.adapter_present) {
    f.total += counts.lightweight;
    if (partitions.lightweight) f.trainable += counts.lightweight;
  }
  return f;
}

std::string format_percent(const Fraction& fraction) {
  const double p = fraction.percent();
  char buf[64];
  if (p <= 0.0) return "0%";
  if (p >= 1.0) {
    std::snprintf(buf, sizeof buf, "%.0f%%", p);
    return buf;
  }
  int exponent = static_cast<int>(std::floor(std::log10(p)));
  double mantissa = std::round(p / std::pow(10.0, exponent));
  if (mantissa >= 10.0) {
    mantissa = 1.0;
    ++exponent;
  }
  if (exponent >= -2) {
    std::snprintf(buf, sizeof buf, "%.*f%%", -exponent, mantissa * std::pow(10.0, exponent));
  } else {
    std::snprintf(buf, sizeof buf, "%.0fe%d%%", mantissa, exponent);
  }
  return buf;
}

std::string head_prefix(std::string_view task_id) { return "head." + std::string(task_id) + "."; }

namespace {

Tensor uniform(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

std::string layer_prefix(std::size_t layer) { return "encoder.layer" + std::to_string(layer) + "."; }

Var linear(Tape& tape, ParameterRegistry& registry, Var x, const std::string& name) {
  Var w = tape.param(registry.get(name + ".weight"));
  Var b = tape.param(registry.get(name + ".bias"));
  return add(matmul(x, w), b);
}

Var norm(Tape& tape, ParameterRegistry& registry, Var x, const std::string& name) {
  return layer_norm(x, tape.param(registry.get(name + ".gain")), tape.param(registry.get(name + ".bias")));
}

}  // namespace

TaggerModel::TaggerModel(ModelConfig config) : config_(config) { config_.validate(); }

void TaggerModel::init_encoder(ParameterRegistry& registry, Rng& rng) const {
  const std::size_t d = config_.d_model, ff = config_.d_ff;
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = normal(rng);
    return t;
  };
  auto add_linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    registry.add(name + ".weight", uniform({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng),
                 Partition::Pretrained);
    registry.add(name + ".bias", Tensor(Shape{out}), Partition::Pretrained);
  };
  auto add_norm = [&](const std::string& name) {
    registry.add(name + ".gain", Tensor(Shape{d}, 1.0), Partition::Pretrained);
    registry.add(name + ".bias", Tensor(Shape{d}), Partition::Pretrained);
  };
  registry.add("encoder.token_embedding", gaussian({config_.vocab_size, d}), Partition::Pretrained);
  registry.add("encoder.position_embedding", gaussian({config_.max_seq_len, d}), Partition::Pretrained);
  add_norm("encoder.embedding_norm");
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.o"}) add_linear(p + proj, d, d);
    add_norm(p + "attn_norm");
    add_linear(p + "ffn.in", d, ff);
    add_linear(p + "ffn.out", ff, d);
    add_norm(p + "ffn_norm");
  }
}

void TaggerModel::init_adapter(ParameterRegistry& registry, Rng& rng, double scale) const {
  const std::size_t d = config_.d_model, b = config_.adapter_bottleneck;
  registry.add("adapter.down.weight", uniform({d, b}, scale, rng), Partition::Lightweight);
  registry.add("adapter.down.bias", Tensor(Shape{b}), Partition::Lightweight);
  registry.add("adapter.up.weight", Tensor(Shape{b, d}), Partition::Lightweight);
  registry.add("adapter.up.bias", Tensor(Shape{d}), Partition::Lightweight);
}

void TaggerModel::init_head(ParameterRegistry& registry, std::string_view task_id, Rng& rng) const {
  const std::string prefix = head_prefix(task_id);
  registry.remove_if([&](const Parameter& p) { return p.id().starts_with(prefix); });
  const std::size_t d = config_.d_model;
  registry.add(prefix + "weight", uniform({d, config_.n_labels}, 1.0 / std::sqrt(static_cast<double>(d)), rng),
               Partition::Head);
  registry.add(prefix + "bias", Tensor(Shape{config_.n_labels}), Partition::Head);
}

bool TaggerModel::has_adapter(const ParameterRegistry& registry) { return registry.contains("adapter.down.weight"); }

void TaggerModel::remove_adapter(ParameterRegistry& registry) {
  registry.remove_if([](const Parameter& p) { return p.partition() == Partition::Lightweight; });
}

void TaggerModel::remove_heads(ParameterRegistry& registry) {
  registry.remove_if([](const Parameter& p) { return p.partition() == Partition::Head; });
}

Var TaggerModel::encode(Tape& tape, ParameterRegistry& registry, const Batch& batch) const {
  if (batch.seq_len > config_.max_seq_len) {
    throw InputError("encode: sequence length " + std::to_string(batch.seq_len) + " exceeds max_seq_len " +
                     std::to_string(config_.max_seq_len));
  }
  const std::size_t rows = batch.batch * batch.seq_len;
  if (batch.ids.size() != rows || batch.padding.size() != rows) {
    throw DimensionError("encode: batch buffers do not match " + std::to_string(batch.batch) + "x" +
                         std::to_string(batch.seq_len));
  }
  for (int id : batch.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw InputError("encode: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(config_.vocab_size));
    }
  }
  std::vector<int> positions(rows);
  for (std::size_t r = 0; r < rows; ++r) positions[r] = static_cast<int>(r % batch.seq_len);

  Var x = add(embedding(tape.param(registry.get("encoder.token_embedding")), batch.ids),
              embedding(tape.param(registry.get("encoder.position_embedding")), positions));
  x = dropout(norm(tape, registry, x, "encoder.embedding_norm"));
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    Var q = linear(tape, registry, x, p + "attn.q");
    Var k = linear(tape, registry, x, p + "attn.k");
    Var v = linear(tape, registry, x, p + "attn.v");
    Var a = attention(q, k, v, batch.batch, batch.seq_len, config_.n_heads, batch.padding);
    Var o = dropout(linear(tape, registry, a, p + "attn.o"));
    x = norm(tape, registry, add(x, o), p + "attn_norm");
    Var f = gelu(linear(tape, registry, x, p + "ffn.in"));
    f = dropout(linear(tape, registry, f, p + "ffn.out"));
    x = norm(tape, registry, add(x, f), p + "ffn_norm");
  }
  return x;
}

Var TaggerModel::adapt(Tape& tape, ParameterRegistry& registry, Var hidden) const {
  if (hidden.value().cols() != config_.d_model) {
    throw DimensionError("adapt: hidden width " + std::to_string(hidden.value().cols()) + " != d_model " +
                         std::to_string(config_.d_model));
  }
  Var z = linear(tape, registry, hidden, "adapter.down");
  z = config_.adapter_nonlinearity == Nonlinearity::Relu ? relu(z) : gelu(z);
  Var up = linear(tape, registry, z, "adapter.up");
  return config_.adapter_residual ? add(hidden, up) : up;
}

Var TaggerModel::classify(Tape& tape, ParameterRegistry& registry, Var adapted, std::string_view task_id) const {
  const std::string prefix = head_prefix(task_id);
  if (!registry.contains(prefix + "weight")) throw LookupError("classify: no head for task '" + std::string(task_id) + "'");
  return linear(tape, registry, adapted, prefix.substr(0, prefix.size() - 1));
}

Var TaggerModel::logits(Tape& tape, ParameterRegistry& registry, const Batch& batch, std::string_view task_id) const {
  Var h = encode(tape, registry, batch);
  if (has_adapter(registry)) h = adapt(tape, registry, h);
  return classify(tape, registry, h, task_id);
}

Var TaggerModel::loss(Tape& tape, ParameterRegistry& registry, const Batch& batch, std::string_view task_id) const {
  return cross_entropy(logits(tape, registry, batch, task_id), batch.labels);
}

std::vector<std::vector<int>> TaggerModel::predict(ParameterRegistry& registry, const Batch& batch,
                                                   std::string_view task_id) const {
  Tape tape(false);
  const Tensor& out = logits(tape, registry, batch, task_id).value();
  const std::size_t n = out.cols();
  std::vector<std::vector<int>> predictions(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t i = 0; i < batch.seq_len; ++i) {
      const std::size_t r = b * batch.seq_len + i;
      if (batch.padding[r]) continue;
      const double* row = &out[r * n];
      predictions[b].push_back(static_cast<int>(std::max_element(row, row + n) - row));
    }
  }
  return predictions;
}

void align_token_embeddings(ParameterRegistry& registry, std::span<const int> lexical_groups, double noise,
                            Rng& rng) {
  Tensor& table = registry.get("encoder.token_embedding").value();
  const std::size_t rows = table.rows(), d = table.cols();
  if (lexical_groups.size() > rows) {
    throw DimensionError("align_token_embeddings: " + std::to_string(lexical_groups.size()) +
                         " group entries for a vocabulary of " + std::to_string(rows));
  }
  const int groups = lexical_groups.empty() ? 0 : *std::max_element(lexical_groups.begin(), lexical_groups.end()) + 1;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> centers(static_cast<std::size_t>(std::max(groups, 0)) * d);
  for (auto& v : centers) v = normal(rng);
  for (std::size_t r = 0; r < lexical_groups.size(); ++r) {
    const int g = lexical_groups[r];
    if (g < 0) continue;
    for (std::size_t j = 0; j < d; ++j) table.at(r, j) = centers[static_cast<std::size_t>(g) * d + j] + noise * normal(rng);
  }
}

}  // namespace metaprime
