#include "metaprime/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "metaprime/errors.hpp"

namespace metaprime {

namespace {

constexpr std::string_view kMagic = "MPRIMECK";

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(bits);
  }

  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError("checkpoint: truncated at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string encode_checkpoint(const ParameterRegistry& registry, std::uint64_t config_hash) {
  std::string out(kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, config_hash);
  put_le<std::uint64_t>(out, registry.size());
  for (const auto& param : registry) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(param.id().size()));
    out += param.id();
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(param.partition()));
    const auto& shape = param.value().shape();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_le<std::uint64_t>(out, d);
    for (double v : param.value().data()) put_f64(out, v);
  }
  return out;
}

ParameterRegistry decode_checkpoint(std::string_view bytes, std::optional<std::uint64_t> expected_hash,
                                    CheckpointHeader* header) {
  Reader in(bytes);
  if (in.take(kMagic.size()) != kMagic) throw ParseError("checkpoint: bad magic");
  CheckpointHeader h;
  h.version = in.get<std::uint32_t>();
  if (h.version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(h.version));
  }
  h.config_hash = in.get<std::uint64_t>();
  if (expected_hash && *expected_hash != h.config_hash) {
    std::ostringstream msg;
    msg << "checkpoint: model config hash mismatch (file " << std::hex << h.config_hash << ", expected "
        << *expected_hash << ")";
    throw ConfigError(msg.str());
  }
  const auto count = in.get<std::uint64_t>();
  ParameterRegistry registry;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id_len = in.get<std::uint32_t>();
    std::string id(in.take(id_len));
    const auto part = in.get<std::uint8_t>();
    if (part > 2) throw ParseError("checkpoint: bad partition tag for '" + id + "'");
    const auto rank = in.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
    const std::size_t n = shape_size(shape);
    if (n > in.remaining() / sizeof(double)) throw ParseError("checkpoint: truncated values for '" + id + "'");
    std::vector<double> values(n);
    for (auto& v : values) v = in.get_f64();
    registry.add(std::move(id), Tensor(std::move(shape), std::move(values)), static_cast<Partition>(part));
  }
  if (!in.done()) throw ParseError("checkpoint: trailing bytes");
  if (header) *header = h;
  return registry;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterRegistry& registry,
                     std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(registry, config_hash);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("failed writing checkpoint " + path.string());
}

ParameterRegistry load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_hash,
                                  CheckpointHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected_hash, header);
}

}  // namespace metaprime
