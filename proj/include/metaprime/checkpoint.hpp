#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "metaprime/parameters.hpp"

namespace metaprime {

// Binary checkpoint layout (all integers and floats little-endian):
//
//   magic     8 bytes  "MPRIMECK"
//   version   u32      kCheckpointVersion
//   config    u64      hash of the model configuration that produced it
//   count     u64      number of parameters
//   per parameter, in registry order:
//     id_len  u32, id bytes (UTF-8)
//     partition u8 (0 pretrained, 1 lightweight, 2 head)
//     rank    u32, dims u64 x rank
//     values  f64 x product(dims)
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
};

std::string encode_checkpoint(const ParameterRegistry& registry, std::uint64_t config_hash);

// Throws ParseError on malformed input and ConfigError when expected_hash is
// given and differs from the stored one.
ParameterRegistry decode_checkpoint(std::string_view bytes, std::optional<std::uint64_t> expected_hash = {},
                                    CheckpointHeader* header = nullptr);

void save_checkpoint(const std::filesystem::path& path, const ParameterRegistry& registry,
                     std::uint64_t config_hash);
ParameterRegistry load_checkpoint(const std::filesystem::path& path,
                                  std::optional<std::uint64_t> expected_hash = {},
                                  CheckpointHeader* header = nullptr);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace metaprime
