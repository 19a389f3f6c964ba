#pragma once

#include <stdexcept>
#include <string>

namespace metaprime {

// All library errors derive from Error so callers (the CLI in particular) can
// report a stable machine-readable kind next to the message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define METAPRIME_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& message) : Error(Kind, message) {}    \
  };

METAPRIME_DEFINE_ERROR(DimensionError, "dimension")
METAPRIME_DEFINE_ERROR(ContractError, "contract")
METAPRIME_DEFINE_ERROR(InputError, "input")
METAPRIME_DEFINE_ERROR(LookupError, "lookup")
METAPRIME_DEFINE_ERROR(DataError, "data")
METAPRIME_DEFINE_ERROR(ParseError, "parse")
METAPRIME_DEFINE_ERROR(NumericError, "numeric")
METAPRIME_DEFINE_ERROR(ConfigError, "config")
METAPRIME_DEFINE_ERROR(FileError, "file")

#undef METAPRIME_DEFINE_ERROR

}  // namespace metaprime
