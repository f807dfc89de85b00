#pragma once

#include <stdexcept>
#include <string>

namespace tabprem {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable name, used in the pipeline's per-pair error records.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define TABPREM_DEFINE_ERROR(Name)                                            \
  class Name : public Error {                                                 \
  public:                                                                     \
    explicit Name(const std::string& what) : Error(#Name, what) {}            \
  }

TABPREM_DEFINE_ERROR(MalformedInput);
TABPREM_DEFINE_ERROR(EmptyTable);
TABPREM_DEFINE_ERROR(MissingCategory);
TABPREM_DEFINE_ERROR(EmptyHypothesis);
TABPREM_DEFINE_ERROR(DimensionMismatch);
TABPREM_DEFINE_ERROR(ZeroVector);
TABPREM_DEFINE_ERROR(GatewayUnavailable);
TABPREM_DEFINE_ERROR(ProtocolError);
TABPREM_DEFINE_ERROR(DanglingTableRef);
TABPREM_DEFINE_ERROR(PairMismatch);
TABPREM_DEFINE_ERROR(ConfigError);

#undef TABPREM_DEFINE_ERROR

}  // namespace tabprem
