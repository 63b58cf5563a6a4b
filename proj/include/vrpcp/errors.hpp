#pragma once

#include <stdexcept>
#include <string>

namespace vrpcp {

/// Base of every error raised by the library. `kind()` is the short tag the
/// CLI prints in its machine-readable error record.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define VRPCP_DEFINE_ERROR(Name, tag)                                       \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& message) : Error(tag, message) {}  \
    };

VRPCP_DEFINE_ERROR(DimensionError, "dimension")
VRPCP_DEFINE_ERROR(ConfigError, "config")
VRPCP_DEFINE_ERROR(NumericDomainError, "numeric_domain")
VRPCP_DEFINE_ERROR(ContractError, "contract")
VRPCP_DEFINE_ERROR(DataError, "data")
VRPCP_DEFINE_ERROR(RangeError, "range")
VRPCP_DEFINE_ERROR(IoError, "io")
VRPCP_DEFINE_ERROR(CompatibilityError, "compatibility")

#undef VRPCP_DEFINE_ERROR

}  // namespace vrpcp
