#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tiered {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    NonFinite,
    UnknownCluster,
    Format,
    Io,
    Infeasible,
    NoConvergence,
    StaleInput,
    Internal,
};

std::string_view to_string(ErrorKind kind);

/// Exception type thrown by every module. `kind()` is stable and is what the
/// CLI reports in its machine-readable error line.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg)
            : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const noexcept {
        return kind_;
    }

  private:
    ErrorKind kind_;
};

[[noreturn]] void throw_error(ErrorKind kind, const std::string& msg);

#define TIERED_CHECK(cond, kind, msg)                 \
    do {                                              \
        if (!(cond)) {                                \
            ::tiered::throw_error((kind), (msg));     \
        }                                             \
    } while (false)

} // namespace tiered
