#pragma once

#include <stdexcept>
#include <string>

namespace qw {

enum class ErrorCode {
    invalid_argument,
    not_found,
    out_of_range,
    unreachable,
    parse_error,
    overflow,
    backend_failure,
    conflict,
};

// Base exception for every failure raised by the library. `code` lets the
// service and CLI layers map failures onto HTTP statuses and exit codes.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

const char* to_string(ErrorCode code) noexcept;

}  // namespace qw
