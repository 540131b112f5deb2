// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tokimp {

/// Error categories shared by the C++ core and the C API status codes.
enum class ErrorKind {
  InvalidInput,  // non-finite or out-of-range argument
  Dimension,     // vocab-size or length mismatch
  EmptyInput,
  EmptySelection,
  Parse,
  Validation,
  Schema,
  Io,
  Config,
  Bias,          // importance weight undefined for a token carrying signal
  Usage,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace tokimp
