// SPDX-License-Identifier: Apache-2.0
#include "tokimp/error.hpp"

namespace tokimp {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::EmptyInput: return "empty_input";
    case ErrorKind::EmptySelection: return "empty_selection";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Io: return "io";
    case ErrorKind::Config: return "config";
    case ErrorKind::Bias: return "bias";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace tokimp
