#pragma once

#include <stdexcept>
#include <string>

namespace revsignal {

/// Malformed or missing user input (bad file, schema violation, unknown
/// account). The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a result (singular matrix,
/// degenerate outcome, unsupportable model).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace revsignal
