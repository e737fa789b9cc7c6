#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace revsignal::fit {

/// Column-major numeric table of predictors plus a 0/1 outcome.
struct Frame {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  std::vector<double> outcome;

  std::size_t rows() const { return outcome.size(); }
  /// Throws InputError when `name` is not a column.
  const std::vector<double>& column(std::string_view name) const;
  bool has(std::string_view name) const;

  /// Rows selected by index (duplicates allowed, as in bootstrap samples).
  Frame take(const std::vector<std::size_t>& rows) const;
  Frame select(const std::vector<std::string>& variables) const;
};

/// Column contains only 0 and 1.
bool is_binary(const std::vector<double>& values);

}  // namespace revsignal::fit
