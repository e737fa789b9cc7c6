#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace revsignal::csv {

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

/// Splits one RFC 4180 record (no embedded newlines).
std::vector<std::string> split(std::string_view line);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal text with `digits` significant digits (%.*g).
std::string format_double(double value, int digits = 9);

/// Reads all records; the first one is returned as the header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position of `name`; throws InputError when absent.
  std::size_t column(std::string_view name) const;
};
Table read(std::istream& in);

}  // namespace revsignal::csv
