#include "revsignal/frame.hpp"

#include "revsignal/errors.hpp"

namespace revsignal::fit {

const std::vector<double>& Frame::column(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return columns[i];
  }
  throw InputError("variable '" + std::string(name) + "' not present");
}

bool Frame::has(std::string_view name) const {
  for (const auto& n : names) {
    if (n == name) return true;
  }
  return false;
}

Frame Frame::take(const std::vector<std::size_t>& rows) const {
  Frame out;
  out.names = names;
  out.columns.resize(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out.columns[j].reserve(rows.size());
    for (const auto r : rows) out.columns[j].push_back(columns[j][r]);
  }
  out.outcome.reserve(rows.size());
  for (const auto r : rows) out.outcome.push_back(outcome[r]);
  return out;
}

Frame Frame::select(const std::vector<std::string>& variables) const {
  Frame out;
  out.outcome = outcome;
  for (const auto& v : variables) {
    out.names.push_back(v);
    out.columns.push_back(column(v));
  }
  return out;
}

bool is_binary(const std::vector<double>& values) {
  for (const double v : values) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

}  // namespace revsignal::fit
