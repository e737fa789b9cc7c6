#pragma once

// Command-line driver: one subcommand per pipeline stage, sharing a flat
// key=value configuration.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace revsignal::cli {

/// Effective run configuration. Values are kept as text and validated on use.
class RunConfig {
 public:
  RunConfig();

  /// Reads "key = value" lines; '#' starts a comment. Unknown keys are
  /// rejected with the line number.
  void load(std::istream& in, const std::string& origin = "config");
  void load_file(const std::string& path);
  /// Throws InputError for unknown keys.
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  long get_long(const std::string& key) const;
  double get_double(const std::string& key) const;

  /// FNV-1a over every setting that can change results (paths to inputs
  /// included; `jobs` and `out` excluded).
  std::string hash() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Runs the command line (argv[0] is the program name). Returns the process
/// exit code: 0 success, 1 internal error, 2 missing or invalid input.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace revsignal::cli
