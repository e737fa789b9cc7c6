#pragma once

// Acquisition of review data: Gerrit REST paging, response decoding,
// normalization into ChangeRecords, and the offline JSONL interchange format.

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "revsignal/model.hpp"

namespace revsignal::ingest {

struct Credentials {
  std::string user;
  std::string password;
};

struct IngestConfig {
  std::string base_url;
  std::string query = "status:merged OR status:abandoned";
  int page_size = 500;
  long start_offset = 0;
  std::optional<Credentials> auth;
  double rate_limit = 4.0;  // requests per second, <= 0 disables throttling
  int max_retries = 5;
  std::chrono::milliseconds initial_backoff{500};
};

struct HttpResponse {
  int status = 0;  // 0 means the request never completed (network failure)
  std::string body;
  std::string error;
};

/// Minimal transport seam so paging logic can be exercised without a server.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// `path_and_query` is relative to the server root, e.g. "/changes/?q=...".
  virtual HttpResponse get(const std::string& path_and_query) = 0;
};

/// cpp-httplib backed transport. `base_url` may carry a path prefix
/// (https://host/gerrit); basic auth switches requests to the "/a/" endpoints.
std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   const std::optional<Credentials>& auth);

/// Raised when fetching stops; resume by restarting at `resume_offset`.
class FetchError : public std::runtime_error {
 public:
  FetchError(const std::string& what, long resume_offset, int http_status)
      : std::runtime_error(what), resume_offset_(resume_offset), http_status_(http_status) {}
  long resume_offset() const { return resume_offset_; }
  int http_status() const { return http_status_; }

 private:
  long resume_offset_;
  int http_status_;
};

/// Sleeps between requests and during backoff; replaceable in tests.
using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct FetchSummary {
  long changes = 0;
  std::vector<long> offsets;  // start offset of every page requested
};

/// Builds "/changes/?q=...&n=...&start=...&o=DETAILED_LABELS&..." for a page.
std::string change_query_path(const IngestConfig& config, long offset);

/// Pages through the change query, invoking `sink` once per change in server
/// order. Paging continues while the last change of a page carries
/// `_more_changes: true`, advancing the offset by the number of changes
/// received. Network failures retry with exponential backoff; HTTP 4xx fails
/// immediately with the server message.
FetchSummary fetch_changes(const IngestConfig& config, HttpTransport& transport,
                           const std::function<void(const nlohmann::json&)>& sink,
                           const Sleeper& sleep = {});

/// Drops Gerrit's ")]}'" anti-XSSI prefix line when present and parses the
/// remaining JSON. Throws InputError carrying the byte offset on bad JSON.
nlohmann::json strip_json_guard(std::string_view body);

/// A normalized change plus every account it references.
struct NormalizedChange {
  ChangeRecord change;
  std::vector<AccountRef> accounts;
};

/// Maps a Gerrit ChangeInfo document (with DETAILED_LABELS, MESSAGES,
/// DETAILED_ACCOUNTS, ALL_REVISIONS, ALL_FILES) onto a ChangeRecord.
NormalizedChange normalize(const nlohmann::json& raw);

/// One JSONL line for a change; `accounts` lists every referenced account.
nlohmann::json to_jsonl_object(const ChangeRecord& change, const std::vector<AccountRef>& accounts);

/// Accounts referenced by a change (owner, reviewers, vote and message
/// authors), looked up in the dataset table, ordered by id.
std::vector<AccountRef> referenced_accounts(const ChangeRecord& change, const Dataset& dataset);

/// Parses JSONL text. Errors name the line number: "line 2: missing status".
Dataset parse_dataset(std::istream& in);
Dataset load_dataset(const std::string& path);

/// Canonical serialization: one line per change in dataset order.
void write_dataset(std::ostream& out, const Dataset& dataset);
void save_dataset(const std::string& path, const Dataset& dataset);

/// Collects normalized changes into a dataset (sorted, accounts merged).
Dataset assemble_dataset(std::vector<NormalizedChange> changes);

}  // namespace revsignal::ingest
