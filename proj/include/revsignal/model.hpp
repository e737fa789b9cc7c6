#pragma once

// Canonical review-data types shared by every stage of the pipeline.

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "revsignal/time.hpp"

namespace revsignal {

using AccountId = std::string;

struct AccountRef {
  AccountId account_id;
  std::string display_name;
  std::string email;
  bool is_bot = false;

  bool operator==(const AccountRef&) const = default;
};

/// Review score on a label. Loaders reject values outside [-2, +2].
struct VoteRecord {
  AccountId reviewer;
  std::string label;
  int value = 0;
  Instant timestamp{};

  bool operator==(const VoteRecord&) const = default;
};

struct MessageRecord {
  AccountId author;
  Instant timestamp{};
  std::string text;

  bool operator==(const MessageRecord&) const = default;
};

struct FileChange {
  std::string path;
  long lines_inserted = 0;
  long lines_deleted = 0;

  bool operator==(const FileChange&) const = default;
};

struct RevisionRecord {
  int number = 1;
  Instant created_at{};
  std::vector<FileChange> files;

  bool operator==(const RevisionRecord&) const = default;
};

enum class ChangeStatus { kMerged, kAbandoned, kOpen };

std::string_view to_string(ChangeStatus status);
/// Accepts MERGED, ABANDONED, OPEN and Gerrit's NEW (case-insensitive).
/// Throws InputError for anything else (e.g. DRAFT).
ChangeStatus parse_status(std::string_view text);

struct ChangeRecord {
  std::string change_id;
  std::string project;
  Instant created_at{};
  std::optional<Instant> closed_at;
  ChangeStatus status = ChangeStatus::kOpen;
  AccountId owner;
  std::string subject;
  std::string description;
  std::set<AccountId> invited_reviewers;
  std::vector<MessageRecord> messages;
  std::vector<VoteRecord> votes;
  std::vector<RevisionRecord> revisions;

  bool is_closed() const { return status != ChangeStatus::kOpen; }

  bool operator==(const ChangeRecord&) const = default;
};

/// A loaded review history: changes sorted by (created_at, change_id) plus a
/// deduplicated account table.
struct Dataset {
  std::vector<ChangeRecord> changes;
  std::unordered_map<AccountId, AccountRef> accounts;

  /// Accounts ordered by id, for deterministic output.
  std::vector<AccountRef> sorted_accounts() const;
};

/// Orders changes by creation time, breaking ties on change_id.
bool created_before(const ChangeRecord& a, const ChangeRecord& b);

/// Throws InputError naming the first violated core invariant.
void validate_change(const ChangeRecord& change);

enum class SubsystemRule { kProject, kTopDirectory };

SubsystemRule parse_subsystem_rule(std::string_view text);

/// Grouping key used for subsystem-scoped history. kProject returns the Gerrit
/// project; kTopDirectory returns the top-level directory shared by every file
/// in the first revision, or "mixed" when there is none.
std::string subsystem_of(const ChangeRecord& change, SubsystemRule rule);

/// Directory of a file path; root-level files map to ".".
std::string directory_of(std::string_view path);

/// Directories of the files changed in the first revision.
std::set<std::string> modules_of(const ChangeRecord& change);

}  // namespace revsignal
