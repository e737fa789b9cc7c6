#include "revsignal/model.hpp"

#include <algorithm>
#include <cctype>

#include "revsignal/errors.hpp"

namespace revsignal {

std::string_view to_string(ChangeStatus status) {
  switch (status) {
    case ChangeStatus::kMerged:
      return "MERGED";
    case ChangeStatus::kAbandoned:
      return "ABANDONED";
    case ChangeStatus::kOpen:
      return "OPEN";
  }
  return "OPEN";
}

ChangeStatus parse_status(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "MERGED") return ChangeStatus::kMerged;
  if (upper == "ABANDONED") return ChangeStatus::kAbandoned;
  if (upper == "OPEN" || upper == "NEW") return ChangeStatus::kOpen;
  throw InputError("unsupported change status '" + std::string(text) + "'");
}

std::vector<AccountRef> Dataset::sorted_accounts() const {
  std::vector<AccountRef> out;
  out.reserve(accounts.size());
  for (const auto& [id, account] : accounts) out.push_back(account);
  std::sort(out.begin(), out.end(),
            [](const AccountRef& a, const AccountRef& b) { return a.account_id < b.account_id; });
  return out;
}

bool created_before(const ChangeRecord& a, const ChangeRecord& b) {
  if (a.created_at != b.created_at) return a.created_at < b.created_at;
  return a.change_id < b.change_id;
}

void validate_change(const ChangeRecord& change) {
  const auto fail = [&](const std::string& what) {
    throw InputError("change " + change.change_id + ": " + what);
  };
  if (change.change_id.empty()) throw InputError("change with empty change_id");
  if (change.owner.empty()) fail("empty owner");
  if (change.revisions.empty()) fail("no revisions");
  for (std::size_t i = 0; i < change.revisions.size(); ++i) {
    const int expected_min = i == 0 ? 1 : change.revisions[i - 1].number + 1;
    if (i == 0 && change.revisions[0].number != 1) fail("revisions must start at 1");
    if (change.revisions[i].number < expected_min) fail("revision numbers not strictly increasing");
    for (const auto& file : change.revisions[i].files) {
      if (file.lines_inserted < 0 || file.lines_deleted < 0) fail("negative line count");
    }
  }
  if (change.is_closed()) {
    if (!change.closed_at) fail("closed change without closed timestamp");
    if (*change.closed_at < change.created_at) fail("closed before created");
  }
  for (const auto& vote : change.votes) {
    if (vote.value < -2 || vote.value > 2) {
      fail("vote value " + std::to_string(vote.value) + " out of range [-2, 2]");
    }
  }
  for (const auto& message : change.messages) {
    if (message.timestamp < change.created_at) fail("message precedes change creation");
  }
}

SubsystemRule parse_subsystem_rule(std::string_view text) {
  if (text == "project") return SubsystemRule::kProject;
  if (text == "top-dir") return SubsystemRule::kTopDirectory;
  throw InputError("unknown subsystem rule '" + std::string(text) + "' (expected project|top-dir)");
}

std::string directory_of(std::string_view path) {
  const auto slash = path.rfind('/');
  if (slash == std::string_view::npos || slash == 0) return ".";
  return std::string(path.substr(0, slash));
}

std::string subsystem_of(const ChangeRecord& change, SubsystemRule rule) {
  if (rule == SubsystemRule::kProject) return change.project;
  if (change.revisions.empty() || change.revisions.front().files.empty()) return "mixed";
  std::optional<std::string> shared;
  for (const auto& file : change.revisions.front().files) {
    const auto slash = file.path.find('/');
    if (slash == std::string::npos || slash == 0) return "mixed";
    std::string top = file.path.substr(0, slash);
    if (!shared) {
      shared = std::move(top);
    } else if (*shared != top) {
      return "mixed";
    }
  }
  return *shared;
}

std::set<std::string> modules_of(const ChangeRecord& change) {
  std::set<std::string> modules;
  if (change.revisions.empty()) return modules;
  for (const auto& file : change.revisions.front().files) {
    modules.insert(directory_of(file.path));
  }
  return modules;
}

}  // namespace revsignal
