#pragma once

#include <chrono>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "revsignal/model.hpp"
#include "revsignal/time.hpp"

namespace fixture {

using revsignal::Instant;

// Hours after 2024-01-01T00:00:00Z.
inline Instant hour(double h) {
  static const Instant base = revsignal::parse_instant("2024-01-01T00:00:00Z");
  return base + std::chrono::milliseconds(static_cast<long long>(h * 3600'000.0));
}

inline revsignal::ChangeRecord change(const std::string& id, const std::string& owner, double created,
                                      std::optional<double> closed, std::set<std::string> reviewers,
                                      const std::string& project = "app",
                                      std::vector<revsignal::FileChange> files = {{"src/main.cc", 10, 2}}) {
  revsignal::ChangeRecord c;
  c.change_id = id;
  c.project = project;
  c.owner = owner;
  c.created_at = hour(created);
  c.subject = "Change " + id;
  c.description = c.subject;
  c.invited_reviewers = std::move(reviewers);
  if (closed) {
    c.closed_at = hour(*closed);
    c.status = revsignal::ChangeStatus::kMerged;
  } else {
    c.status = revsignal::ChangeStatus::kOpen;
  }
  c.revisions.push_back({1, c.created_at, std::move(files)});
  return c;
}

inline void vote(revsignal::ChangeRecord& c, const std::string& who, int value, double h,
                 const std::string& label = "Code-Review") {
  c.votes.push_back({who, label, value, hour(h)});
}

inline void message(revsignal::ChangeRecord& c, const std::string& who, double h, const std::string& text = "comment") {
  c.messages.push_back({who, hour(h), text});
}

}  // namespace fixture
