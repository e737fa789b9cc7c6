#pragma once

// The twelve per-invitation metrics, computed from history strictly before
// the studied change's creation time.

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "revsignal/frame.hpp"
#include "revsignal/model.hpp"
#include "revsignal/prepare.hpp"

namespace revsignal::metrics {

inline constexpr std::size_t kMetricCount = 12;

/// Metric identifiers in the canonical column order. The first seven form
/// the human-factors dimension (workload and social interaction); the rest
/// are reviewer experience and patch characteristics.
inline constexpr std::array<const char*, kMetricCount> kMetricNames = {
    "concurrent_reviews",     "remaining_reviews",      "familiarity",
    "median_comments",        "participation_rate",     "received_invitations",
    "core_member",            "reviewer_authoring_exp", "reviewer_reviewing_exp",
    "patch_size",             "author_authoring_exp",   "author_reviewing_exp"};
inline constexpr std::size_t kHumanFactorCount = 7;

std::vector<std::string> proposed_variables();
/// Proposed set minus the human-factors dimension.
std::vector<std::string> baseline_variables();

struct Workload {
  long concurrent = 0;
  long remaining = 0;
};

struct Social {
  long familiarity = 0;
  double median_comments = 0.0;
  double participation_rate = 0.0;
  long subsystem_invitations = 0;  // denominator of participation_rate
  long received_invitations = 0;   // global
  bool core_member = false;
};

struct Experience {
  double authoring = 0.0;
  double reviewing = 0.0;
};

struct IndexOptions {
  SubsystemRule subsystem_rule = SubsystemRule::kProject;
  /// Votes on this label (or with an empty label) at +/-2 mark core members.
  std::string review_label = "Code-Review";
};

/// Immutable event index over a sorted review history. Every query at time t
/// observes only events with timestamps strictly before t.
class TemporalIndex {
 public:
  /// Throws InputError if `changes` is not sorted by (created_at, change_id).
  TemporalIndex(const std::vector<ChangeRecord>& changes, const prepare::AccountSet& bots,
                IndexOptions options = {});
  ~TemporalIndex();
  TemporalIndex(TemporalIndex&&) noexcept;
  TemporalIndex& operator=(TemporalIndex&&) noexcept;

  const IndexOptions& options() const { return options_; }

  /// A change counts as open at t when created before t and not closed before t.
  Workload workload(const AccountId& reviewer, Instant t) const;
  Social social(const AccountId& reviewer, const AccountId& author, const std::string& subsystem,
                Instant t) const;
  Experience experience(const AccountId& person, const std::set<std::string>& modules, Instant t) const;

  /// Invitations received before t, and how many of those had a response
  /// before t (all subsystems).
  std::pair<long, long> lifetime_participation(const AccountId& reviewer, Instant t) const;

  /// Has any invitation, activity or authored change in the history.
  bool knows(const AccountId& account) const;
  /// Accounts that received at least one invitation, sorted.
  std::vector<AccountId> invited_accounts() const;

 private:
  struct Impl;
  IndexOptions options_;
  std::unique_ptr<Impl> impl_;
};

TemporalIndex build_index(const std::vector<ChangeRecord>& changes, const prepare::AccountSet& bots,
                          IndexOptions options = {});

/// Inserted plus deleted lines over the first revision.
long patch_size(const ChangeRecord& change);

struct ReviewInstance {
  std::string change_id;
  AccountId reviewer;
  Instant created_at{};
  long concurrent_reviews = 0;
  long remaining_reviews = 0;
  long familiarity = 0;
  double median_comments = 0.0;
  double participation_rate = 0.0;
  long received_invitations = 0;
  bool core_member = false;
  double reviewer_authoring_exp = 0.0;
  double reviewer_reviewing_exp = 0.0;
  long patch_size = 0;
  double author_authoring_exp = 0.0;
  double author_reviewing_exp = 0.0;
  bool outcome = false;

  /// Metric values in kMetricNames order (booleans as 0/1).
  std::array<double, kMetricCount> values() const;
  bool operator==(const ReviewInstance&) const = default;
};

/// Everything needed to score a (possibly hypothetical) invitation.
struct InvitationContext {
  AccountId reviewer;
  AccountId author;
  std::string subsystem;
  std::set<std::string> modules;
  long patch_size = 0;
  Instant at{};
};

ReviewInstance compute_instance(const TemporalIndex& index, const InvitationContext& ctx);

/// One instance per label, evaluated at the labeled change's creation time.
/// Throws InputError when a label names a change not in `changes`.
std::vector<ReviewInstance> build_instances(const std::vector<ChangeRecord>& changes,
                                            const std::vector<prepare::ParticipationLabel>& labels,
                                            const TemporalIndex& index);

void write_instances_csv(std::ostream& out, const std::vector<ReviewInstance>& instances);
std::vector<ReviewInstance> read_instances_csv(std::istream& in);

/// Predictor frame over every metric with outcome 1 for responded.
fit::Frame to_frame(const std::vector<ReviewInstance>& instances);

}  // namespace revsignal::metrics
