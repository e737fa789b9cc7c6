#pragma once

// Relevant-change selection, bot detection and participation labeling.

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "revsignal/model.hpp"

namespace revsignal::prepare {

using AccountSet = std::set<AccountId>;

struct ParticipationLabel {
  std::string change_id;
  AccountId reviewer;
  bool responded = false;

  bool operator==(const ParticipationLabel&) const = default;
};

struct BotHeuristic {
  int min_matches = 20;
  double match_ratio = 0.9;
};

/// True when the text looks like a CI status post ("Build Started",
/// "Build Failed", "Build Successful"; case-insensitive).
bool is_build_status_message(std::string_view text);

/// `known` plus every account whose messages are dominated by CI status posts
/// (at least `min_matches` such messages making up at least `match_ratio` of
/// everything it wrote), plus accounts already flagged is_bot in `dataset`.
AccountSet detect_bots(const std::vector<ChangeRecord>& changes, const AccountSet& known,
                       const BotHeuristic& heuristic = {});

/// Dataset-aware overload that also honors AccountRef::is_bot.
AccountSet detect_bots(const Dataset& dataset, const AccountSet& known, const BotHeuristic& heuristic = {});

/// Description reads as a branch merge: contains "merge branch" or its first
/// word is "merge" (case-insensitive). Falls back to the subject when the
/// description is empty.
bool is_vcs_bookkeeping(const ChangeRecord& change);

/// Invited reviewers other than the owner and bots.
std::set<AccountId> eligible_reviewers(const ChangeRecord& change, const AccountSet& bots);

struct SelectionFunnel {
  long total = 0;
  long open_excluded = 0;
  long self_review_excluded = 0;
  long bookkeeping_excluded = 0;
  long kept = 0;
};

/// Keeps merged/abandoned changes that invited someone besides the owner and
/// bots and are not branch-merge bookkeeping. Funnel counts attribute each
/// excluded change to the first failing criterion in that order.
std::vector<ChangeRecord> select_relevant(const std::vector<ChangeRecord>& changes, const AccountSet& bots,
                                          SelectionFunnel* funnel = nullptr);

/// One label per eligible reviewer: responded iff the reviewer cast a nonzero
/// vote or wrote at least one message on the change.
std::vector<ParticipationLabel> label_participation(const ChangeRecord& change, const AccountSet& bots);

void write_labels_csv(std::ostream& out, const std::vector<ParticipationLabel>& labels);
std::vector<ParticipationLabel> read_labels_csv(std::istream& in);

void write_bots(std::ostream& out, const AccountSet& bots);
/// One id per line; blank lines and lines starting with '#' are ignored.
AccountSet read_bots(std::istream& in);

}  // namespace revsignal::prepare
