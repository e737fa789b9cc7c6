#include "revsignal/prepare.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>

#include "revsignal/csv.hpp"
#include "revsignal/errors.hpp"

namespace revsignal::prepare {

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view text) {
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(b, e - b + 1));
}

}  // namespace

bool is_build_status_message(std::string_view text) {
  const std::string t = lower(text);
  return t.find("build started") != std::string::npos || t.find("build failed") != std::string::npos ||
         t.find("build successful") != std::string::npos;
}

AccountSet detect_bots(const std::vector<ChangeRecord>& changes, const AccountSet& known,
                       const BotHeuristic& heuristic) {
  std::map<AccountId, std::pair<long, long>> counts;  // (matches, total)
  for (const auto& change : changes) {
    for (const auto& m : change.messages) {
      auto& [matches, total] = counts[m.author];
      ++total;
      if (is_build_status_message(m.text)) ++matches;
    }
  }
  AccountSet bots = known;
  for (const auto& [id, c] : counts) {
    const auto [matches, total] = c;
    if (matches >= heuristic.min_matches &&
        static_cast<double>(matches) >= heuristic.match_ratio * static_cast<double>(total)) {
      bots.insert(id);
    }
  }
  return bots;
}

AccountSet detect_bots(const Dataset& dataset, const AccountSet& known, const BotHeuristic& heuristic) {
  AccountSet bots = detect_bots(dataset.changes, known, heuristic);
  for (const auto& [id, account] : dataset.accounts) {
    if (account.is_bot) bots.insert(id);
  }
  return bots;
}

bool is_vcs_bookkeeping(const ChangeRecord& change) {
  const std::string text = lower(trim(change.description.empty() ? change.subject : change.description));
  if (text.find("merge branch") != std::string::npos) return true;
  std::size_t end = 0;
  while (end < text.size() && std::isalpha(static_cast<unsigned char>(text[end]))) ++end;
  return text.substr(0, end) == "merge";
}

std::set<AccountId> eligible_reviewers(const ChangeRecord& change, const AccountSet& bots) {
  std::set<AccountId> out;
  for (const auto& r : change.invited_reviewers) {
    if (r != change.owner && !bots.count(r)) out.insert(r);
  }
  return out;
}

std::vector<ChangeRecord> select_relevant(const std::vector<ChangeRecord>& changes, const AccountSet& bots,
                                          SelectionFunnel* funnel) {
  SelectionFunnel f;
  std::vector<ChangeRecord> kept;
  for (const auto& change : changes) {
    ++f.total;
    if (!change.is_closed()) {
      ++f.open_excluded;
    } else if (eligible_reviewers(change, bots).empty()) {
      ++f.self_review_excluded;
    } else if (is_vcs_bookkeeping(change)) {
      ++f.bookkeeping_excluded;
    } else {
      ++f.kept;
      kept.push_back(change);
    }
  }
  if (funnel) *funnel = f;
  return kept;
}

std::vector<ParticipationLabel> label_participation(const ChangeRecord& change, const AccountSet& bots) {
  std::set<AccountId> active;
  for (const auto& v : change.votes) {
    if (v.value != 0) active.insert(v.reviewer);
  }
  for (const auto& m : change.messages) active.insert(m.author);

  std::vector<ParticipationLabel> labels;
  for (const auto& reviewer : eligible_reviewers(change, bots)) {
    labels.push_back({change.change_id, reviewer, active.count(reviewer) > 0});
  }
  return labels;
}

void write_labels_csv(std::ostream& out, const std::vector<ParticipationLabel>& labels) {
  out << "change_id,reviewer,responded\n";
  for (const auto& l : labels) {
    csv::write_row(out, {l.change_id, l.reviewer, l.responded ? "true" : "false"});
  }
}

std::vector<ParticipationLabel> read_labels_csv(std::istream& in) {
  const csv::Table table = csv::read(in);
  const auto c_id = table.column("change_id");
  const auto c_rev = table.column("reviewer");
  const auto c_resp = table.column("responded");
  std::vector<ParticipationLabel> labels;
  for (const auto& row : table.rows) {
    if (row[c_resp] != "true" && row[c_resp] != "false") {
      throw InputError("labels: responded must be true or false, got '" + row[c_resp] + "'");
    }
    labels.push_back({row[c_id], row[c_rev], row[c_resp] == "true"});
  }
  return labels;
}

void write_bots(std::ostream& out, const AccountSet& bots) {
  for (const auto& id : bots) out << id << '\n';
}

AccountSet read_bots(std::istream& in) {
  AccountSet bots;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    bots.insert(line);
  }
  return bots;
}

}  // namespace revsignal::prepare
