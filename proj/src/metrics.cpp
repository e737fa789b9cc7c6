#include "revsignal/metrics.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "revsignal/csv.hpp"
#include "revsignal/errors.hpp"

namespace revsignal::metrics {

namespace {

constexpr Instant kNever = Instant::max();

using Times = std::vector<Instant>;

long count_before(const Times& sorted, Instant t) {
  return std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
}

void sort_all(Times& v) { std::sort(v.begin(), v.end()); }

struct PatchMessages {
  Instant first;
  Times times;  // sorted
};

struct SubsystemHistory {
  Times invited_created;
  Times invited_activity;
  std::vector<PatchMessages> commented;  // sorted by first message
};

struct ReviewerHistory {
  Times activity;             // first activity per change
  Times activity_or_closed;   // max(activity, closed)
  Times invited_created;
  Times invited_closed;
  Times invited_activity;
  Times invited_activity_or_closed;
  std::optional<Instant> first_core_vote;
  std::unordered_map<std::string, SubsystemHistory> subsystems;
  std::unordered_map<AccountId, Times> activity_by_author;
};

struct ModuleHistory {
  Times created;
  std::unordered_map<AccountId, Times> authored;
  // (activity time, change slot) per reviewer, sorted by activity time
  std::unordered_map<AccountId, std::vector<std::pair<Instant, std::size_t>>> reviewed;
};

}  // namespace

struct TemporalIndex::Impl {
  std::unordered_map<AccountId, ReviewerHistory> reviewers;
  std::unordered_map<std::string, ModuleHistory> modules;
  std::vector<Times> change_reviewer_activity;  // per change slot, sorted
  std::set<AccountId> known;
};

TemporalIndex::~TemporalIndex() = default;
TemporalIndex::TemporalIndex(TemporalIndex&&) noexcept = default;
TemporalIndex& TemporalIndex::operator=(TemporalIndex&&) noexcept = default;

TemporalIndex::TemporalIndex(const std::vector<ChangeRecord>& changes, const prepare::AccountSet& bots,
                             IndexOptions options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>()) {
  for (std::size_t i = 1; i < changes.size(); ++i) {
    if (created_before(changes[i], changes[i - 1])) {
      throw InputError("build_index: changes not sorted by created_at (at " + changes[i].change_id + ")");
    }
  }
  Impl& idx = *impl_;
  idx.change_reviewer_activity.resize(changes.size());

  for (std::size_t slot = 0; slot < changes.size(); ++slot) {
    const ChangeRecord& c = changes[slot];
    const Instant created = c.created_at;
    const Instant closed = c.closed_at && c.is_closed() ? *c.closed_at : kNever;
    const std::string subsystem = subsystem_of(c, options_.subsystem_rule);
    idx.known.insert(c.owner);

    // First nonzero vote or message per non-bot, non-owner account.
    std::map<AccountId, Instant> activity;
    std::map<AccountId, Times> messages;
    const auto touch = [&](const AccountId& who, Instant when) {
      if (who == c.owner || bots.count(who)) return;
      when = std::max(when, created);
      auto [it, inserted] = activity.emplace(who, when);
      if (!inserted && when < it->second) it->second = when;
    };
    for (const auto& v : c.votes) {
      if (bots.count(v.reviewer)) continue;
      if (v.value != 0) touch(v.reviewer, v.timestamp);
      const bool review_label = v.label.empty() || v.label == options_.review_label;
      if (review_label && (v.value == 2 || v.value == -2)) {
        auto& first = idx.reviewers[v.reviewer].first_core_vote;
        if (!first || v.timestamp < *first) first = v.timestamp;
      }
    }
    for (const auto& m : c.messages) {
      touch(m.author, m.timestamp);
      if (m.author != c.owner && !bots.count(m.author)) messages[m.author].push_back(m.timestamp);
    }

    Times& reviewer_times = idx.change_reviewer_activity[slot];
    for (const auto& [who, when] : activity) {
      reviewer_times.push_back(when);
      ReviewerHistory& h = idx.reviewers[who];
      h.activity.push_back(when);
      h.activity_or_closed.push_back(std::max(when, closed));
      h.activity_by_author[c.owner].push_back(when);
      idx.known.insert(who);
    }
    sort_all(reviewer_times);

    for (const auto& who : prepare::eligible_reviewers(c, bots)) {
      ReviewerHistory& h = idx.reviewers[who];
      h.invited_created.push_back(created);
      h.invited_closed.push_back(closed);
      SubsystemHistory& sub = h.subsystems[subsystem];
      sub.invited_created.push_back(created);
      if (const auto it = activity.find(who); it != activity.end()) {
        h.invited_activity.push_back(it->second);
        h.invited_activity_or_closed.push_back(std::max(it->second, closed));
        sub.invited_activity.push_back(it->second);
      }
      idx.known.insert(who);
    }
    for (auto& [who, times] : messages) {
      sort_all(times);
      idx.reviewers[who].subsystems[subsystem].commented.push_back({times.front(), std::move(times)});
    }

    for (const auto& module : modules_of(c)) {
      ModuleHistory& mh = idx.modules[module];
      mh.created.push_back(created);
      mh.authored[c.owner].push_back(created);
      for (const auto& [who, when] : activity) mh.reviewed[who].emplace_back(when, slot);
    }
  }

  for (auto& [who, h] : idx.reviewers) {
    sort_all(h.activity);
    sort_all(h.activity_or_closed);
    sort_all(h.invited_created);
    sort_all(h.invited_closed);
    sort_all(h.invited_activity);
    sort_all(h.invited_activity_or_closed);
    for (auto& [name, sub] : h.subsystems) {
      sort_all(sub.invited_created);
      sort_all(sub.invited_activity);
      std::sort(sub.commented.begin(), sub.commented.end(),
                [](const PatchMessages& a, const PatchMessages& b) { return a.first < b.first; });
    }
    for (auto& [author, times] : h.activity_by_author) sort_all(times);
  }
  for (auto& [name, mh] : idx.modules) {
    sort_all(mh.created);
    for (auto& [who, times] : mh.authored) sort_all(times);
    for (auto& [who, list] : mh.reviewed) std::sort(list.begin(), list.end());
  }
}

Workload TemporalIndex::workload(const AccountId& reviewer, Instant t) const {
  const auto it = impl_->reviewers.find(reviewer);
  if (it == impl_->reviewers.end()) return {};
  const ReviewerHistory& h = it->second;
  Workload w;
  // Active before t on a change still open at t.
  w.concurrent = count_before(h.activity, t) - count_before(h.activity_or_closed, t);
  // Invited to a change created before t and open at t, without activity before t.
  const long open_invited = count_before(h.invited_created, t) - count_before(h.invited_closed, t);
  const long open_invited_active =
      count_before(h.invited_activity, t) - count_before(h.invited_activity_or_closed, t);
  w.remaining = open_invited - open_invited_active;
  return w;
}

Social TemporalIndex::social(const AccountId& reviewer, const AccountId& author, const std::string& subsystem,
                             Instant t) const {
  const auto it = impl_->reviewers.find(reviewer);
  if (it == impl_->reviewers.end()) return {};
  const ReviewerHistory& h = it->second;
  Social s;
  if (const auto a = h.activity_by_author.find(author); a != h.activity_by_author.end()) {
    s.familiarity = count_before(a->second, t);
  }
  s.received_invitations = count_before(h.invited_created, t);
  s.core_member = h.first_core_vote && *h.first_core_vote < t;
  if (const auto sub_it = h.subsystems.find(subsystem); sub_it != h.subsystems.end()) {
    const SubsystemHistory& sub = sub_it->second;
    s.subsystem_invitations = count_before(sub.invited_created, t);
    const long responded = count_before(sub.invited_activity, t);
    s.participation_rate =
        s.subsystem_invitations == 0 ? 0.0 : static_cast<double>(responded) / s.subsystem_invitations;

    std::vector<long> per_patch;
    for (const auto& patch : sub.commented) {
      if (!(patch.first < t)) break;
      per_patch.push_back(count_before(patch.times, t));
    }
    if (!per_patch.empty()) {
      std::sort(per_patch.begin(), per_patch.end());
      const std::size_t n = per_patch.size();
      s.median_comments = n % 2 ? static_cast<double>(per_patch[n / 2])
                                : (per_patch[n / 2 - 1] + per_patch[n / 2]) / 2.0;
    }
  }
  return s;
}

Experience TemporalIndex::experience(const AccountId& person, const std::set<std::string>& modules,
                                     Instant t) const {
  if (modules.empty()) return {};
  Experience e;
  for (const auto& module : modules) {
    const auto m = impl_->modules.find(module);
    if (m == impl_->modules.end()) continue;
    const ModuleHistory& mh = m->second;
    const long total = count_before(mh.created, t);
    if (total == 0) continue;
    if (const auto a = mh.authored.find(person); a != mh.authored.end()) {
      e.authoring += static_cast<double>(count_before(a->second, t)) / total;
    }
    if (const auto r = mh.reviewed.find(person); r != mh.reviewed.end()) {
      double share = 0.0;
      for (const auto& [when, slot] : r->second) {
        if (!(when < t)) break;
        const long reviewers = count_before(impl_->change_reviewer_activity[slot], t);
        share += 1.0 / static_cast<double>(reviewers);
      }
      e.reviewing += share / total;
    }
  }
  e.authoring /= static_cast<double>(modules.size());
  e.reviewing /= static_cast<double>(modules.size());
  return e;
}

std::pair<long, long> TemporalIndex::lifetime_participation(const AccountId& reviewer, Instant t) const {
  const auto it = impl_->reviewers.find(reviewer);
  if (it == impl_->reviewers.end()) return {0, 0};
  return {count_before(it->second.invited_created, t), count_before(it->second.invited_activity, t)};
}

bool TemporalIndex::knows(const AccountId& account) const { return impl_->known.count(account) > 0; }

std::vector<AccountId> TemporalIndex::invited_accounts() const {
  std::vector<AccountId> out;
  for (const auto& [who, h] : impl_->reviewers) {
    if (!h.invited_created.empty()) out.push_back(who);
  }
  std::sort(out.begin(), out.end());
  return out;
}

TemporalIndex build_index(const std::vector<ChangeRecord>& changes, const prepare::AccountSet& bots,
                          IndexOptions options) {
  return TemporalIndex(changes, bots, std::move(options));
}

std::vector<std::string> proposed_variables() { return {kMetricNames.begin(), kMetricNames.end()}; }

std::vector<std::string> baseline_variables() {
  return {kMetricNames.begin() + kHumanFactorCount, kMetricNames.end()};
}

long patch_size(const ChangeRecord& change) {
  if (change.revisions.empty()) return 0;
  long total = 0;
  for (const auto& f : change.revisions.front().files) total += f.lines_inserted + f.lines_deleted;
  return total;
}

std::array<double, kMetricCount> ReviewInstance::values() const {
  return {static_cast<double>(concurrent_reviews),
          static_cast<double>(remaining_reviews),
          static_cast<double>(familiarity),
          median_comments,
          participation_rate,
          static_cast<double>(received_invitations),
          core_member ? 1.0 : 0.0,
          reviewer_authoring_exp,
          reviewer_reviewing_exp,
          static_cast<double>(patch_size),
          author_authoring_exp,
          author_reviewing_exp};
}

ReviewInstance compute_instance(const TemporalIndex& index, const InvitationContext& ctx) {
  ReviewInstance r;
  r.reviewer = ctx.reviewer;
  r.created_at = ctx.at;
  const Workload w = index.workload(ctx.reviewer, ctx.at);
  r.concurrent_reviews = w.concurrent;
  r.remaining_reviews = w.remaining;
  const Social s = index.social(ctx.reviewer, ctx.author, ctx.subsystem, ctx.at);
  r.familiarity = s.familiarity;
  r.median_comments = s.median_comments;
  r.participation_rate = s.participation_rate;
  r.received_invitations = s.received_invitations;
  r.core_member = s.core_member;
  const Experience rx = index.experience(ctx.reviewer, ctx.modules, ctx.at);
  r.reviewer_authoring_exp = rx.authoring;
  r.reviewer_reviewing_exp = rx.reviewing;
  r.patch_size = ctx.patch_size;
  const Experience ax = index.experience(ctx.author, ctx.modules, ctx.at);
  r.author_authoring_exp = ax.authoring;
  r.author_reviewing_exp = ax.reviewing;
  return r;
}

std::vector<ReviewInstance> build_instances(const std::vector<ChangeRecord>& changes,
                                            const std::vector<prepare::ParticipationLabel>& labels,
                                            const TemporalIndex& index) {
  std::unordered_map<std::string, const ChangeRecord*> by_id;
  for (const auto& c : changes) by_id.emplace(c.change_id, &c);
  std::vector<ReviewInstance> out;
  out.reserve(labels.size());
  for (const auto& label : labels) {
    const auto it = by_id.find(label.change_id);
    if (it == by_id.end()) throw InputError("label references unknown change '" + label.change_id + "'");
    const ChangeRecord& c = *it->second;
    InvitationContext ctx{label.reviewer, c.owner, subsystem_of(c, index.options().subsystem_rule),
                          modules_of(c), patch_size(c), c.created_at};
    ReviewInstance r = compute_instance(index, ctx);
    r.change_id = c.change_id;
    r.outcome = label.responded;
    out.push_back(std::move(r));
  }
  return out;
}

void write_instances_csv(std::ostream& out, const std::vector<ReviewInstance>& instances) {
  std::vector<std::string> header{"change_id", "reviewer", "created_at"};
  header.insert(header.end(), kMetricNames.begin(), kMetricNames.end());
  header.push_back("outcome");
  csv::write_row(out, header);
  for (const auto& r : instances) {
    std::vector<std::string> row{r.change_id, r.reviewer, format_instant(r.created_at)};
    const auto values = r.values();
    for (std::size_t i = 0; i < kMetricCount; ++i) {
      if (i == 6) {
        row.push_back(r.core_member ? "true" : "false");
      } else {
        row.push_back(csv::format_double(values[i]));
      }
    }
    row.push_back(r.outcome ? "true" : "false");
    csv::write_row(out, row);
  }
}

namespace {

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "TRUE" || text == "1") return true;
  if (text == "false" || text == "FALSE" || text == "0") return false;
  throw InputError("instances: expected boolean, got '" + text + "'");
}

double parse_number(const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InputError("instances: expected number, got '" + text + "'");
  }
}

}  // namespace

std::vector<ReviewInstance> read_instances_csv(std::istream& in) {
  const csv::Table table = csv::read(in);
  std::array<std::size_t, kMetricCount> cols{};
  for (std::size_t i = 0; i < kMetricCount; ++i) cols[i] = table.column(kMetricNames[i]);
  const auto c_id = table.column("change_id");
  const auto c_rev = table.column("reviewer");
  const auto c_time = table.column("created_at");
  const auto c_out = table.column("outcome");
  std::vector<ReviewInstance> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    ReviewInstance r;
    r.change_id = row[c_id];
    r.reviewer = row[c_rev];
    r.created_at = parse_instant(row[c_time]);
    r.concurrent_reviews = static_cast<long>(parse_number(row[cols[0]]));
    r.remaining_reviews = static_cast<long>(parse_number(row[cols[1]]));
    r.familiarity = static_cast<long>(parse_number(row[cols[2]]));
    r.median_comments = parse_number(row[cols[3]]);
    r.participation_rate = parse_number(row[cols[4]]);
    r.received_invitations = static_cast<long>(parse_number(row[cols[5]]));
    r.core_member = parse_bool(row[cols[6]]);
    r.reviewer_authoring_exp = parse_number(row[cols[7]]);
    r.reviewer_reviewing_exp = parse_number(row[cols[8]]);
    r.patch_size = static_cast<long>(parse_number(row[cols[9]]));
    r.author_authoring_exp = parse_number(row[cols[10]]);
    r.author_reviewing_exp = parse_number(row[cols[11]]);
    r.outcome = parse_bool(row[c_out]);
    out.push_back(std::move(r));
  }
  return out;
}

fit::Frame to_frame(const std::vector<ReviewInstance>& instances) {
  fit::Frame frame;
  frame.names = proposed_variables();
  frame.columns.assign(kMetricCount, std::vector<double>(instances.size()));
  frame.outcome.resize(instances.size());
  for (std::size_t row = 0; row < instances.size(); ++row) {
    const auto values = instances[row].values();
    for (std::size_t j = 0; j < kMetricCount; ++j) frame.columns[j][row] = values[j];
    frame.outcome[row] = instances[row].outcome ? 1.0 : 0.0;
  }
  return frame;
}

}  // namespace revsignal::metrics
