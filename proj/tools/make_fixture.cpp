// Writes the bundled 200-change synthetic review history.
//
// Change i (1-based) falls into exactly one category:
//   i % 25 == 0   still open
//   i % 25 == 7   only the owner and the CI bot are invited
//   i % 25 == 13  branch-merge bookkeeping
//   otherwise     relevant (merged, or abandoned when i % 10 == 3)
// giving 8 + 8 + 8 excluded and 176 relevant changes. The CI bot posts
// "Build Started" and "Build Successful" on every change.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "revsignal/ingest.hpp"
#include "revsignal/random.hpp"
#include "revsignal/time.hpp"

using namespace revsignal;
using std::chrono::hours;
using std::chrono::minutes;

namespace {

constexpr int kChanges = 200;
const char* const kBot = "ci-bot";

struct Developer {
  std::string id;
  std::string email;
  double propensity;  // log-odds of responding
  bool core;
};

std::vector<Developer> developers() {
  return {
      {"dev01", "dev01@corp.example.com", 1.8, true},    {"dev02", "dev02@corp.example.com", 1.2, true},
      {"dev03", "dev03@corp.example.com", 0.9, true},    {"dev04", "dev04@corp.example.com", 0.4, false},
      {"dev05", "dev05@corp.example.com", 0.0, false},   {"dev06", "dev06@open.example.org", -0.3, false},
      {"dev07", "dev07@open.example.org", -0.7, false},  {"dev08", "dev08@open.example.org", -1.1, false},
      {"dev09", "dev09@Open.Example.ORG", -1.5, false},  {"dev10", "dev10@university.edu", 0.6, false},
      {"dev11", "dev11@university.edu", -2.0, false},    {"dev12", "", 0.2, false},
  };
}

const std::vector<std::string>& directories() {
  static const std::vector<std::string> dirs = {"core/net", "core/db", "core/util", "ui/widgets", "ui/theme", "docs"};
  return dirs;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixture OUTPUT.jsonl\n";
    return 2;
  }
  Rng rng(20240101);
  const auto devs = developers();
  const Instant start = parse_instant("2024-01-01T09:00:00Z");

  Dataset dataset;
  for (const auto& d : devs) dataset.accounts[d.id] = {d.id, d.id, d.email, false};
  dataset.accounts[kBot] = {kBot, "CI Bot", "ci@corp.example.com", false};

  for (int i = 1; i <= kChanges; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "c%03d", i);
    ChangeRecord c;
    c.change_id = id;
    c.created_at = start + hours(6) * i + minutes(static_cast<int>(rng.below(120)));
    const auto& owner = devs[rng.below(devs.size())];
    c.owner = owner.id;

    const std::string& dir = directories()[rng.below(directories().size())];
    c.project = dir.rfind("ui/", 0) == 0 ? "ui" : "core";
    RevisionRecord rev;
    rev.number = 1;
    rev.created_at = c.created_at;
    const int files = 1 + static_cast<int>(rng.below(3));
    for (int f = 0; f < files; ++f) {
      rev.files.push_back({dir + "/file" + std::to_string(f) + ".cc", static_cast<long>(1 + rng.below(200)),
                           static_cast<long>(rng.below(60))});
    }
    c.revisions.push_back(rev);

    const bool open = i % 25 == 0;
    const bool self_only = i % 25 == 7;
    const bool bookkeeping = i % 25 == 13;
    c.subject = bookkeeping ? "Merge branch 'stable' into master" : "Update " + dir + " (" + id + ")";
    c.description = c.subject + "\n\nChange-Id: I" + id;
    const Instant closed = c.created_at + hours(12 + static_cast<int>(rng.below(60)));
    if (open) {
      c.status = ChangeStatus::kOpen;
    } else {
      c.status = i % 10 == 3 ? ChangeStatus::kAbandoned : ChangeStatus::kMerged;
      c.closed_at = closed;
    }

    c.invited_reviewers.insert(kBot);
    c.messages.push_back({kBot, c.created_at + minutes(1), "Patch Set 1: Build Started"});
    c.messages.push_back({kBot, c.created_at + minutes(40), "Patch Set 1: Build Successful"});
    if (self_only) {
      c.invited_reviewers.insert(owner.id);
      c.messages.push_back({owner.id, c.created_at + hours(2), "Self-approving trivial fix"});
      c.votes.push_back({owner.id, "Code-Review", 2, c.created_at + hours(2)});
    } else {
      std::vector<const Developer*> pool;
      for (const auto& d : devs) {
        if (d.id != owner.id) pool.push_back(&d);
      }
      const std::size_t invited = 3 + rng.below(3);
      for (std::size_t k = 0; k < invited; ++k) {
        const std::size_t pick = k + rng.below(pool.size() - k);
        std::swap(pool[k], pool[pick]);
        const Developer& r = *pool[k];
        c.invited_reviewers.insert(r.id);
        const double eta = r.propensity - 0.25 * static_cast<double>(invited - 3);
        if (!rng.bernoulli(1.0 / (1.0 + std::exp(-eta)))) continue;
        const Instant end = open ? c.created_at + hours(48) : closed;
        const auto span = std::chrono::duration_cast<minutes>(end - c.created_at).count();
        const Instant when = c.created_at + minutes(5 + static_cast<long>(rng.below(static_cast<std::uint64_t>(span - 10))));
        const double kind = rng.uniform();
        if (kind < 0.45) {
          c.votes.push_back({r.id, "Code-Review", r.core && rng.bernoulli(0.6) ? 2 : 1, when});
        } else if (kind < 0.8) {
          c.messages.push_back({r.id, when, "Patch Set 1:\n\n(1 comment)"});
        } else {
          c.messages.push_back({r.id, when, "Patch Set 1: Code-Review" + std::string(r.core ? "+2" : "+1")});
          c.votes.push_back({r.id, "Code-Review", r.core ? 2 : 1, when});
        }
      }
    }
    std::sort(c.messages.begin(), c.messages.end(),
              [](const MessageRecord& a, const MessageRecord& b) { return a.timestamp < b.timestamp; });
    std::sort(c.votes.begin(), c.votes.end(), [](const VoteRecord& a, const VoteRecord& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.reviewer < b.reviewer;
    });
    validate_change(c);
    dataset.changes.push_back(std::move(c));
  }
  std::sort(dataset.changes.begin(), dataset.changes.end(), created_before);
  ingest::save_dataset(argv[1], dataset);
  return 0;
}
