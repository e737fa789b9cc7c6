#include <doctest.h>

#include <map>
#include <sstream>

#include "helpers.hpp"
#include "revsignal/csv.hpp"
#include "revsignal/errors.hpp"
#include "revsignal/ingest.hpp"

using namespace revsignal;
using nlohmann::json;

TEST_CASE("parse_instant accepts Gerrit and ISO forms") {
  const Instant a = parse_instant("2013-04-05T10:11:12Z");
  CHECK(parse_instant("2013-04-05 10:11:12.000000000") == a);
  CHECK(parse_instant("2013-04-05T12:11:12+02:00") == a);
  CHECK(parse_instant("2013-04-05T10:11:12") == a);
  CHECK(format_instant(a) == "2013-04-05T10:11:12Z");
  CHECK(format_instant(parse_instant("2013-04-05 10:11:12.250000000")) == "2013-04-05T10:11:12.250Z");
  CHECK_THROWS_AS(parse_instant("yesterday"), InputError);
  CHECK_THROWS_AS(parse_instant("2013-13-05T10:11:12Z"), InputError);
}

TEST_CASE("status mapping") {
  CHECK(parse_status("MERGED") == ChangeStatus::kMerged);
  CHECK(parse_status("abandoned") == ChangeStatus::kAbandoned);
  CHECK(parse_status("NEW") == ChangeStatus::kOpen);
  CHECK_THROWS_AS(parse_status("draft"), InputError);
}

TEST_CASE("subsystem_of and modules_of") {
  auto c = fixture::change("c1", "a", 0, 1, {"b"}, "platform/frameworks/base",
                           {{"net/tcp.c", 1, 0}, {"net/udp.c", 1, 0}});
  CHECK(subsystem_of(c, SubsystemRule::kProject) == "platform/frameworks/base");
  CHECK(subsystem_of(c, SubsystemRule::kTopDirectory) == "net");
  c.revisions[0].files = {{"net/a.c", 1, 0}, {"doc/b.md", 1, 0}};
  CHECK(subsystem_of(c, SubsystemRule::kTopDirectory) == "mixed");

  c.revisions[0].files = {{"src/a/x.c", 1, 0}, {"src/a/y.c", 1, 0}};
  CHECK(modules_of(c) == std::set<std::string>{"src/a"});
  c.revisions[0].files = {{"src/a/x.c", 1, 0}, {"src/b/y.c", 1, 0}};
  CHECK(modules_of(c) == std::set<std::string>{"src/a", "src/b"});
  c.revisions[0].files = {{"README", 1, 0}};
  CHECK(modules_of(c) == std::set<std::string>{"."});
  CHECK(parse_subsystem_rule("top-dir") == SubsystemRule::kTopDirectory);
  CHECK_THROWS_AS(parse_subsystem_rule("nope"), InputError);
}

TEST_CASE("validate_change enforces core invariants") {
  auto c = fixture::change("c1", "a", 5, 6, {"b"});
  CHECK_NOTHROW(validate_change(c));

  auto early_close = c;
  early_close.closed_at = fixture::hour(4);
  CHECK_THROWS_AS(validate_change(early_close), InputError);

  auto no_close = c;
  no_close.closed_at.reset();
  CHECK_THROWS_AS(validate_change(no_close), InputError);

  auto bad_vote = c;
  fixture::vote(bad_vote, "b", 3, 5.5);
  CHECK_THROWS_AS(validate_change(bad_vote), InputError);

  auto bad_revs = c;
  bad_revs.revisions.push_back({1, c.created_at, {}});
  CHECK_THROWS_AS(validate_change(bad_revs), InputError);

  auto no_revs = c;
  no_revs.revisions.clear();
  CHECK_THROWS_AS(validate_change(no_revs), InputError);
}

TEST_CASE("csv helpers") {
  CHECK(csv::escape("plain") == "plain");
  CHECK(csv::escape("a,b") == "\"a,b\"");
  CHECK(csv::escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv::split("a,\"b,c\",\"d\"\"e\",") == std::vector<std::string>{"a", "b,c", "d\"e", ""});
  CHECK(csv::format_double(0.1) == "0.1");
  CHECK(csv::format_double(12.0) == "12");
  CHECK(csv::format_double(1.0 / 3.0) == "0.333333333");
}

// ---------------------------------------------------------------- ingest

TEST_CASE("strip_json_guard") {
  const json a = ingest::strip_json_guard(")]}'\n[{\"_number\":1}]");
  REQUIRE(a.is_array());
  CHECK(a.size() == 1);
  CHECK(a[0]["_number"] == 1);
  CHECK(ingest::strip_json_guard("[{\"_number\":1}]") == a);
  try {
    ingest::strip_json_guard(")]}'\n{bad");
    FAIL("expected a parse error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
}

namespace {

json gerrit_change() {
  return json::parse(R"({
    "id": "app~master~I1", "_number": 1, "project": "app", "status": "MERGED",
    "created": "2024-01-01 10:00:00.000000000", "updated": "2024-01-03 10:00:00.000000000",
    "submitted": "2024-01-02 10:00:00.000000000",
    "subject": "Fix parser",
    "owner": {"_account_id": 100, "name": "Owner", "email": "owner@example.com"},
    "reviewers": {"REVIEWER": [{"_account_id": 1, "name": "A"}, {"_account_id": 2, "name": "B"}]},
    "labels": {"Code-Review": {"all": [
      {"_account_id": 1, "value": 2, "date": "2024-01-01 12:00:00.000000000"},
      {"_account_id": 2, "value": 0}
    ]}},
    "messages": [
      {"author": {"_account_id": 1}, "date": "2024-01-01 12:00:00.000000000", "message": "Patch Set 1: Code-Review+2"},
      {"date": "2024-01-01 13:00:00.000000000", "message": "Change has been successfully merged"}
    ],
    "current_revision": "bbb",
    "revisions": {
      "bbb": {"_number": 2, "created": "2024-01-01 11:00:00.000000000",
              "commit": {"message": "Fix parser\n\nLonger text"},
              "files": {"src/p.cc": {"lines_inserted": 7, "lines_deleted": 1}}},
      "aaa": {"_number": 1, "created": "2024-01-01 10:00:00.000000000",
              "commit": {"message": "Fix parser\n\nFirst draft"},
              "files": {"/COMMIT_MSG": {"lines_inserted": 9}, "src/p.cc": {"lines_inserted": 5, "lines_deleted": 2}}}
    },
    "_more_changes": true
  })");
}

class FakeTransport : public ingest::HttpTransport {
 public:
  std::vector<ingest::HttpResponse> script;
  std::vector<std::string> requests;

  ingest::HttpResponse get(const std::string& path) override {
    requests.push_back(path);
    if (requests.size() > script.size()) return {500, "exhausted", ""};
    return script[requests.size() - 1];
  }
};

std::string page(int first, int count, bool more) {
  json arr = json::array();
  for (int i = 0; i < count; ++i) {
    json c = {{"_number", first + i}};
    if (i + 1 == count && more) c["_more_changes"] = true;
    arr.push_back(c);
  }
  return ")]}'\n" + arr.dump();
}

}  // namespace

TEST_CASE("normalize maps a Gerrit ChangeInfo") {
  const auto n = ingest::normalize(gerrit_change());
  const ChangeRecord& c = n.change;
  CHECK(c.change_id == "app~master~I1");
  CHECK(c.status == ChangeStatus::kMerged);
  CHECK(c.owner == "100");
  CHECK(c.invited_reviewers == std::set<std::string>{"1", "2"});
  REQUIRE(c.votes.size() == 2);
  CHECK(c.votes[0].reviewer == "1");
  CHECK(c.votes[0].value == 2);
  // a 0 vote is kept as data; without a date it falls back to the close time
  CHECK(c.votes[1].value == 0);
  CHECK(c.votes[1].timestamp == parse_instant("2024-01-02T10:00:00Z"));
  CHECK(c.closed_at == parse_instant("2024-01-02T10:00:00Z"));
  REQUIRE(c.messages.size() == 1);  // author-less system message skipped
  REQUIRE(c.revisions.size() == 2);
  CHECK(c.revisions[0].number == 1);
  REQUIRE(c.revisions[0].files.size() == 1);  // /COMMIT_MSG skipped
  CHECK(c.revisions[0].files[0].lines_inserted == 5);
  CHECK(c.description == "Fix parser\n\nLonger text");
  CHECK(n.accounts.size() == 3);
}

TEST_CASE("normalize status handling") {
  auto raw = gerrit_change();
  raw["status"] = "NEW";
  CHECK(ingest::normalize(raw).change.status == ChangeStatus::kOpen);
  CHECK_FALSE(ingest::normalize(raw).change.closed_at.has_value());
  raw["status"] = "DRAFT";
  CHECK_THROWS_AS(ingest::normalize(raw), InputError);

  auto abandoned = gerrit_change();
  abandoned["status"] = "ABANDONED";
  CHECK(ingest::normalize(abandoned).change.closed_at == parse_instant("2024-01-03T10:00:00Z"));
}

TEST_CASE("change_query_path requests every detail option") {
  ingest::IngestConfig cfg;
  cfg.query = "status:merged";
  cfg.page_size = 500;
  const auto path = ingest::change_query_path(cfg, 500);
  CHECK(path.rfind("/changes/?q=", 0) == 0);
  CHECK(path.find("n=500") != std::string::npos);
  CHECK(path.find("start=500") != std::string::npos);
  for (const char* o : {"DETAILED_LABELS", "MESSAGES", "DETAILED_ACCOUNTS", "ALL_REVISIONS", "ALL_FILES"}) {
    CHECK(path.find(std::string("o=") + o) != std::string::npos);
  }
}

TEST_CASE("fetch_changes pages until the more-changes marker clears") {
  FakeTransport t;
  t.script = {{200, page(0, 500, true), ""}, {200, page(500, 120, false), ""}};
  ingest::IngestConfig cfg;
  cfg.page_size = 500;
  std::vector<std::chrono::milliseconds> sleeps;
  long seen = 0;
  const auto summary = ingest::fetch_changes(cfg, t, [&](const json&) { ++seen; },
                                             [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  CHECK(seen == 620);
  CHECK(summary.changes == 620);
  CHECK(summary.offsets == std::vector<long>{0, 500});
  CHECK(t.requests.size() == 2);
  CHECK(sleeps.size() == 1);  // rate limit pause before the second request
}

TEST_CASE("fetch_changes single page issues one request") {
  FakeTransport t;
  t.script = {{200, page(0, 3, false), ""}};
  ingest::IngestConfig cfg;
  cfg.rate_limit = 0;
  ingest::fetch_changes(cfg, t, [](const json&) {}, [](auto) {});
  CHECK(t.requests.size() == 1);
}

TEST_CASE("fetch_changes retries network failures then reports a resumable offset") {
  FakeTransport t;
  t.script = {{200, page(0, 2, true), ""}, {0, "", "timeout"}, {503, "busy", ""}, {200, page(2, 1, false), ""}};
  ingest::IngestConfig cfg;
  cfg.page_size = 2;
  cfg.rate_limit = 0;
  cfg.max_retries = 3;
  std::vector<std::chrono::milliseconds> sleeps;
  const auto s = ingest::fetch_changes(cfg, t, [](const json&) {}, [&](auto d) { sleeps.push_back(d); });
  CHECK(s.changes == 3);
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[1] == 2 * sleeps[0]);  // exponential backoff

  FakeTransport down;
  down.script = {{200, page(0, 2, true), ""}};  // then 500s forever
  cfg.max_retries = 2;
  try {
    ingest::fetch_changes(cfg, down, [](const json&) {}, [](auto) {});
    FAIL("expected FetchError");
  } catch (const ingest::FetchError& e) {
    CHECK(e.resume_offset() == 2);
  }
}

TEST_CASE("fetch_changes fails fast on client errors with the server message") {
  FakeTransport t;
  t.script = {{400, "bad query syntax", ""}};
  ingest::IngestConfig cfg;
  try {
    ingest::fetch_changes(cfg, t, [](const json&) {}, [](auto) {});
    FAIL("expected FetchError");
  } catch (const ingest::FetchError& e) {
    CHECK(std::string(e.what()).find("bad query syntax") != std::string::npos);
    CHECK(e.http_status() == 400);
    CHECK(t.requests.size() == 1);
  }
}

namespace {

std::string jsonl_line(const std::string& id, const std::string& created, const char* status = "MERGED") {
  json j = {{"change_id", id},
            {"project", "app"},
            {"created", created},
            {"closed", "2030-01-01T00:00:00Z"},
            {"status", status},
            {"owner", "a"},
            {"subject", "s"},
            {"description", "d"},
            {"reviewers", {"b"}},
            {"accounts", {{{"id", "a"}, {"name", "A"}, {"email", ""}}, {{"id", "b"}, {"name", "B"}, {"email", ""}}}},
            {"messages", json::array()},
            {"votes", json::array()},
            {"revisions", {{{"number", 1}, {"time", created}, {"files", json::array()}}}}};
  return j.dump();
}

}  // namespace

TEST_CASE("parse_dataset sorts, validates and reports line numbers") {
  std::stringstream ok(jsonl_line("c2", "2024-01-02T00:00:00Z") + "\n" + jsonl_line("c1", "2024-01-01T00:00:00Z") +
                       "\n" + jsonl_line("c3", "2024-01-03T00:00:00Z") + "\n");
  const Dataset d = ingest::parse_dataset(ok);
  REQUIRE(d.changes.size() == 3);
  CHECK(d.changes[0].change_id == "c1");
  CHECK(d.changes[2].change_id == "c3");
  CHECK(d.accounts.size() == 2);

  auto missing = json::parse(jsonl_line("c2", "2024-01-02T00:00:00Z"));
  missing.erase("status");
  std::stringstream bad(jsonl_line("c1", "2024-01-01T00:00:00Z") + "\n" + missing.dump() + "\n");
  try {
    ingest::parse_dataset(bad);
    FAIL("expected error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()) == "line 2: missing status");
  }

  std::stringstream dup(jsonl_line("c1", "2024-01-01T00:00:00Z") + "\n" + jsonl_line("c1", "2024-01-02T00:00:00Z"));
  CHECK_THROWS_WITH_AS(ingest::parse_dataset(dup), doctest::Contains("duplicate change_id"), InputError);

  std::stringstream garbage("{not json\n");
  CHECK_THROWS_WITH_AS(ingest::parse_dataset(garbage), doctest::Contains("line 1"), InputError);
}

TEST_CASE("JSONL round trip is canonical and idempotent") {
  auto c = fixture::change("c1", "a", 0, 5, {"b", "bot"}, "app", {{"src/x.cc", 3, 1}, {"README", 1, 0}});
  fixture::vote(c, "b", 2, 1);
  fixture::vote(c, "b", 0, 1.5, "Verified");
  fixture::message(c, "b", 1, "looks good, \"quoted\"\nnewline");
  fixture::message(c, "bot", 0.1, "Build Started");
  Dataset d;
  d.changes.push_back(c);
  d.accounts["a"] = {"a", "Alice", "alice@example.com", false};
  d.accounts["b"] = {"b", "Bob", "", false};
  d.accounts["bot"] = {"bot", "CI", "ci@example.com", true};

  std::stringstream first;
  ingest::write_dataset(first, d);
  std::stringstream in(first.str());
  const Dataset back = ingest::parse_dataset(in);
  REQUIRE(back.changes.size() == 1);
  CHECK(back.changes[0] == c);
  CHECK(back.accounts.at("bot").is_bot);
  CHECK(back.accounts.at("a").email == "alice@example.com");
  std::stringstream second;
  ingest::write_dataset(second, back);
  CHECK(second.str() == first.str());
}

TEST_CASE("parse_dataset rejects references to unknown accounts") {
  auto j = json::parse(jsonl_line("c1", "2024-01-01T00:00:00Z"));
  j["messages"] = {{{"author", "ghost"}, {"time", "2024-01-01T01:00:00Z"}, {"text", "hi"}}};
  std::stringstream in(j.dump() + "\n");
  CHECK_THROWS_WITH_AS(ingest::parse_dataset(in), doctest::Contains("unknown account"), InputError);
}
