#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "revsignal/cli.hpp"
#include "revsignal/csv.hpp"
#include "revsignal/errors.hpp"
#include "revsignal/fit/logistic.hpp"
#include "revsignal/ingest.hpp"

using namespace revsignal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("revsignal-test-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& leaf = "") const { return (leaf.empty() ? path : path / leaf).string(); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "revsignal");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Dataset with_accounts(std::vector<ChangeRecord> changes) {
  Dataset d;
  auto add = [&](const AccountId& id) { d.accounts[id] = {id, id, id + "@example.org", false}; };
  for (const auto& c : changes) {
    add(c.owner);
    for (const auto& r : c.invited_reviewers) add(r);
    for (const auto& m : c.messages) add(m.author);
    for (const auto& v : c.votes) add(v.reviewer);
  }
  d.changes = std::move(changes);
  return d;
}

// t1 open; t5 only invites its owner. t2: b responds, c silent. t3: a
// silent. t4: everyone responds. That leaves 2 + 1 + 3 = 6 labels.
Dataset toy() {
  auto t1 = fixture::change("t1", "a", 0, std::nullopt, {"b"});
  auto t2 = fixture::change("t2", "a", 1, 5, {"b", "c"});
  fixture::vote(t2, "b", 1, 2);
  auto t3 = fixture::change("t3", "b", 2, 6, {"a", "b"});
  auto t4 = fixture::change("t4", "c", 3, 7, {"a", "b", "d"});
  t4.status = ChangeStatus::kAbandoned;
  fixture::message(t4, "a", 4);
  fixture::message(t4, "b", 4.5);
  fixture::vote(t4, "d", -1, 5);
  auto t5 = fixture::change("t5", "a", 4, 8, {"a"});
  return with_accounts({t1, t2, t3, t4, t5});
}

}  // namespace

TEST_CASE("RunConfig parsing") {
  cli::RunConfig config;
  CHECK(config.get("seed") == "1");
  std::istringstream in("# run settings\nseed = 42\n\niterations=10  # inline\nbots = \n");
  config.load(in, "run.cfg");
  CHECK(config.get_long("seed") == 42);
  CHECK(config.get_long("iterations") == 10);
  CHECK(config.get("bots").empty());

  std::istringstream bad("seed = 1\ncolour = blue\n");
  try {
    config.load(bad, "run.cfg");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("run.cfg line 2") != std::string::npos);
  }
  std::istringstream no_eq("seed 4\n");
  CHECK_THROWS_AS(config.load(no_eq), InputError);
  CHECK_THROWS_AS(config.set("nope", "1"), InputError);

  config.set("threshold", "abc");
  CHECK_THROWS_AS(config.get_double("threshold"), InputError);
}

TEST_CASE("config hash ignores jobs and output location") {
  cli::RunConfig a, b;
  b.set("jobs", "16");
  b.set("out", "/elsewhere");
  CHECK(a.hash() == b.hash());
  b.set("seed", "2");
  CHECK(a.hash() != b.hash());
}

TEST_CASE("prepare on a toy dataset") {
  TempDir dir("prepare");
  ingest::save_dataset(dir.str("toy.jsonl"), toy());
  const auto r = run({"prepare", "--dataset", dir.str("toy.jsonl"), "--out", dir.str()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("relevant") != std::string::npos);

  const auto labels = slurp(dir.path / "labels.csv");
  CHECK(labels ==
        "change_id,reviewer,responded\n"
        "t2,b,true\nt2,c,false\n"
        "t3,a,false\n"
        "t4,a,true\nt4,b,true\nt4,d,true\n");
  const auto funnel = nlohmann::json::parse(slurp(dir.path / "funnel.json"));
  CHECK(funnel["total"] == 5);
  CHECK(funnel["kept"] == 3);

  // rerun is byte-identical
  const auto first = slurp(dir.path / "relevant.jsonl");
  REQUIRE(run({"prepare", "--dataset", dir.str("toy.jsonl"), "--out", dir.str()}).code == 0);
  CHECK(slurp(dir.path / "relevant.jsonl") == first);
  CHECK(slurp(dir.path / "labels.csv") == labels);

  // describe matches the hand counts
  REQUIRE(run({"describe", "--dataset", dir.str("toy.jsonl"), "--out", dir.str()}).code == 0);
  const auto rq1 = nlohmann::json::parse(slurp(dir.path / "rq1_summary.json"));
  CHECK(rq1["total_changes"] == 3);
  CHECK(rq1["changes_with_unresponded"] == 2);
  CHECK(rq1["zero_responder_changes"] == 1);
  CHECK(rq1["median_unresponded_proportion"].get<double>() == 0.5);
  CHECK(rq1["proportion_with_unresponded"].get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(slurp(dir.path / "violin.csv") ==
        "change_id,invited,unresponded,proportion\nt2,2,1,0.5\nt3,1,1,1\nt4,3,0,0\n");
}

TEST_CASE("prepare with nothing relevant exits 2") {
  TempDir dir("empty");
  { std::ofstream(dir.path / "empty.jsonl"); }
  const auto r = run({"prepare", "--dataset", dir.str("empty.jsonl"), "--out", dir.str()});
  CHECK(r.code == 2);
  CHECK(r.err.find("no relevant changes") != std::string::npos);
}

TEST_CASE("missing inputs exit 2 naming the file") {
  TempDir dir("missing");
  const auto fit = run({"fit", "--out", dir.str()});
  CHECK(fit.code == 2);
  CHECK(fit.err.find("instances.csv") != std::string::npos);

  const auto prep = run({"prepare", "--dataset", dir.str("nowhere.jsonl"), "--out", dir.str()});
  CHECK(prep.code == 2);
  CHECK(prep.err.find("nowhere.jsonl") != std::string::npos);

  CHECK(run({"bogus"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("pipeline on the bundled fixture: baseline-only runs, missing artifacts, reproducibility") {
  TempDir dir("pipeline");
  const std::string fixture = REVSIGNAL_FIXTURE_DIR "/synthetic_200.jsonl";
  const std::vector<std::string> common = {"--out", dir.str(), "--set", "iterations=5", "--seed", "3"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), common.begin(), common.end());
    return run(args);
  };
  REQUIRE(with({"prepare", "--dataset", fixture}).code == 0);
  REQUIRE(with({"metrics", "--dataset", fixture}).code == 0);

  // evaluate with no model artifacts at all
  const auto none = with({"evaluate"});
  CHECK(none.code == 2);
  CHECK(none.err.find("model_proposed.json") != std::string::npos);

  REQUIRE(with({"fit", "--set", "models=baseline"}).code == 0);
  CHECK(fs::exists(dir.path / "model_baseline.json"));
  CHECK_FALSE(fs::exists(dir.path / "model_proposed.json"));

  const auto partial = with({"evaluate"});
  REQUIRE(partial.code == 0);
  CHECK(partial.err.find("model_proposed.json not found") != std::string::npos);
  std::ifstream comparison_in(dir.path / "comparison.csv");
  const auto comparison = csv::read(comparison_in);
  REQUIRE(comparison.rows.size() == 5);
  for (const auto& row : comparison.rows) {
    CHECK(row[1] == "NA");
    CHECK(row[2] == "NA");
    CHECK(row[3] != "NA");
    CHECK(row[5] == "NA");
  }

  REQUIRE(with({"fit"}).code == 0);
  REQUIRE(with({"evaluate", "--jobs", "1"}).code == 0);
  const auto first = slurp(dir.path / "evaluation.json");
  REQUIRE(with({"evaluate", "--jobs", "4"}).code == 0);
  CHECK(slurp(dir.path / "evaluation.json") == first);
  const auto doc = nlohmann::json::parse(first);
  CHECK(doc["proposed"]["iterations"] == 5);
  CHECK(doc["proposed"]["seed"] == 3);
  CHECK(doc.contains("baseline"));

  // the core-member subset has too few unresponded invitations for 11 variables
  const auto too_small = with({"fit", "--where", "core_member=true"});
  CHECK(too_small.code == 2);
  CHECK(too_small.err.find("budget 9") != std::string::npos);
  const auto subset = with({"fit", "--where", "core_member=true", "--set", "models=baseline"});
  REQUIRE(subset.code == 0);
  const auto artifact = nlohmann::json::parse(slurp(dir.path / "model_baseline.json"));
  CHECK(artifact["where"] == std::vector<std::string>{"core_member=true"});
}

TEST_CASE("recommend ranks candidates with a hand-built model") {
  TempDir dir("recommend");
  // three changes: alice owns c1 and c3, bob owns c2
  auto c1 = fixture::change("c1", "alice", 0, 10, {"bob", "carol"});
  fixture::message(c1, "bob", 1);
  fixture::vote(c1, "bob", 2, 2);
  auto c2 = fixture::change("c2", "bob", 5, 20, {"alice", "carol"});
  fixture::message(c2, "alice", 6);
  fixture::vote(c2, "carol", 1, 7);
  auto c3 = fixture::change("c3", "alice", 8, 30, {"bob", "carol"});
  fixture::message(c3, "bob", 9);
  ingest::save_dataset(dir.str("three.jsonl"), with_accounts({c1, c2, c3}));

  // eta = -1 + 3 * participation_rate + 1 * familiarity
  fit::FittedModel model;
  model.spec.terms = {{"participation_rate", 1, 1, false, {}}, {"familiarity", 1, 1, false, {}}};
  model.coefficients = Eigen::Vector3d(-1.0, 3.0, 1.0);
  model.covariance = Eigen::Matrix3d::Identity();
  model.n = 6;
  model.converged = true;
  fit::save_model(dir.str("model_proposed.json"), model);

  const auto r = run({"recommend", "--dataset", dir.str("three.jsonl"), "--out", dir.str(), "--author", "alice",
                      "--project", "app", "--files", "src/new.c", "--as-of", "2024-01-02T16:00:00Z", "--candidate",
                      "dave", "--candidate", "carol", "--candidate", "bob", "--min-prob", "0.6"});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  const auto table = csv::read(lines);
  REQUIRE(table.rows.size() == 3);
  // bob: responded to both invitations (rate 1) and was active on two of
  // alice's changes; carol: 1 of 3, never active on alice's changes; dave:
  // unknown, all metrics zero.
  const std::vector<std::pair<std::string, double>> expected = {
      {"bob", fit::logistic(-1 + 3 * 1.0 + 2)}, {"carol", fit::logistic(-1 + 3 * (1.0 / 3.0))}, {"dave", fit::logistic(-1)}};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(table.rows[i][0] == std::to_string(i + 1));
    CHECK(table.rows[i][1] == expected[i].first);
    CHECK(std::stod(table.rows[i][2]) == doctest::Approx(expected[i].second).epsilon(1e-6));
  }
  CHECK(table.rows[0][3] == "recommended");
  CHECK(table.rows[1][3] == "likely unresponsive");
  CHECK(table.rows[2][3] == "likely unresponsive");
  CHECK(table.rows[2][4] == "true");
  CHECK(table.rows[0][4] == "false");
  CHECK(r.err.find("dave") != std::string::npos);

  CHECK(run({"recommend", "--dataset", dir.str("three.jsonl"), "--out", dir.str(), "--author", "alice", "--as-of",
             "2024-01-02T16:00:00Z"})
            .code == 2);
}
