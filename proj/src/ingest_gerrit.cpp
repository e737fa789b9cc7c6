#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "revsignal/errors.hpp"
#include "revsignal/ingest.hpp"

namespace revsignal::ingest {

using nlohmann::json;

namespace {

constexpr std::string_view kGuard = ")]}'";

std::string url_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (const unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else if (c == ' ') {
      out.push_back('+');
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(const std::string& base_url, const std::optional<Credentials>& auth) {
    const auto scheme_end = base_url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = base_url.find('/', host_start);
    const std::string origin = base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (auth) prefix_ += "/a";
    client_ = std::make_unique<httplib::Client>(origin);
    client_->set_follow_location(true);
    client_->set_connection_timeout(30);
    client_->set_read_timeout(120);
    if (auth) client_->set_basic_auth(auth->user, auth->password);
  }

  HttpResponse get(const std::string& path_and_query) override {
    HttpResponse response;
    auto result = client_->Get(prefix_ + path_and_query);
    if (!result) {
      response.error = httplib::to_string(result.error());
      return response;
    }
    response.status = result->status;
    response.body = result->body;
    return response;
  }

 private:
  std::string prefix_;
  std::unique_ptr<httplib::Client> client_;
};

std::string id_of(const json& account) {
  if (const auto it = account.find("_account_id"); it != account.end()) {
    return it->is_string() ? it->get<std::string>() : std::to_string(it->get<long long>());
  }
  if (const auto it = account.find("username"); it != account.end() && it->is_string()) {
    return it->get<std::string>();
  }
  if (const auto it = account.find("email"); it != account.end() && it->is_string()) {
    return it->get<std::string>();
  }
  return {};
}

std::string string_field(const json& obj, const char* field) {
  const auto it = obj.find(field);
  if (it == obj.end() || !it->is_string()) return {};
  return it->get<std::string>();
}

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   const std::optional<Credentials>& auth) {
  return std::make_unique<HttplibTransport>(base_url, auth);
}

json strip_json_guard(std::string_view body) {
  std::size_t offset = 0;
  if (body.substr(0, kGuard.size()) == kGuard) {
    offset = kGuard.size();
    const auto newline = body.find('\n', offset);
    offset = newline == std::string_view::npos ? body.size() : newline + 1;
  }
  try {
    return json::parse(body.substr(offset));
  } catch (const json::parse_error& e) {
    throw InputError("malformed JSON response at byte " + std::to_string(offset + e.byte) + ": " + e.what());
  }
}

std::string change_query_path(const IngestConfig& config, long offset) {
  std::ostringstream path;
  path << "/changes/?q=" << url_encode(config.query) << "&n=" << config.page_size << "&start=" << offset
       << "&o=DETAILED_LABELS&o=MESSAGES&o=DETAILED_ACCOUNTS&o=ALL_REVISIONS&o=ALL_FILES";
  return path.str();
}

FetchSummary fetch_changes(const IngestConfig& config, HttpTransport& transport,
                           const std::function<void(const json&)>& sink, const Sleeper& sleep) {
  if (config.page_size < 1) throw InputError("page_size must be >= 1");
  const Sleeper pause = sleep ? sleep : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  const auto min_interval = config.rate_limit > 0
                                ? std::chrono::milliseconds(static_cast<long>(1000.0 / config.rate_limit))
                                : std::chrono::milliseconds(0);

  FetchSummary summary;
  long offset = config.start_offset;
  bool first_request = true;
  while (true) {
    HttpResponse response;
    auto backoff = config.initial_backoff;
    for (int attempt = 0;; ++attempt) {
      if (!first_request && min_interval.count() > 0) pause(min_interval);
      first_request = false;
      response = transport.get(change_query_path(config, offset));
      const bool transient = response.status == 0 || response.status >= 500 || response.status == 429;
      if (!transient) break;
      if (attempt >= config.max_retries) {
        throw FetchError("request at offset " + std::to_string(offset) + " failed after " +
                             std::to_string(attempt + 1) + " attempts: " +
                             (response.status == 0 ? response.error : "HTTP " + std::to_string(response.status)),
                         offset, response.status);
      }
      pause(backoff);
      backoff *= 2;
    }
    if (response.status >= 400) {
      std::string message = response.body;
      while (!message.empty() && (message.back() == '\n' || message.back() == '\r')) message.pop_back();
      throw FetchError("HTTP " + std::to_string(response.status) + ": " + message, offset, response.status);
    }

    json page;
    try {
      page = strip_json_guard(response.body);
    } catch (const InputError& e) {
      throw FetchError(e.what(), offset, response.status);
    }
    if (!page.is_array()) throw FetchError("expected a JSON array of changes", offset, response.status);

    summary.offsets.push_back(offset);
    bool more = false;
    for (const auto& change : page) {
      sink(change);
      ++summary.changes;
    }
    if (!page.empty()) {
      const auto& last = page.back();
      if (const auto it = last.find("_more_changes"); it != last.end() && it->is_boolean()) more = it->get<bool>();
    }
    if (!more || page.empty()) break;
    offset += static_cast<long>(page.size());
  }
  return summary;
}

NormalizedChange normalize(const json& raw) {
  for (const char* field : {"project", "created", "status", "owner"}) {
    if (!raw.contains(field)) throw InputError(std::string("raw change missing ") + field);
  }
  NormalizedChange out;
  ChangeRecord& c = out.change;
  std::map<AccountId, AccountRef> accounts;
  const auto remember = [&](const json& account) -> AccountId {
    AccountId id = id_of(account);
    if (id.empty()) return id;
    AccountRef& ref = accounts[id];
    ref.account_id = id;
    if (ref.display_name.empty()) ref.display_name = string_field(account, "name");
    if (ref.email.empty()) ref.email = string_field(account, "email");
    return id;
  };

  if (raw.contains("id")) {
    c.change_id = raw["id"].is_string() ? raw["id"].get<std::string>() : raw["id"].dump();
  } else if (raw.contains("_number")) {
    c.change_id = raw["_number"].dump();
  } else {
    throw InputError("raw change missing id");
  }
  c.project = raw["project"].get<std::string>();
  c.created_at = parse_instant(raw["created"].get<std::string>());
  c.status = parse_status(raw["status"].get<std::string>());
  c.owner = remember(raw["owner"]);
  c.subject = string_field(raw, "subject");

  std::optional<Instant> updated;
  if (raw.contains("updated")) updated = parse_instant(raw["updated"].get<std::string>());
  if (c.is_closed()) {
    if (raw.contains("submitted") && c.status == ChangeStatus::kMerged) {
      c.closed_at = parse_instant(raw["submitted"].get<std::string>());
    } else if (updated) {
      c.closed_at = updated;
    } else {
      throw InputError("closed change " + c.change_id + " without submitted/updated time");
    }
  }

  if (const auto it = raw.find("messages"); it != raw.end()) {
    for (const auto& m : *it) {
      if (!m.contains("author")) continue;  // system messages
      const AccountId author = remember(m["author"]);
      if (author.empty()) continue;
      MessageRecord message;
      message.author = author;
      message.timestamp = parse_instant(m.at("date").get<std::string>());
      if (message.timestamp < c.created_at) message.timestamp = c.created_at;
      message.text = string_field(m, "message");
      c.messages.push_back(std::move(message));
    }
  }

  // Vote timestamps missing from historical dumps fall back to the voter's
  // earliest message on the change, then to the last update time.
  const auto fallback_time = [&](const AccountId& who) {
    std::optional<Instant> best;
    for (const auto& m : c.messages) {
      if (m.author == who && (!best || m.timestamp < *best)) best = m.timestamp;
    }
    if (best) return *best;
    if (c.closed_at) return *c.closed_at;
    return updated.value_or(c.created_at);
  };

  std::set<AccountId> label_accounts;
  if (const auto it = raw.find("labels"); it != raw.end() && it->is_object()) {
    for (const auto& [label, info] : it->items()) {
      const auto all = info.find("all");
      if (all == info.end()) continue;
      for (const auto& approval : *all) {
        const AccountId who = remember(approval);
        if (who.empty()) continue;
        label_accounts.insert(who);
        if (!approval.contains("value")) continue;
        VoteRecord vote;
        vote.reviewer = who;
        vote.label = label;
        vote.value = approval["value"].get<int>();
        if (vote.value < -2 || vote.value > 2) {
          throw InputError("change " + c.change_id + ": vote value out of range");
        }
        vote.timestamp = approval.contains("date") ? parse_instant(approval["date"].get<std::string>())
                                                   : fallback_time(who);
        c.votes.push_back(std::move(vote));
      }
    }
  }
  std::stable_sort(c.votes.begin(), c.votes.end(), [](const VoteRecord& a, const VoteRecord& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    if (a.reviewer != b.reviewer) return a.reviewer < b.reviewer;
    return a.label < b.label;
  });

  if (const auto it = raw.find("reviewers"); it != raw.end() && it->is_object()) {
    if (const auto reviewers = it->find("REVIEWER"); reviewers != it->end()) {
      for (const auto& r : *reviewers) {
        const AccountId id = remember(r);
        if (!id.empty()) c.invited_reviewers.insert(id);
      }
    }
  } else {
    c.invited_reviewers = label_accounts;
  }

  if (const auto it = raw.find("revisions"); it != raw.end() && it->is_object()) {
    std::string first_message;
    std::string current_message;
    const std::string current = string_field(raw, "current_revision");
    for (const auto& [sha, rev] : it->items()) {
      RevisionRecord revision;
      revision.number = rev.at("_number").get<int>();
      revision.created_at = rev.contains("created") ? parse_instant(rev["created"].get<std::string>()) : c.created_at;
      if (const auto files = rev.find("files"); files != rev.end()) {
        for (const auto& [path, info] : files->items()) {
          if (path == "/COMMIT_MSG" || path == "/MERGE_LIST" || path == "/PATCHSET_LEVEL") continue;
          FileChange file;
          file.path = path;
          file.lines_inserted = info.value("lines_inserted", 0L);
          file.lines_deleted = info.value("lines_deleted", 0L);
          revision.files.push_back(std::move(file));
        }
      }
      std::sort(revision.files.begin(), revision.files.end(),
                [](const FileChange& a, const FileChange& b) { return a.path < b.path; });
      if (const auto commit = rev.find("commit"); commit != rev.end()) {
        const std::string message = string_field(*commit, "message");
        if (revision.number == 1) first_message = message;
        if (sha == current) current_message = message;
      }
      c.revisions.push_back(std::move(revision));
    }
    std::sort(c.revisions.begin(), c.revisions.end(),
              [](const RevisionRecord& a, const RevisionRecord& b) { return a.number < b.number; });
    c.description = !current_message.empty() ? current_message : first_message;
  }
  if (c.description.empty()) c.description = c.subject;
  if (c.revisions.empty()) c.revisions.push_back(RevisionRecord{1, c.created_at, {}});
  // Historical dumps may lack early patch sets; renumber densely from 1.
  if (c.revisions.front().number != 1) {
    for (std::size_t i = 0; i < c.revisions.size(); ++i) c.revisions[i].number = static_cast<int>(i) + 1;
  }

  validate_change(c);
  for (auto& [id, account] : accounts) out.accounts.push_back(std::move(account));
  return out;
}

}  // namespace revsignal::ingest
