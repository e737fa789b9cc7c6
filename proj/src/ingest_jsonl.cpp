#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "revsignal/errors.hpp"
#include "revsignal/ingest.hpp"

namespace revsignal::ingest {

using nlohmann::json;

namespace {

class LineError : public InputError {
 public:
  LineError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what) {}
};

const json& require(const json& obj, const char* field, std::size_t line) {
  const auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) throw LineError(line, std::string("missing ") + field);
  return *it;
}

std::string as_string(const json& value, const char* field, std::size_t line) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  throw LineError(line, std::string("field ") + field + " must be a string");
}

std::string optional_string(const json& obj, const char* field, std::size_t line) {
  const auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return {};
  return as_string(*it, field, line);
}

Instant as_instant(const json& value, const char* field, std::size_t line) {
  if (!value.is_string()) throw LineError(line, std::string("field ") + field + " must be a timestamp");
  try {
    return parse_instant(value.get<std::string>());
  } catch (const InputError& e) {
    throw LineError(line, std::string("field ") + field + ": " + e.what());
  }
}

long as_count(const json& value, const char* field, std::size_t line) {
  if (!value.is_number_integer()) throw LineError(line, std::string("field ") + field + " must be an integer");
  return value.get<long>();
}

const json& array_or_empty(const json& obj, const char* field, std::size_t line) {
  static const json kEmpty = json::array();
  const auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return kEmpty;
  if (!it->is_array()) throw LineError(line, std::string("field ") + field + " must be an array");
  return *it;
}

struct ParsedLine {
  ChangeRecord change;
  std::vector<AccountRef> accounts;
};

ParsedLine parse_line(const json& obj, std::size_t line) {
  if (!obj.is_object()) throw LineError(line, "expected a JSON object");
  ParsedLine parsed;
  ChangeRecord& c = parsed.change;
  c.change_id = as_string(require(obj, "change_id", line), "change_id", line);
  c.project = as_string(require(obj, "project", line), "project", line);
  c.created_at = as_instant(require(obj, "created", line), "created", line);
  const std::string status = as_string(require(obj, "status", line), "status", line);
  try {
    c.status = parse_status(status);
  } catch (const InputError& e) {
    throw LineError(line, e.what());
  }
  c.owner = as_string(require(obj, "owner", line), "owner", line);
  if (const auto it = obj.find("closed"); it != obj.end() && !it->is_null()) {
    c.closed_at = as_instant(*it, "closed", line);
  }
  c.subject = optional_string(obj, "subject", line);
  c.description = optional_string(obj, "description", line);

  for (const auto& id : array_or_empty(obj, "reviewers", line)) {
    c.invited_reviewers.insert(as_string(id, "reviewers", line));
  }
  for (const auto& a : array_or_empty(obj, "accounts", line)) {
    AccountRef account;
    account.account_id = as_string(require(a, "id", line), "id", line);
    if (account.account_id.empty()) throw LineError(line, "empty account id");
    account.display_name = optional_string(a, "name", line);
    account.email = optional_string(a, "email", line);
    if (const auto it = a.find("is_bot"); it != a.end() && it->is_boolean()) {
      account.is_bot = it->get<bool>();
    }
    parsed.accounts.push_back(std::move(account));
  }
  for (const auto& m : array_or_empty(obj, "messages", line)) {
    MessageRecord message;
    message.author = as_string(require(m, "author", line), "author", line);
    message.timestamp = as_instant(require(m, "time", line), "time", line);
    message.text = optional_string(m, "text", line);
    c.messages.push_back(std::move(message));
  }
  for (const auto& v : array_or_empty(obj, "votes", line)) {
    VoteRecord vote;
    vote.reviewer = as_string(require(v, "reviewer", line), "reviewer", line);
    vote.label = optional_string(v, "label", line);
    vote.value = static_cast<int>(as_count(require(v, "value", line), "value", line));
    vote.timestamp = as_instant(require(v, "time", line), "time", line);
    c.votes.push_back(std::move(vote));
  }
  const json& revisions = require(obj, "revisions", line);
  if (!revisions.is_array()) throw LineError(line, "field revisions must be an array");
  for (const auto& r : revisions) {
    RevisionRecord revision;
    revision.number = static_cast<int>(as_count(require(r, "number", line), "number", line));
    revision.created_at = as_instant(require(r, "time", line), "time", line);
    for (const auto& f : array_or_empty(r, "files", line)) {
      FileChange file;
      file.path = as_string(require(f, "path", line), "path", line);
      if (const auto it = f.find("ins"); it != f.end()) file.lines_inserted = as_count(*it, "ins", line);
      if (const auto it = f.find("del"); it != f.end()) file.lines_deleted = as_count(*it, "del", line);
      revision.files.push_back(std::move(file));
    }
    c.revisions.push_back(std::move(revision));
  }
  try {
    validate_change(c);
  } catch (const InputError& e) {
    throw LineError(line, e.what());
  }
  return parsed;
}

void merge_account(std::unordered_map<AccountId, AccountRef>& table, const AccountRef& account) {
  auto [it, inserted] = table.emplace(account.account_id, account);
  if (inserted) return;
  AccountRef& existing = it->second;
  if (existing.display_name.empty()) existing.display_name = account.display_name;
  if (existing.email.empty()) existing.email = account.email;
  existing.is_bot = existing.is_bot || account.is_bot;
}

}  // namespace

json to_jsonl_object(const ChangeRecord& change, const std::vector<AccountRef>& accounts) {
  json obj = json::object();
  obj["change_id"] = change.change_id;
  obj["project"] = change.project;
  obj["created"] = format_instant(change.created_at);
  obj["closed"] = change.closed_at ? json(format_instant(*change.closed_at)) : json(nullptr);
  obj["status"] = std::string(to_string(change.status));
  obj["owner"] = change.owner;
  obj["subject"] = change.subject;
  obj["description"] = change.description;
  obj["reviewers"] = json(std::vector<std::string>(change.invited_reviewers.begin(),
                                                   change.invited_reviewers.end()));
  json accounts_json = json::array();
  for (const auto& a : accounts) {
    json entry = {{"id", a.account_id}, {"name", a.display_name}, {"email", a.email}};
    if (a.is_bot) entry["is_bot"] = true;
    accounts_json.push_back(std::move(entry));
  }
  obj["accounts"] = std::move(accounts_json);
  json messages = json::array();
  for (const auto& m : change.messages) {
    messages.push_back({{"author", m.author}, {"time", format_instant(m.timestamp)}, {"text", m.text}});
  }
  obj["messages"] = std::move(messages);
  json votes = json::array();
  for (const auto& v : change.votes) {
    votes.push_back({{"reviewer", v.reviewer},
                     {"label", v.label},
                     {"value", v.value},
                     {"time", format_instant(v.timestamp)}});
  }
  obj["votes"] = std::move(votes);
  json revisions = json::array();
  for (const auto& r : change.revisions) {
    json files = json::array();
    for (const auto& f : r.files) {
      files.push_back({{"path", f.path}, {"ins", f.lines_inserted}, {"del", f.lines_deleted}});
    }
    revisions.push_back({{"number", r.number}, {"time", format_instant(r.created_at)}, {"files", std::move(files)}});
  }
  obj["revisions"] = std::move(revisions);
  return obj;
}

std::vector<AccountRef> referenced_accounts(const ChangeRecord& change, const Dataset& dataset) {
  std::set<AccountId> ids{change.owner};
  ids.insert(change.invited_reviewers.begin(), change.invited_reviewers.end());
  for (const auto& v : change.votes) ids.insert(v.reviewer);
  for (const auto& m : change.messages) ids.insert(m.author);
  std::vector<AccountRef> out;
  for (const auto& id : ids) {
    if (const auto it = dataset.accounts.find(id); it != dataset.accounts.end()) {
      out.push_back(it->second);
    } else {
      out.push_back(AccountRef{id, {}, {}, false});
    }
  }
  return out;
}

Dataset parse_dataset(std::istream& in) {
  Dataset dataset;
  std::vector<std::pair<std::size_t, ChangeRecord>> parsed;
  std::unordered_set<std::string> seen_ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw LineError(line, std::string("invalid JSON at byte ") + std::to_string(e.byte));
    }
    ParsedLine p = parse_line(obj, line);
    if (!seen_ids.insert(p.change.change_id).second) {
      throw LineError(line, "duplicate change_id '" + p.change.change_id + "'");
    }
    for (const auto& a : p.accounts) merge_account(dataset.accounts, a);
    parsed.emplace_back(line, std::move(p.change));
  }

  for (const auto& [line_no, change] : parsed) {
    const auto check = [&](const AccountId& id) {
      if (!dataset.accounts.count(id)) throw LineError(line_no, "unknown account '" + id + "'");
    };
    check(change.owner);
    for (const auto& r : change.invited_reviewers) check(r);
    for (const auto& v : change.votes) check(v.reviewer);
    for (const auto& m : change.messages) check(m.author);
  }

  dataset.changes.reserve(parsed.size());
  for (auto& [line_no, change] : parsed) dataset.changes.push_back(std::move(change));
  std::sort(dataset.changes.begin(), dataset.changes.end(), created_before);
  return dataset;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path + "'");
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  for (const auto& change : dataset.changes) {
    out << to_jsonl_object(change, referenced_accounts(change, dataset)).dump() << '\n';
  }
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  write_dataset(out, dataset);
}

Dataset assemble_dataset(std::vector<NormalizedChange> changes) {
  Dataset dataset;
  std::unordered_set<std::string> seen;
  for (auto& n : changes) {
    if (!seen.insert(n.change.change_id).second) continue;
    for (const auto& a : n.accounts) merge_account(dataset.accounts, a);
    dataset.changes.push_back(std::move(n.change));
  }
  std::sort(dataset.changes.begin(), dataset.changes.end(), created_before);
  return dataset;
}

}  // namespace revsignal::ingest
