#include "revsignal/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "revsignal/csv.hpp"
#include "revsignal/describe.hpp"
#include "revsignal/errors.hpp"
#include "revsignal/evaluate.hpp"
#include "revsignal/explain.hpp"
#include "revsignal/fit/logistic.hpp"
#include "revsignal/fit/screening.hpp"
#include "revsignal/fit/stats.hpp"
#include "revsignal/ingest.hpp"
#include "revsignal/metrics.hpp"
#include "revsignal/parallel.hpp"
#include "revsignal/prepare.hpp"
#include "revsignal/time.hpp"

namespace revsignal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Settings that do not affect results and stay out of the config hash.
const std::set<std::string> kUnhashed = {"jobs", "out", "password_env"};

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table = {
      {"dataset", ""},
      {"bots", ""},
      {"subsystem_rule", "project"},
      {"review_label", "Code-Review"},
      {"bot_min_matches", "20"},
      {"bot_match_ratio", "0.9"},
      {"models", "both"},
      {"correlation_threshold", "0.7"},
      {"redundancy_threshold", "0.9"},
      {"dof_ratio", "0.3"},
      {"dof_high", "3"},
      {"iterations", "1000"},
      {"seed", "1"},
      {"threshold", "0.5"},
      {"alpha", "0.05"},
      {"negligible_d", "0.2"},
      {"grid_size", "100"},
      {"bin_width", "1"},
      {"as_of", ""},
      {"server", ""},
      {"query", "status:merged OR status:abandoned"},
      {"page_size", "500"},
      {"start", "0"},
      {"rate_limit", "4"},
      {"max_retries", "5"},
      {"user", ""},
      {"password_env", "REVSIGNAL_HTTP_PASSWORD"},
      {"jobs", "0"},
      {"out", "."},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InputError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::load(std::istream& in, const std::string& origin) {
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw InputError(origin + " line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    if (!values_.count(key)) {
      throw InputError(origin + " line " + std::to_string(number) + ": unknown key '" + key + "'");
    }
    values_[key] = trim(body.substr(eq + 1));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  load(in, path);
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InputError("unknown config key '" + key + "'");
  return it->second;
}

long RunConfig::get_long(const std::string& key) const {
  const auto& text = get(key);
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("config '" + key + "' must be an integer, got '" + text + "'");
}

double RunConfig::get_double(const std::string& key) const {
  const auto& text = get(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("config '" + key + "' must be a number, got '" + text + "'");
}

std::string RunConfig::hash() const {
  std::string canonical;
  for (const auto& [k, v] : values_) {
    if (kUnhashed.count(k)) continue;
    canonical += k + "=" + v + "\n";
  }
  return fnv1a_hex(canonical);
}

namespace {

struct Context {
  RunConfig config;
  fs::path out_dir;
  unsigned jobs = 1;
  std::ostream& out;
  std::ostream& err;

  fs::path output(const std::string& name) const { return out_dir / name; }
};

fs::path require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InputError("missing input file: " + path.string());
  return path;
}

std::ifstream open_input(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

template <typename Writer>
void write_stream(const fs::path& path, Writer&& writer) {
  std::ostringstream buf;
  writer(buf);
  write_text(path, buf.str());
}

fs::path dataset_path(const Context& ctx) {
  const auto& configured = ctx.config.get("dataset");
  return configured.empty() ? ctx.output("changes.jsonl") : fs::path(configured);
}

prepare::AccountSet known_bots(const Context& ctx) {
  const auto& path = ctx.config.get("bots");
  if (path.empty()) return {};
  auto in = open_input(path);
  return prepare::read_bots(in);
}

prepare::AccountSet prepared_bots(const Context& ctx) {
  auto in = open_input(ctx.output("bots.txt"));
  return prepare::read_bots(in);
}

metrics::IndexOptions index_options(const Context& ctx) {
  metrics::IndexOptions options;
  options.subsystem_rule = parse_subsystem_rule(ctx.config.get("subsystem_rule"));
  options.review_label = ctx.config.get("review_label");
  return options;
}

std::uint64_t seed_of(const Context& ctx) {
  const auto& text = ctx.config.get("seed");
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("seed must be a non-negative integer, got '" + text + "'");
}

int positive_int(const Context& ctx, const std::string& key) {
  const long v = ctx.config.get_long(key);
  if (v < 1) throw InputError("config '" + key + "' must be >= 1");
  return static_cast<int>(v);
}

// ---------------------------------------------------------------- ingest

struct IngestFlags {
  std::vector<std::string> raw;
};

int cmd_ingest(Context& ctx, const IngestFlags& flags) {
  Dataset dataset;
  const auto& server = ctx.config.get("server");
  if (!flags.raw.empty()) {
    // Saved /changes/ responses, one JSON array per file.
    std::vector<ingest::NormalizedChange> changes;
    for (const auto& path : flags.raw) {
      auto in = open_input(path);
      const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      const json doc = ingest::strip_json_guard(body);
      if (!doc.is_array()) throw InputError(path + ": expected a JSON array of changes");
      for (const auto& raw : doc) changes.push_back(ingest::normalize(raw));
    }
    dataset = ingest::assemble_dataset(std::move(changes));
  } else if (!server.empty()) {
    ingest::IngestConfig config;
    config.base_url = server;
    config.query = ctx.config.get("query");
    config.page_size = positive_int(ctx, "page_size");
    config.start_offset = ctx.config.get_long("start");
    config.rate_limit = ctx.config.get_double("rate_limit");
    config.max_retries = static_cast<int>(ctx.config.get_long("max_retries"));
    if (const auto& user = ctx.config.get("user"); !user.empty()) {
      const char* password = std::getenv(ctx.config.get("password_env").c_str());
      if (password == nullptr) {
        throw InputError("user is set but environment variable " + ctx.config.get("password_env") + " is empty");
      }
      config.auth = ingest::Credentials{user, password};
    }
    auto transport = ingest::make_http_transport(config.base_url, config.auth);
    std::vector<ingest::NormalizedChange> changes;
    try {
      const auto summary = ingest::fetch_changes(config, *transport,
                                                 [&](const json& raw) { changes.push_back(ingest::normalize(raw)); });
      ctx.err << "fetched " << summary.changes << " changes in " << summary.offsets.size() << " pages\n";
    } catch (const ingest::FetchError& e) {
      ctx.err << "error: " << e.what() << "\nresume with: --set start=" << e.resume_offset() << '\n';
      return 1;
    }
    dataset = ingest::assemble_dataset(std::move(changes));
  } else {
    const auto& configured = ctx.config.get("dataset");
    if (configured.empty()) throw InputError("ingest needs --server, --raw or a dataset to canonicalize");
    require_file(configured);
    dataset = ingest::load_dataset(configured);
  }
  const auto target = ctx.output("changes.jsonl");
  write_stream(target, [&](std::ostream& os) { ingest::write_dataset(os, dataset); });
  ctx.out << "changes: " << dataset.changes.size() << "\naccounts: " << dataset.accounts.size() << "\nwrote "
          << target.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- prepare

int cmd_prepare(Context& ctx) {
  const auto source = require_file(dataset_path(ctx));
  const Dataset dataset = ingest::load_dataset(source.string());
  prepare::BotHeuristic heuristic;
  heuristic.min_matches = static_cast<int>(ctx.config.get_long("bot_min_matches"));
  heuristic.match_ratio = ctx.config.get_double("bot_match_ratio");
  const auto bots = prepare::detect_bots(dataset, known_bots(ctx), heuristic);

  prepare::SelectionFunnel funnel;
  const auto relevant = prepare::select_relevant(dataset.changes, bots, &funnel);
  std::vector<prepare::ParticipationLabel> labels;
  for (const auto& change : relevant) {
    auto more = prepare::label_participation(change, bots);
    labels.insert(labels.end(), more.begin(), more.end());
  }
  const long responded = std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.responded; });

  ctx.out << "changes: " << funnel.total << "\nexcluded open: " << funnel.open_excluded
          << "\nexcluded self-review: " << funnel.self_review_excluded
          << "\nexcluded bookkeeping: " << funnel.bookkeeping_excluded << "\nrelevant: " << funnel.kept
          << "\nbots: " << bots.size() << "\ninvitations: " << labels.size() << "\nresponded: " << responded
          << "\nunresponded: " << static_cast<long>(labels.size()) - responded << '\n';
  if (relevant.empty()) {
    ctx.err << "error: no relevant changes\n";
    return 2;
  }

  Dataset kept;
  kept.changes = relevant;
  kept.accounts = dataset.accounts;
  write_stream(ctx.output("relevant.jsonl"), [&](std::ostream& os) { ingest::write_dataset(os, kept); });
  write_stream(ctx.output("bots.txt"), [&](std::ostream& os) { prepare::write_bots(os, bots); });
  write_stream(ctx.output("labels.csv"), [&](std::ostream& os) { prepare::write_labels_csv(os, labels); });
  write_json(ctx.output("funnel.json"), {{"total", funnel.total},
                                         {"open_excluded", funnel.open_excluded},
                                         {"self_review_excluded", funnel.self_review_excluded},
                                         {"bookkeeping_excluded", funnel.bookkeeping_excluded},
                                         {"kept", funnel.kept},
                                         {"bots", bots.size()},
                                         {"invitations", labels.size()},
                                         {"responded", responded},
                                         {"config_hash", ctx.config.hash()}});
  return 0;
}

// ---------------------------------------------------------------- metrics

int cmd_metrics(Context& ctx) {
  const auto source = require_file(dataset_path(ctx));
  const Dataset dataset = ingest::load_dataset(source.string());
  const auto bots = prepared_bots(ctx);
  auto labels_in = open_input(ctx.output("labels.csv"));
  const auto labels = prepare::read_labels_csv(labels_in);
  const auto index = metrics::build_index(dataset.changes, bots, index_options(ctx));
  const auto instances = metrics::build_instances(dataset.changes, labels, index);
  write_stream(ctx.output("instances.csv"), [&](std::ostream& os) { metrics::write_instances_csv(os, instances); });
  const long positives = std::count_if(instances.begin(), instances.end(), [](const auto& i) { return i.outcome; });
  ctx.out << "instances: " << instances.size() << "\nresponded: " << positives
          << "\nunresponded: " << static_cast<long>(instances.size()) - positives << '\n';
  return 0;
}

// ---------------------------------------------------------------- fit

struct Filter {
  std::string variable;
  double value = 0.0;
  std::string text;
};

std::vector<Filter> parse_filters(const std::vector<std::string>& clauses) {
  std::vector<Filter> out;
  for (const auto& clause : clauses) {
    const auto eq = clause.find('=');
    if (eq == std::string::npos) throw InputError("--where expects name=value, got '" + clause + "'");
    Filter f;
    f.variable = trim(clause.substr(0, eq));
    const std::string value = trim(clause.substr(eq + 1));
    f.text = f.variable + "=" + value;
    if (value == "true") {
      f.value = 1.0;
    } else if (value == "false") {
      f.value = 0.0;
    } else {
      try {
        std::size_t used = 0;
        f.value = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw InputError("--where value must be true, false or a number: '" + clause + "'");
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

fit::Frame apply_filters(const fit::Frame& frame, const std::vector<Filter>& filters) {
  if (filters.empty()) return frame;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    bool keep = true;
    for (const auto& f : filters) keep = keep && frame.column(f.variable)[r] == f.value;
    if (keep) rows.push_back(r);
  }
  return frame.take(rows);
}

fit::Frame load_instances(const Context& ctx) {
  auto in = open_input(ctx.output("instances.csv"));
  return metrics::to_frame(metrics::read_instances_csv(in));
}

std::vector<std::string> model_sets(const Context& ctx) {
  const auto& models = ctx.config.get("models");
  if (models == "both") return {"proposed", "baseline"};
  if (models == "proposed" || models == "baseline") return {models};
  throw InputError("models must be proposed, baseline or both; got '" + models + "'");
}

std::string model_file(const std::string& set) { return "model_" + set + ".json"; }

int cmd_fit(Context& ctx, const std::vector<std::string>& where) {
  const auto filters = parse_filters(where);
  const fit::Frame frame = apply_filters(load_instances(ctx), filters);
  if (frame.rows() == 0) throw InputError("no instances left after filtering");
  std::vector<std::string> filter_text;
  for (const auto& f : filters) filter_text.push_back(f.text);

  json screening = json::object();
  for (const auto& set : model_sets(ctx)) {
    fit::ScreeningOptions options;
    options.correlation_threshold = ctx.config.get_double("correlation_threshold");
    options.redundancy_threshold = ctx.config.get_double("redundancy_threshold");
    options.policy.high_ratio = ctx.config.get_double("dof_ratio");
    options.policy.high_dof = static_cast<int>(ctx.config.get_long("dof_high"));
    options.seed = seed_of(ctx);
    const auto variables = set == "proposed" ? metrics::proposed_variables() : metrics::baseline_variables();
    fit::ScreeningReport report;
    try {
      report = fit::screen_and_specify(frame, variables, options);
    } catch (const NumericError& e) {
      throw InputError(set + " model: " + e.what());
    }
    const auto model = fit::fit_model(report.spec, frame);
    json artifact = fit::model_to_json(model);
    artifact["variable_set"] = set;
    artifact["where"] = filter_text;
    artifact["config_hash"] = ctx.config.hash();
    write_json(ctx.output(model_file(set)), artifact);
    screening[set] = report.to_json();

    ctx.out << set << ": " << frame.rows() << " instances, budget " << report.budget << ", " << model.spec.terms.size()
            << " variables, " << model.spec.total_dof() << " d.f., deviance " << csv::format_double(model.deviance, 6)
            << (model.converged ? "" : " (not converged)") << (model.separation ? " (separation)" : "") << '\n';
    if (model.separation) ctx.err << "warning: " << set << " model shows signs of complete separation\n";
  }
  screening["where"] = filter_text;
  screening["config_hash"] = ctx.config.hash();
  write_json(ctx.output("screening.json"), screening);
  return 0;
}

struct LoadedModel {
  std::string set;
  fit::FittedModel model;
  std::vector<Filter> filters;
};

std::optional<LoadedModel> load_artifact(const Context& ctx, const std::string& set, bool required) {
  const auto path = ctx.output(model_file(set));
  if (!fs::exists(path)) {
    if (required) throw InputError("missing input file: " + path.string());
    return std::nullopt;
  }
  auto in = open_input(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  LoadedModel out;
  out.set = set;
  out.model = fit::model_from_json(doc);
  out.filters = parse_filters(doc.value("where", std::vector<std::string>{}));
  return out;
}

// ---------------------------------------------------------------- evaluate

struct ModelEvaluation {
  evaluate::BootstrapReport report;
  json extra;
};

std::vector<evaluate::ChangePredictions> group_predictions(const std::vector<metrics::ReviewInstance>& instances,
                                                           const std::vector<double>& scores) {
  std::vector<evaluate::ChangePredictions> out;
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto [it, fresh] = slot.try_emplace(instances[i].change_id, out.size());
    if (fresh) out.push_back({instances[i].change_id, {}});
    out[it->second].candidates.push_back({instances[i].reviewer, scores[i], instances[i].outcome});
  }
  return out;
}

ModelEvaluation evaluate_model(const Context& ctx, const LoadedModel& loaded,
                               const std::vector<metrics::ReviewInstance>& all_instances) {
  std::vector<metrics::ReviewInstance> instances;
  {
    const fit::Frame full = metrics::to_frame(all_instances);
    for (std::size_t r = 0; r < all_instances.size(); ++r) {
      bool keep = true;
      for (const auto& f : loaded.filters) keep = keep && full.column(f.variable)[r] == f.value;
      if (keep) instances.push_back(all_instances[r]);
    }
  }
  const fit::Frame frame = metrics::to_frame(instances);
  evaluate::BootstrapOptions options;
  options.iterations = positive_int(ctx, "iterations");
  options.seed = seed_of(ctx);
  options.threshold = ctx.config.get_double("threshold");
  options.jobs = ctx.jobs;

  ModelEvaluation out;
  out.report = evaluate::out_of_sample_bootstrap(frame, loaded.model.spec, options);

  // Full-data scores for the ranking and invitation-reduction views.
  const auto scores = fit::predict(loaded.model, frame);
  const auto groups = group_predictions(instances, scores);
  json topk = json::object();
  for (const int k : {1, 2, 3}) topk["top" + std::to_string(k)] = evaluate::topk_accuracy(groups, k);
  const auto cm = evaluate::confusion(scores, frame.outcome, options.threshold);
  const long predicted_negative = cm.tn + cm.fn;
  out.extra["top_k"] = topk;
  out.extra["predicted_unresponded_share"] =
      frame.rows() ? static_cast<double>(predicted_negative) / static_cast<double>(frame.rows()) : 0.0;
  out.extra["negative_predictive_value"] =
      predicted_negative ? json(evaluate::negative_predictive_value(scores, frame.outcome, options.threshold))
                         : json(nullptr);
  return out;
}

int cmd_evaluate(Context& ctx) {
  auto in = open_input(ctx.output("instances.csv"));
  const auto instances = metrics::read_instances_csv(in);
  const auto sets = model_sets(ctx);
  std::map<std::string, ModelEvaluation> results;
  for (const std::string set : {"proposed", "baseline"}) {
    const bool wanted = std::find(sets.begin(), sets.end(), set) != sets.end();
    if (!wanted) continue;
    const auto loaded = load_artifact(ctx, set, sets.size() == 1);
    if (!loaded) {
      ctx.err << "note: " << model_file(set) << " not found; its columns are marked NA\n";
      continue;
    }
    results.emplace(set, evaluate_model(ctx, *loaded, instances));
  }
  if (results.empty()) throw InputError("missing input file: " + ctx.output(model_file("proposed")).string());

  json doc = json::object();
  for (const auto& [set, r] : results) {
    json entry = r.report.to_json(true);
    entry.update(r.extra);
    doc[set] = std::move(entry);
  }
  doc["config_hash"] = ctx.config.hash();
  write_json(ctx.output("evaluation.json"), doc);

  // Proposed versus baseline, one row per measure.
  write_stream(ctx.output("comparison.csv"), [&](std::ostream& os) {
    csv::write_row(os, {"measure", "proposed_mean", "proposed_sd", "baseline_mean", "baseline_sd", "improvement"});
    for (const auto* name : evaluate::kMeasureNames) {
      std::vector<std::string> row = {name};
      std::optional<double> p, b;
      for (const std::string set : {"proposed", "baseline"}) {
        const auto it = results.find(set);
        if (it == results.end()) {
          row.insert(row.end(), {"NA", "NA"});
          continue;
        }
        const auto& m = it->second.report.measure(name);
        row.push_back(csv::format_double(m.mean));
        row.push_back(csv::format_double(m.sd));
        (set == "proposed" ? p : b) = m.mean;
      }
      row.push_back(p && b && *b != 0.0 ? csv::format_double(evaluate::improvement(*p, *b)) : "NA");
      csv::write_row(os, row);
    }
  });

  // Separation between responded and unresponded invitations per variable.
  const fit::Frame frame = metrics::to_frame(instances);
  write_stream(ctx.output("cliffs.csv"), [&](std::ostream& os) {
    csv::write_row(os, {"variable", "delta", "magnitude"});
    for (const auto& name : frame.names) {
      std::vector<double> yes, no;
      const auto& col = frame.column(name);
      for (std::size_t r = 0; r < frame.rows(); ++r) (frame.outcome[r] == 1.0 ? yes : no).push_back(col[r]);
      if (yes.empty() || no.empty()) {
        csv::write_row(os, {name, "NA", "NA"});
        continue;
      }
      const auto d = evaluate::cliffs_delta(yes, no);
      csv::write_row(os, {name, csv::format_double(d.delta), d.magnitude});
    }
  });

  for (const auto& [set, r] : results) {
    ctx.out << set << ": auc " << csv::format_double(r.report.measure("auc").mean, 4) << " brier "
            << csv::format_double(r.report.measure("brier").mean, 4) << " f " << csv::format_double(r.report.measure("f_measure").mean, 4)
            << " (" << r.report.iterations << " iterations, " << r.report.redraws << " redraws)\n";
  }
  return 0;
}

// ---------------------------------------------------------------- explain

int cmd_explain(Context& ctx, const std::string& set) {
  if (set != "proposed" && set != "baseline") throw InputError("--model must be proposed or baseline");
  const auto loaded = *load_artifact(ctx, set, true);
  const fit::Frame frame = apply_filters(load_instances(ctx), loaded.filters);

  explain::WaldBootstrapOptions options;
  options.iterations = positive_int(ctx, "iterations");
  options.seed = seed_of(ctx);
  options.jobs = ctx.jobs;
  const auto distributions = explain::bootstrap_wald(frame, loaded.model.spec, options);
  explain::ScottKnottOptions sk;
  sk.alpha = ctx.config.get_double("alpha");
  sk.negligible_d = ctx.config.get_double("negligible_d");
  const auto ranks = explain::rank_variables(loaded.model, distributions, sk);

  const int grid = positive_int(ctx, "grid_size");
  std::vector<explain::PartialEffect> effects;
  json odds = json::array();
  for (const auto& v : ranks.variables) {
    effects.push_back(explain::partial_effect(loaded.model, frame, v.variable, std::max(grid, 2)));
    odds.push_back(explain::to_json(explain::odds_ratio_iqr(loaded.model, frame, v.variable)));
  }
  json doc = ranks.to_json(true);
  doc["model"] = set;
  doc["odds_ratios"] = std::move(odds);
  json fixed = json::object();
  if (!effects.empty()) {
    const auto refs = explain::reference_values(loaded.model, frame);
    for (const auto& [k, v] : refs) fixed[k] = v;
  }
  doc["reference_values"] = std::move(fixed);
  doc["config_hash"] = ctx.config.hash();
  write_json(ctx.output("explain.json"), doc);
  write_stream(ctx.output("partial_effects.csv"),
               [&](std::ostream& os) { explain::write_partial_effects_csv(os, effects); });

  for (const auto& v : ranks.variables) {
    ctx.out << v.rank << '\t' << v.variable << (v.starred ? " *" : "") << "\tchi2 "
            << csv::format_double(v.mean_chi2, 5) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- describe

Instant after_last_event(const Dataset& dataset) {
  Instant last{};
  for (const auto& c : dataset.changes) {
    last = std::max(last, c.created_at);
    if (c.closed_at) last = std::max(last, *c.closed_at);
    for (const auto& m : c.messages) last = std::max(last, m.timestamp);
    for (const auto& v : c.votes) last = std::max(last, v.timestamp);
  }
  return last + std::chrono::milliseconds(1);
}

int cmd_describe(Context& ctx) {
  auto labels_in = open_input(ctx.output("labels.csv"));
  const auto labels = prepare::read_labels_csv(labels_in);
  const auto source = require_file(dataset_path(ctx));
  const Dataset dataset = ingest::load_dataset(source.string());
  const auto bots = prepared_bots(ctx);

  const auto summary = describe::unresponded_summary(labels);
  json doc = summary.to_json();
  const double width = ctx.config.get_double("bin_width");
  std::vector<describe::HexBin> bins;
  if (summary.changes.size() >= 2) {
    try {
      const auto ivu = describe::invited_vs_unresponded(summary, width);
      doc["kendall_tau"] = {{"tau", ivu.tau.tau}, {"magnitude", ivu.tau.magnitude}, {"n", ivu.tau.n}};
      bins = ivu.bins;
    } catch (const NumericError& e) {
      doc["kendall_tau"] = nullptr;
      ctx.err << "note: " << e.what() << '\n';
      std::vector<double> x, y;
      for (const auto& c : summary.changes) {
        x.push_back(static_cast<double>(c.invited));
        y.push_back(static_cast<double>(c.unresponded));
      }
      bins = describe::hexbin(x, y, width);
    }
  } else {
    doc["kendall_tau"] = nullptr;
  }

  const auto& as_of_text = ctx.config.get("as_of");
  const Instant as_of = as_of_text.empty() ? after_last_event(dataset) : parse_instant(as_of_text);
  const auto index = metrics::build_index(dataset.changes, bots, index_options(ctx));
  const auto rates = describe::participation_rate_distribution(index, as_of);
  doc["participation_rate"] = rates.to_json();
  doc["participation_rate"]["as_of"] = format_instant(as_of);

  std::vector<AccountRef> people;
  for (const auto& a : dataset.sorted_accounts()) {
    if (!bots.count(a.account_id) && !a.is_bot) people.push_back(a);
  }
  const auto orgs = describe::org_diversity(people);
  doc["organizations"] = orgs.size();
  doc["config_hash"] = ctx.config.hash();

  write_json(ctx.output("rq1_summary.json"), doc);
  write_stream(ctx.output("violin.csv"), [&](std::ostream& os) { describe::write_violin_csv(os, summary); });
  write_stream(ctx.output("hexbin.csv"), [&](std::ostream& os) { describe::write_hexbin_csv(os, bins); });
  write_stream(ctx.output("org.csv"), [&](std::ostream& os) { describe::write_org_csv(os, orgs); });
  write_stream(ctx.output("participation_rates.csv"), [&](std::ostream& os) {
    csv::write_row(os, {"reviewer", "participation_rate"});
    for (const auto& [who, rate] : rates.rates) csv::write_row(os, {who, csv::format_double(rate)});
  });

  ctx.out << "changes: " << summary.total_changes << "\nwith unresponded invitation: " << summary.with_unresponded
          << " (" << csv::format_double(summary.proportion_with_unresponded * 100.0, 4) << "%)\n";
  return 0;
}

// ---------------------------------------------------------------- recommend

struct RecommendFlags {
  std::string model = "proposed";
  std::string author;
  std::string project;
  std::string subsystem;
  std::vector<std::string> files;
  std::vector<std::string> modules;
  long patch_size = 0;
  std::string as_of;
  std::vector<std::string> candidates;
  std::optional<double> min_prob;
};

int cmd_recommend(Context& ctx, const RecommendFlags& flags) {
  if (flags.candidates.empty()) throw InputError("recommend needs at least one --candidate");
  if (flags.author.empty()) throw InputError("recommend needs --author");
  if (flags.as_of.empty()) throw InputError("recommend needs --as-of");
  const auto loaded = *load_artifact(ctx, flags.model, true);
  const auto source = require_file(dataset_path(ctx));
  const Dataset dataset = ingest::load_dataset(source.string());
  const auto bots_path = ctx.output("bots.txt");
  const auto bots = fs::exists(bots_path) ? prepared_bots(ctx) : prepare::detect_bots(dataset, known_bots(ctx));
  const auto options = index_options(ctx);
  const auto index = metrics::build_index(dataset.changes, bots, options);

  // Describe the hypothetical change the same way stored ones are described.
  ChangeRecord probe;
  probe.project = flags.project;
  RevisionRecord first;
  for (const auto& f : flags.files) first.files.push_back({f, 0, 0});
  probe.revisions.push_back(first);

  metrics::InvitationContext context;
  context.author = flags.author;
  context.at = parse_instant(flags.as_of);
  context.patch_size = flags.patch_size;
  context.subsystem = !flags.subsystem.empty() ? flags.subsystem : subsystem_of(probe, options.subsystem_rule);
  context.modules = modules_of(probe);
  context.modules.insert(flags.modules.begin(), flags.modules.end());

  struct Row {
    std::string reviewer;
    double p = 0.0;
    bool cold_start = false;
  };
  std::vector<Row> rows;
  std::set<std::string> seen;
  for (const auto& candidate : flags.candidates) {
    if (!seen.insert(candidate).second) continue;
    context.reviewer = candidate;
    const auto instance = metrics::compute_instance(index, context);
    const auto values = instance.values();
    std::map<std::string, double> named;
    for (std::size_t i = 0; i < metrics::kMetricCount; ++i) named[metrics::kMetricNames[i]] = values[i];
    rows.push_back({candidate, fit::predict(loaded.model, named), !index.knows(candidate)});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.p != b.p) return a.p > b.p;
    return a.reviewer < b.reviewer;
  });

  csv::write_row(ctx.out, {"rank", "reviewer", "estimated participation likelihood", "status", "cold_start"});
  int rank = 0;
  for (const auto& r : rows) {
    const bool below = flags.min_prob && r.p < *flags.min_prob;
    csv::write_row(ctx.out, {std::to_string(++rank), r.reviewer, csv::format_double(r.p, 6),
                             below ? "likely unresponsive" : "recommended", r.cold_start ? "true" : "false"});
  }
  for (const auto& r : rows) {
    if (r.cold_start) ctx.err << "note: " << r.reviewer << " has no history before the as-of time (cold start)\n";
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Predicts whether invited code reviewers will take part in a review.", "revsignal"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::string> seed, out_dir;
  std::optional<long> jobs;
  std::vector<std::string> settings;
  app.add_option("--config", config_path, "key=value configuration file");
  app.add_option("--seed", seed, "Master random seed");
  app.add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  app.add_option("--out", out_dir, "Directory for artifacts");
  app.add_option("--set", settings, "Override a configuration key (key=value)");

  std::optional<std::string> dataset;
  std::optional<long> iterations;
  auto* ingest_cmd = app.add_subcommand("ingest", "Fetch or import changes into changes.jsonl");
  IngestFlags ingest_flags;
  std::optional<std::string> server;
  ingest_cmd->add_option("--server", server, "Gerrit base URL");
  ingest_cmd->add_option("--raw", ingest_flags.raw, "Saved /changes/ JSON responses to normalize");
  ingest_cmd->add_option("--dataset", dataset, "JSONL dataset to validate and canonicalize");

  auto* prepare_cmd = app.add_subcommand("prepare", "Detect bots, select relevant changes, label invitations");
  prepare_cmd->add_option("--dataset", dataset, "JSONL dataset (default: <out>/changes.jsonl)");
  std::optional<std::string> bots_path;
  prepare_cmd->add_option("--bots", bots_path, "Known bot accounts, one per line");

  auto* metrics_cmd = app.add_subcommand("metrics", "Compute the twelve metrics per invitation");
  metrics_cmd->add_option("--dataset", dataset, "JSONL dataset (default: <out>/changes.jsonl)");

  auto* fit_cmd = app.add_subcommand("fit", "Screen variables and fit the proposed and baseline models");
  std::vector<std::string> where;
  fit_cmd->add_option("--where", where, "Fit on instances with name=value (e.g. core_member=true)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Out-of-sample bootstrap performance");
  evaluate_cmd->add_option("--iterations", iterations, "Bootstrap iterations");

  auto* explain_cmd = app.add_subcommand("explain", "Variable importance, partial effects, odds ratios");
  std::string explain_model = "proposed";
  explain_cmd->add_option("--model", explain_model, "proposed or baseline");
  explain_cmd->add_option("--iterations", iterations, "Bootstrap iterations");

  auto* describe_cmd = app.add_subcommand("describe", "Unresponded-invitation statistics and community data");
  describe_cmd->add_option("--dataset", dataset, "JSONL dataset (default: <out>/changes.jsonl)");

  auto* recommend_cmd = app.add_subcommand("recommend", "Rank candidate reviewers for a change");
  RecommendFlags rec;
  std::optional<double> min_prob;
  recommend_cmd->add_option("--model", rec.model, "proposed or baseline");
  recommend_cmd->add_option("--author", rec.author, "Change owner account id")->required();
  recommend_cmd->add_option("--project", rec.project, "Gerrit project");
  recommend_cmd->add_option("--subsystem", rec.subsystem, "Subsystem key (overrides the derived one)");
  recommend_cmd->add_option("--files", rec.files, "Changed file paths");
  recommend_cmd->add_option("--modules", rec.modules, "Changed directories");
  recommend_cmd->add_option("--patch-size", rec.patch_size, "Inserted plus deleted lines");
  recommend_cmd->add_option("--as-of", rec.as_of, "Time of the invitation (ISO 8601)")->required();
  recommend_cmd->add_option("--candidate", rec.candidates, "Candidate reviewer ids")->required();
  recommend_cmd->add_option("--min-prob", min_prob, "Flag candidates below this likelihood");
  recommend_cmd->add_option("--dataset", dataset, "JSONL dataset (default: <out>/changes.jsonl)");

  std::vector<std::string> argv_tail(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_tail.begin(), argv_tail.end());
  try {
    app.parse(argv_tail);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    Context ctx{RunConfig{}, {}, 1, out, err};
    if (!config_path.empty()) ctx.config.load_file(config_path);
    for (const auto& s : settings) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + s + "'");
      ctx.config.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (seed) ctx.config.set("seed", *seed);
    if (jobs) ctx.config.set("jobs", std::to_string(*jobs));
    if (out_dir) ctx.config.set("out", *out_dir);
    if (dataset) ctx.config.set("dataset", *dataset);
    if (bots_path) ctx.config.set("bots", *bots_path);
    if (server) ctx.config.set("server", *server);
    if (iterations) ctx.config.set("iterations", std::to_string(*iterations));
    rec.min_prob = min_prob;

    seed_of(ctx);  // validate early
    const long j = ctx.config.get_long("jobs");
    if (j < 0) throw InputError("jobs must be >= 0");
    ctx.jobs = j == 0 ? default_jobs() : static_cast<unsigned>(j);
    ctx.out_dir = ctx.config.get("out");
    fs::create_directories(ctx.out_dir);

    if (*ingest_cmd) return cmd_ingest(ctx, ingest_flags);
    if (*prepare_cmd) return cmd_prepare(ctx);
    if (*metrics_cmd) return cmd_metrics(ctx);
    if (*fit_cmd) return cmd_fit(ctx, where);
    if (*evaluate_cmd) return cmd_evaluate(ctx);
    if (*explain_cmd) return cmd_explain(ctx, explain_model);
    if (*describe_cmd) return cmd_describe(ctx);
    if (*recommend_cmd) return cmd_recommend(ctx, rec);
    return 2;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace revsignal::cli
