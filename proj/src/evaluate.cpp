#include "revsignal/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "revsignal/errors.hpp"
#include "revsignal/fit/stats.hpp"
#include "revsignal/parallel.hpp"

namespace revsignal::evaluate {

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw InputError("auc: length mismatch");
  const auto ranks = fit::midranks(scores);
  long long positives = 0;
  long long doubled_rank_sum = 0;  // midranks are multiples of 1/2
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1.0) {
      ++positives;
      doubled_rank_sum += std::llround(2.0 * ranks[i]);
    }
  }
  const long long negatives = static_cast<long long>(scores.size()) - positives;
  if (positives == 0 || negatives == 0) throw InputError("auc: both classes must be present");
  // 2 * (concordant + ties / 2) over 2 * pairs.
  const long long doubled_u = doubled_rank_sum - positives * (positives + 1);
  return static_cast<double>(doubled_u) / static_cast<double>(2 * positives * negatives);
}

double brier(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw InputError("brier: length mismatch");
  if (scores.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = scores[i] - labels[i];
    total += d * d;
  }
  return total / static_cast<double>(scores.size());
}

Confusion confusion(std::span<const double> scores, std::span<const double> labels, double threshold) {
  if (scores.size() != labels.size()) throw InputError("confusion: length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1.0;
    if (predicted && actual) ++c.tp;
    if (predicted && !actual) ++c.fp;
    if (!predicted && !actual) ++c.tn;
    if (!predicted && actual) ++c.fn;
  }
  return c;
}

double f_measure(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

Prf prf(std::span<const double> scores, std::span<const double> labels, double threshold) {
  const Confusion c = confusion(scores, labels, threshold);
  Prf r;
  r.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  r.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  r.f_measure = f_measure(r.precision, r.recall);
  return r;
}

double negative_predictive_value(std::span<const double> scores, std::span<const double> labels, double threshold) {
  const Confusion c = confusion(scores, labels, threshold);
  if (c.tn + c.fn == 0) throw NumericError("negative predictive value undefined: no predicted negatives");
  return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fn);
}

double improvement(double proposed, double baseline) {
  if (baseline == 0.0) throw NumericError("improvement: baseline value is zero");
  return (proposed - baseline) / baseline;
}

std::string cliffs_magnitude(double delta) {
  const double d = std::abs(delta);
  if (d < 0.147) return "negligible";
  if (d < 0.33) return "small";
  if (d < 0.474) return "medium";
  return "large";
}

CliffsDelta cliffs_delta(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("cliffs_delta: samples must be non-empty");
  std::vector<double> sorted(b.begin(), b.end());
  std::sort(sorted.begin(), sorted.end());
  long long greater = 0, less = 0;
  for (const double x : a) {
    greater += std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
    less += sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), x);
  }
  CliffsDelta out;
  out.delta = static_cast<double>(greater - less) /
              (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  out.magnitude = cliffs_magnitude(out.delta);
  return out;
}

void rank_candidates(std::vector<Candidate>& candidates) {
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.reviewer < y.reviewer;
  });
}

double topk_accuracy(const std::vector<ChangePredictions>& changes, int k) {
  if (changes.empty()) return 0.0;
  if (k < 1) throw InputError("topk_accuracy: k must be >= 1");
  long hits = 0;
  for (const auto& change : changes) {
    auto ranked = change.candidates;
    rank_candidates(ranked);
    const auto limit = std::min(ranked.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
      if (ranked[i].responded) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(changes.size());
}

const MeasureSummary& BootstrapReport::measure(std::string_view name) const {
  for (std::size_t i = 0; i < kMeasureNames.size(); ++i) {
    if (name == kMeasureNames[i]) return measures[i];
  }
  throw InputError("unknown measure '" + std::string(name) + "'");
}

nlohmann::json BootstrapReport::to_json(bool include_values) const {
  nlohmann::json m = nlohmann::json::object();
  for (std::size_t i = 0; i < kMeasureNames.size(); ++i) {
    nlohmann::json entry = {{"mean", measures[i].mean}, {"sd", measures[i].sd}};
    if (include_values) entry["values"] = measures[i].values;
    m[kMeasureNames[i]] = std::move(entry);
  }
  return {{"measures", std::move(m)},
          {"iterations", iterations},
          {"seed", seed},
          {"threshold", threshold},
          {"spec_hash", spec_hash},
          {"redraws", redraws}};
}

std::vector<std::size_t> bootstrap_draw(std::size_t n, Rng& rng) {
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
  return rows;
}

namespace {

bool has_both_classes(const std::vector<double>& y) {
  bool pos = false, neg = false;
  for (const double v : y) {
    (v == 1.0 ? pos : neg) = true;
  }
  return pos && neg;
}

}  // namespace

BootstrapReport out_of_sample_bootstrap(const fit::Frame& frame, const fit::ModelSpec& spec,
                                        const BootstrapOptions& options) {
  if (options.iterations < 1) throw InputError("bootstrap: iterations must be >= 1");
  if (!has_both_classes(frame.outcome)) throw InputError("bootstrap: both outcome classes must be present");
  const fit::Frame data = frame.select(spec.variables());
  const std::size_t n = data.rows();
  const auto iterations = static_cast<std::size_t>(options.iterations);

  std::vector<std::array<double, 5>> results(iterations);
  std::vector<long> redraws(iterations, 0);

  parallel_for(iterations, options.jobs, [&](std::size_t it) {
    Rng rng(derive_seed(options.seed, it));
    for (int attempt = 0;; ++attempt) {
      if (attempt > options.max_redraws_per_iteration) {
        throw NumericError("bootstrap iteration " + std::to_string(it) + " failed after " +
                           std::to_string(attempt) + " draws");
      }
      const auto rows = bootstrap_draw(n, rng);
      std::vector<char> in_bag(n, 0);
      for (const auto r : rows) in_bag[r] = 1;
      std::vector<std::size_t> oob;
      for (std::size_t r = 0; r < n; ++r) {
        if (!in_bag[r]) oob.push_back(r);
      }
      const fit::Frame train = data.take(rows);
      const fit::Frame test = data.take(oob);
      if (!has_both_classes(train.outcome) || !has_both_classes(test.outcome)) {
        ++redraws[it];
        continue;
      }
      try {
        const fit::ModelSpec local = fit::reestimate_knots(spec, train);
        const fit::FittedModel model = fit::fit_model(local, train);
        const auto scores = fit::predict(model, test);
        const Prf p = prf(scores, test.outcome, options.threshold);
        results[it] = {auc(scores, test.outcome), brier(scores, test.outcome), p.precision, p.recall, p.f_measure};
        return;
      } catch (const NumericError&) {
        ++redraws[it];
      }
    }
  });

  BootstrapReport report;
  report.iterations = options.iterations;
  report.seed = options.seed;
  report.threshold = options.threshold;
  report.spec_hash = fit::spec_hash(spec);
  report.redraws = std::accumulate(redraws.begin(), redraws.end(), 0L);
  for (std::size_t m = 0; m < kMeasureNames.size(); ++m) {
    auto& summary = report.measures[m];
    summary.values.reserve(iterations);
    for (const auto& r : results) summary.values.push_back(r[m]);
    summary.mean = fit::mean(summary.values);
    summary.sd = fit::stddev(summary.values);
  }
  return report;
}

}  // namespace revsignal::evaluate
