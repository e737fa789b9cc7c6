#pragma once

// Performance measures and out-of-sample bootstrap validation.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "revsignal/fit/logistic.hpp"
#include "revsignal/frame.hpp"
#include "revsignal/random.hpp"

namespace revsignal::evaluate {

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Throws InputError unless both classes are present.
double auc(std::span<const double> scores, std::span<const double> labels);

/// Mean squared difference between score and the 0/1 outcome.
double brier(std::span<const double> scores, std::span<const double> labels);

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
};
/// Positive prediction iff score >= threshold.
Confusion confusion(std::span<const double> scores, std::span<const double> labels, double threshold = 0.5);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
};
/// Harmonic mean of precision and recall; 0 when both are 0.
double f_measure(double precision, double recall);
Prf prf(std::span<const double> scores, std::span<const double> labels, double threshold = 0.5);

/// TN / (TN + FN). Throws NumericError when nothing is predicted negative.
double negative_predictive_value(std::span<const double> scores, std::span<const double> labels,
                                 double threshold = 0.5);

/// (proposed - baseline) / baseline. Throws NumericError on a zero baseline.
double improvement(double proposed, double baseline);

struct CliffsDelta {
  double delta = 0.0;
  std::string magnitude;  // negligible | small | medium | large
};
std::string cliffs_magnitude(double delta);
CliffsDelta cliffs_delta(std::span<const double> a, std::span<const double> b);

struct Candidate {
  std::string reviewer;
  double score = 0.0;
  bool responded = false;
};
struct ChangePredictions {
  std::string change_id;
  std::vector<Candidate> candidates;
};
/// Highest score first, ties by reviewer id.
void rank_candidates(std::vector<Candidate>& candidates);
/// Share of changes where one of the k best-scored invitees responded.
double topk_accuracy(const std::vector<ChangePredictions>& changes, int k);

inline constexpr std::array<const char*, 5> kMeasureNames = {"auc", "brier", "precision", "recall", "f_measure"};

struct MeasureSummary {
  std::vector<double> values;
  double mean = 0.0;
  double sd = 0.0;
};

struct BootstrapOptions {
  int iterations = 1000;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  unsigned jobs = 1;
  int max_redraws_per_iteration = 100;
};

struct BootstrapReport {
  std::array<MeasureSummary, 5> measures;  // kMeasureNames order
  int iterations = 0;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  long redraws = 0;
  std::string spec_hash;

  const MeasureSummary& measure(std::string_view name) const;
  nlohmann::json to_json(bool include_values = true) const;
};

/// Per iteration: draw n rows with replacement, re-place knots and refit on
/// the draw, score the rows left out. Draws whose sample or out-of-bag rows
/// lack a class, or whose fit fails, are redrawn. Iteration i uses a stream
/// seeded from (seed, i), so any job count gives the same report.
BootstrapReport out_of_sample_bootstrap(const fit::Frame& frame, const fit::ModelSpec& spec,
                                        const BootstrapOptions& options);

/// Row indices of a with-replacement draw of size n.
std::vector<std::size_t> bootstrap_draw(std::size_t n, Rng& rng);

}  // namespace revsignal::evaluate
