#pragma once

// Explanatory analysis of fitted models: bootstrap Wald chi-square
// distributions, Scott-Knott ESD ranking, partial effects and odds ratios.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "revsignal/fit/logistic.hpp"
#include "revsignal/frame.hpp"

namespace revsignal::explain {

struct WaldBootstrapOptions {
  int iterations = 1000;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  /// Abort when redraws exceed this share of iterations.
  double max_redraw_fraction = 0.05;
};

struct WaldDistributions {
  std::vector<std::string> variables;       // spec order
  std::vector<std::vector<double>> chi2;    // [variable][iteration]
  std::vector<std::vector<double>> p;       // [variable][iteration]
  int iterations = 0;
  std::uint64_t seed = 0;
  long redraws = 0;
};

/// Refits `spec` (knots kept) on with-replacement samples and records each
/// variable's joint Wald chi-square. Samples with a single class or a failed
/// fit are redrawn; throws NumericError when redraws exceed the allowed share.
WaldDistributions bootstrap_wald(const fit::Frame& frame, const fit::ModelSpec& spec,
                                 const WaldBootstrapOptions& options);

struct ScottKnottOptions {
  double alpha = 0.05;
  double negligible_d = 0.2;
  bool log_transform = true;
};

/// Rank per name, 1 = largest mean. Groups are sorted by mean and split
/// recursively where the between-group sum of squares is significant; then
/// adjacent ranks whose Cohen's d is below `negligible_d` are merged.
std::map<std::string, int> scott_knott_esd(const std::map<std::string, std::vector<double>>& distributions,
                                           const ScottKnottOptions& options = {});

/// Pooled-standard-deviation Cohen's d (mean(a) - mean(b)) / s.
double cohens_d(const std::vector<double>& a, const std::vector<double>& b);

struct VariableRank {
  std::string variable;
  int rank = 0;
  double mean_chi2 = 0.0;
  double sd_chi2 = 0.0;
  /// Share of bootstrap fits with p < 0.001.
  double significance_fraction = 0.0;
  bool starred = false;
  fit::WaldResult full;  // full-data fit
  std::vector<double> chi2_values;
};

struct RankReport {
  std::vector<VariableRank> variables;  // by rank, then mean chi-square
  int iterations = 0;
  std::uint64_t seed = 0;
  long redraws = 0;

  const VariableRank& find(const std::string& variable) const;
  nlohmann::json to_json(bool include_values = true) const;
};

RankReport rank_variables(const fit::FittedModel& full_model, const WaldDistributions& distributions,
                          const ScottKnottOptions& options = {});

/// Medians of numeric variables and modes of binary ones (ties go to 0).
std::map<std::string, double> reference_values(const fit::FittedModel& model, const fit::Frame& frame);

struct PartialEffect {
  std::string variable;
  std::vector<double> x;
  std::vector<double> p;
  std::vector<double> low;
  std::vector<double> high;
  std::map<std::string, double> fixed;
};

/// Predicted probability over the variable's 1st to 99th percentile ({0, 1}
/// for binary terms) with a 95% delta-method band.
PartialEffect partial_effect(const fit::FittedModel& model, const fit::Frame& frame, const std::string& variable,
                             int grid_size = 100);

struct OddsRatioEntry {
  std::string variable;
  double q1 = 0.0;
  double q3 = 0.0;
  double odds_ratio = 1.0;
  double percent = 0.0;
  bool degenerate = false;
};

/// Odds ratio for moving the variable from its first to third quartile (0 to
/// 1 for binary terms) with the others at reference values.
OddsRatioEntry odds_ratio_iqr(const fit::FittedModel& model, const fit::Frame& frame, const std::string& variable);

nlohmann::json to_json(const OddsRatioEntry& entry);

/// variable,x,p,low,high
void write_partial_effects_csv(std::ostream& out, const std::vector<PartialEffect>& effects);

}  // namespace revsignal::explain
