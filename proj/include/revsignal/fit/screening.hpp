#pragma once

// Predictor screening and degrees-of-freedom allocation ahead of fitting:
// correlation clustering, redundancy analysis, the d.f. budget and the
// Spearman multiple rho^2 driven spline allocation.

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "revsignal/fit/logistic.hpp"
#include "revsignal/frame.hpp"

namespace revsignal::fit {

struct ClusterReport {
  int round = 0;
  std::vector<std::string> members;
  std::string kept;
  double min_abs_rho = 0.0;  // weakest link inside the cluster
};

struct ClusteringResult {
  std::vector<std::string> surviving;
  std::vector<ClusterReport> clusters;  // only clusters with 2+ members
};

/// Complete-linkage clustering on 1 - |rho| (Spearman). Every cluster whose
/// members are pairwise |rho| > threshold keeps only its earliest variable in
/// `priority` (variables absent from `priority` rank after it, in input
/// order). Repeats until no surviving pair exceeds the threshold.
ClusteringResult variable_clustering(const Frame& frame, const std::vector<std::string>& variables,
                                     double threshold = 0.7, const std::vector<std::string>& priority = {});

struct RedundancyDrop {
  std::string variable;
  double r2 = 0.0;
};

struct RedundancyResult {
  std::vector<std::string> surviving;
  std::vector<RedundancyDrop> dropped;
};

/// R^2 of an OLS regression of `target` on an intercept plus `predictors`.
/// Returns 1 when the target is constant.
double ols_r2(std::span<const double> target, const std::vector<std::span<const double>>& predictors);

/// Repeatedly regresses each variable on all others and drops the one with
/// the largest R^2 while it exceeds the threshold. Ties within 1e-9 drop the
/// variable listed last. Never drops the final variable.
RedundancyResult redundancy_filter(const Frame& frame, const std::vector<std::string>& variables,
                                   double r2_threshold = 0.9);

/// floor(min(T, F) / 15).
long dof_budget(long trues, long falses);

/// R^2 of regressing y on rank(x) and rank(x)^2; 0 for constant x.
double spearman_multiple_rho2(std::span<const double> x, std::span<const double> y);

struct DofPolicy {
  double high_ratio = 0.3;
  int high_dof = 3;
};

/// Variables with rho^2 >= high_ratio * max(rho^2) get `high_dof`, others 1;
/// binary variables always 1. When the total exceeds the budget, the
/// lowest-rho^2 splined variables are demoted to 1. Throws NumericError when
/// the budget cannot cover one d.f. per variable.
std::vector<std::pair<std::string, int>> allocate_dof(const std::vector<std::pair<std::string, double>>& rho2,
                                                      long budget, const std::set<std::string>& binary,
                                                      const DofPolicy& policy = {});

struct ScreeningOptions {
  double correlation_threshold = 0.7;
  double redundancy_threshold = 0.9;
  std::vector<std::string> priority;  // defaults to the variable order given
  DofPolicy policy;
  std::uint64_t seed = 0;
};

struct ScreeningReport {
  std::vector<std::string> candidates;
  ClusteringResult clustering;
  RedundancyResult redundancy;
  long trues = 0;
  long falses = 0;
  long budget = 0;
  std::vector<std::pair<std::string, double>> rho2;
  std::vector<std::pair<std::string, int>> allocation;
  ModelSpec spec;

  nlohmann::json to_json() const;
};

/// Clustering, redundancy, budget, rho^2 allocation and knot placement.
ScreeningReport screen_and_specify(const Frame& frame, const std::vector<std::string>& variables,
                                   const ScreeningOptions& options = {});

}  // namespace revsignal::fit
