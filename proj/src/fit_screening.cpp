#include "revsignal/fit/screening.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "revsignal/errors.hpp"
#include "revsignal/fit/stats.hpp"

namespace revsignal::fit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<std::vector<double>> abs_spearman_matrix(const Frame& frame, const std::vector<std::string>& vars) {
  std::vector<std::vector<double>> ranks;
  for (const auto& v : vars) ranks.push_back(midranks(frame.column(v)));
  const std::size_t k = vars.size();
  std::vector<std::vector<double>> rho(k, std::vector<double>(k, 1.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const auto r = pearson(ranks[i], ranks[j]);
      rho[i][j] = rho[j][i] = r ? std::abs(*r) : 0.0;
    }
  }
  return rho;
}

}  // namespace

ClusteringResult variable_clustering(const Frame& frame, const std::vector<std::string>& variables,
                                     double threshold, const std::vector<std::string>& priority) {
  if (variables.size() < 2) return {variables, {}};
  const auto rank_of = [&](const std::string& v) {
    const auto p = std::find(priority.begin(), priority.end(), v);
    if (p != priority.end()) return static_cast<std::size_t>(p - priority.begin());
    const auto i = std::find(variables.begin(), variables.end(), v);
    return priority.size() + static_cast<std::size_t>(i - variables.begin());
  };

  ClusteringResult result;
  std::vector<std::string> current = variables;
  for (int round = 1;; ++round) {
    const auto rho = abs_spearman_matrix(frame, current);
    const std::size_t k = current.size();
    bool any = false;
    for (std::size_t i = 0; i < k && !any; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        if (rho[i][j] > threshold) {
          any = true;
          break;
        }
      }
    }
    if (!any) break;

    // Complete linkage: a merge is allowed while every cross pair has
    // |rho| above the threshold.
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < k; ++i) clusters.push_back({i});
    const auto link = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
      double weakest = 1.0;
      for (const auto i : a) {
        for (const auto j : b) weakest = std::min(weakest, rho[i][j]);
      }
      return weakest;
    };
    while (clusters.size() > 1) {
      double best = -1.0;
      std::size_t ba = 0, bb = 0;
      for (std::size_t a = 0; a < clusters.size(); ++a) {
        for (std::size_t b = a + 1; b < clusters.size(); ++b) {
          const double l = link(clusters[a], clusters[b]);
          if (l > best) {
            best = l;
            ba = a;
            bb = b;
          }
        }
      }
      if (!(best > threshold)) break;
      clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
      clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    }

    std::set<std::string> dropped;
    for (auto& members : clusters) {
      if (members.size() < 2) continue;
      std::sort(members.begin(), members.end());
      ClusterReport report;
      report.round = round;
      report.min_abs_rho = link(members, members);
      std::size_t keep = members.front();
      for (const auto m : members) {
        report.members.push_back(current[m]);
        if (rank_of(current[m]) < rank_of(current[keep])) keep = m;
      }
      report.kept = current[keep];
      for (const auto m : members) {
        if (m != keep) dropped.insert(current[m]);
      }
      result.clusters.push_back(std::move(report));
    }
    std::vector<std::string> next;
    for (const auto& v : current) {
      if (!dropped.count(v)) next.push_back(v);
    }
    current = std::move(next);
    if (current.size() < 2) break;
  }
  result.surviving = std::move(current);
  return result;
}

double ols_r2(std::span<const double> target, const std::vector<std::span<const double>>& predictors) {
  const auto n = static_cast<Eigen::Index>(target.size());
  const double ybar = mean(target);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = target[static_cast<std::size_t>(i)] - ybar;
  const double sst = y.squaredNorm();
  if (!(sst > 0.0)) return 1.0;

  std::vector<VectorXd> cols;
  for (const auto& p : predictors) {
    const double m = mean(p);
    VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i) c[i] = p[static_cast<std::size_t>(i)] - m;
    const double norm = c.norm();
    if (norm > 0.0) cols.push_back(c / norm);
  }
  if (cols.empty()) return 0.0;
  MatrixXd x(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = cols[j];
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  const VectorXd beta = qr.solve(y);
  const double sse = (y - x * beta).squaredNorm();
  return std::clamp(1.0 - sse / sst, 0.0, 1.0);
}

RedundancyResult redundancy_filter(const Frame& frame, const std::vector<std::string>& variables,
                                   double r2_threshold) {
  RedundancyResult result;
  std::vector<std::string> current = variables;
  while (current.size() > 1) {
    std::vector<double> r2(current.size());
    for (std::size_t i = 0; i < current.size(); ++i) {
      std::vector<std::span<const double>> others;
      for (std::size_t j = 0; j < current.size(); ++j) {
        if (j != i) others.emplace_back(frame.column(current[j]));
      }
      r2[i] = ols_r2(frame.column(current[i]), others);
    }
    const double best = *std::max_element(r2.begin(), r2.end());
    if (!(best > r2_threshold)) break;
    std::size_t drop = 0;
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (r2[i] >= best - 1e-9) drop = i;
    }
    result.dropped.push_back({current[drop], r2[drop]});
    current.erase(current.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  result.surviving = std::move(current);
  return result;
}

long dof_budget(long trues, long falses) {
  if (trues < 0 || falses < 0) throw InputError("dof_budget: negative class count");
  return std::min(trues, falses) / 15;
}

double spearman_multiple_rho2(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("spearman_multiple_rho2: length mismatch");
  if (x.size() < 3) throw InputError("spearman_multiple_rho2: need at least 3 observations");
  const auto ranks = midranks(x);
  const double rbar = mean(ranks);
  std::vector<double> squared(ranks.size());
  bool constant = true;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    squared[i] = (ranks[i] - rbar) * (ranks[i] - rbar);
    if (ranks[i] != ranks[0]) constant = false;
  }
  if (constant) return 0.0;
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) return 0.0;
  return ols_r2(y, {std::span<const double>(ranks), std::span<const double>(squared)});
}

std::vector<std::pair<std::string, int>> allocate_dof(const std::vector<std::pair<std::string, double>>& rho2,
                                                      long budget, const std::set<std::string>& binary,
                                                      const DofPolicy& policy) {
  if (budget < static_cast<long>(rho2.size())) {
    throw NumericError("degrees-of-freedom budget " + std::to_string(budget) + " cannot support " +
                       std::to_string(rho2.size()) + " variables (need min(T,F)/15 >= number of variables)");
  }
  double top = 0.0;
  for (const auto& [name, value] : rho2) top = std::max(top, value);
  std::vector<std::pair<std::string, int>> allocation;
  long total = 0;
  for (const auto& [name, value] : rho2) {
    const bool high = top > 0.0 && value >= policy.high_ratio * top && !binary.count(name);
    const int d = high ? std::max(1, policy.high_dof) : 1;
    allocation.emplace_back(name, d);
    total += d;
  }
  while (total > budget) {
    std::size_t victim = allocation.size();
    for (std::size_t i = 0; i < allocation.size(); ++i) {
      if (allocation[i].second <= 1) continue;
      if (victim == allocation.size() || rho2[i].second <= rho2[victim].second) victim = i;
    }
    if (victim == allocation.size()) break;
    total -= allocation[victim].second - 1;
    allocation[victim].second = 1;
  }
  return allocation;
}

nlohmann::json ScreeningReport::to_json() const {
  nlohmann::json clusters_json = nlohmann::json::array();
  for (const auto& c : clustering.clusters) {
    clusters_json.push_back(
        {{"round", c.round}, {"members", c.members}, {"kept", c.kept}, {"min_abs_rho", c.min_abs_rho}});
  }
  nlohmann::json redundancy_json = nlohmann::json::array();
  for (const auto& d : redundancy.dropped) redundancy_json.push_back({{"variable", d.variable}, {"r2", d.r2}});
  nlohmann::json dof = nlohmann::json::array();
  for (const auto& t : spec.terms) {
    double r2 = 0.0;
    for (const auto& [name, value] : rho2) {
      if (name == t.variable) r2 = value;
    }
    dof.push_back({{"variable", t.variable},
                   {"rho2", r2},
                   {"allocated", t.requested_dof},
                   {"overall", t.dof},
                   {"nonlinear", t.dof - 1}});
  }
  return {{"candidates", candidates},
          {"clusters", std::move(clusters_json)},
          {"after_clustering", clustering.surviving},
          {"redundant", std::move(redundancy_json)},
          {"surviving", redundancy.surviving},
          {"true_instances", trues},
          {"false_instances", falses},
          {"budget", budget},
          {"spent", spec.total_dof()},
          {"dof", std::move(dof)}};
}

ScreeningReport screen_and_specify(const Frame& frame, const std::vector<std::string>& variables,
                                   const ScreeningOptions& options) {
  ScreeningReport report;
  report.candidates = variables;
  report.clustering = variable_clustering(frame, variables, options.correlation_threshold,
                                          options.priority.empty() ? variables : options.priority);
  report.redundancy = redundancy_filter(frame, report.clustering.surviving, options.redundancy_threshold);
  for (const double y : frame.outcome) {
    if (y == 1.0) {
      ++report.trues;
    } else {
      ++report.falses;
    }
  }
  report.budget = dof_budget(report.trues, report.falses);
  std::set<std::string> binary;
  for (const auto& v : report.redundancy.surviving) {
    report.rho2.emplace_back(v, spearman_multiple_rho2(frame.column(v), frame.outcome));
    if (is_binary(frame.column(v))) binary.insert(v);
  }
  report.allocation = allocate_dof(report.rho2, report.budget, binary, options.policy);
  report.spec = place_knots(report.allocation, frame, options.seed, report.budget);
  return report;
}

}  // namespace revsignal::fit
