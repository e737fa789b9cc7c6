#include "revsignal/explain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <boost/math/distributions/chi_squared.hpp>

#include "revsignal/csv.hpp"
#include "revsignal/errors.hpp"
#include "revsignal/fit/stats.hpp"
#include "revsignal/parallel.hpp"
#include "revsignal/random.hpp"

namespace revsignal::explain {

using nlohmann::json;

namespace {

constexpr int kMaxAttemptsPerIteration = 100;
constexpr double kSignificanceLevel = 0.001;
constexpr double kStarShare = 0.9;

bool has_both_classes(const std::vector<double>& y) {
  bool pos = false, neg = false;
  for (const double v : y) (v == 1.0 ? pos : neg) = true;
  return pos && neg;
}

}  // namespace

WaldDistributions bootstrap_wald(const fit::Frame& frame, const fit::ModelSpec& spec,
                                 const WaldBootstrapOptions& options) {
  if (options.iterations < 1) throw InputError("bootstrap: iterations must be >= 1");
  if (!has_both_classes(frame.outcome)) throw InputError("bootstrap: both outcome classes must be present");
  const fit::Frame data = frame.select(spec.variables());
  const std::size_t n = data.rows();
  const auto iterations = static_cast<std::size_t>(options.iterations);
  const auto variables = spec.variables();

  std::vector<std::vector<double>> chi2(iterations), pvals(iterations);
  std::vector<long> redraws(iterations, 0);

  parallel_for(iterations, options.jobs, [&](std::size_t it) {
    Rng rng(derive_seed(options.seed, it));
    for (int attempt = 0; attempt < kMaxAttemptsPerIteration; ++attempt) {
      std::vector<std::size_t> rows(n);
      for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
      const fit::Frame sample = data.take(rows);
      if (!has_both_classes(sample.outcome)) {
        ++redraws[it];
        continue;
      }
      try {
        const auto table = fit::wald_table(fit::fit_model(spec, sample));
        for (const auto& w : table) {
          chi2[it].push_back(w.chi2);
          pvals[it].push_back(w.p);
        }
        return;
      } catch (const NumericError&) {
        ++redraws[it];
      }
    }
    throw NumericError("Wald bootstrap iteration " + std::to_string(it) + " failed " +
                       std::to_string(kMaxAttemptsPerIteration) + " consecutive draws");
  });

  WaldDistributions out;
  out.variables = variables;
  out.iterations = options.iterations;
  out.seed = options.seed;
  for (const long r : redraws) out.redraws += r;
  const double allowed = options.max_redraw_fraction * static_cast<double>(options.iterations);
  if (static_cast<double>(out.redraws) > allowed) {
    throw NumericError("Wald bootstrap needed " + std::to_string(out.redraws) + " redraws over " +
                       std::to_string(options.iterations) + " iterations (limit " +
                       csv::format_double(options.max_redraw_fraction * 100.0, 4) +
                       "%); the data may be too small or nearly separable");
  }
  out.chi2.assign(variables.size(), std::vector<double>(iterations));
  out.p.assign(variables.size(), std::vector<double>(iterations));
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t v = 0; v < variables.size(); ++v) {
      out.chi2[v][it] = chi2[it][v];
      out.p[v][it] = pvals[it][v];
    }
  }
  return out;
}

double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw InputError("cohens_d: samples must be non-empty");
  const double ma = fit::mean(a), mb = fit::mean(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double ssa = 0.0, ssb = 0.0;
  for (const double x : a) ssa += (x - ma) * (x - ma);
  for (const double x : b) ssb += (x - mb) * (x - mb);
  const double denom = na + nb - 2.0;
  const double s = denom > 0.0 ? std::sqrt((ssa + ssb) / denom) : 0.0;
  if (s == 0.0) {
    if (ma == mb) return 0.0;
    return ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  return (ma - mb) / s;
}

namespace {

struct Group {
  std::string name;
  std::vector<double> values;
  double mean = 0.0;
};

struct Pooled {
  double s2_mean = 0.0;  // variance of a group mean
  double error_dof = 0.0;
};

// Recursive partition of groups[lo, hi) (sorted by mean, descending).
void split_groups(const std::vector<Group>& groups, std::size_t lo, std::size_t hi, const Pooled& pooled,
                  double alpha, std::vector<std::size_t>& boundaries) {
  const std::size_t k = hi - lo;
  if (k < 2) return;
  double grand = 0.0;
  for (std::size_t i = lo; i < hi; ++i) grand += groups[i].mean;
  const double total = grand;
  grand /= static_cast<double>(k);

  // Between-group sum of squares in centered form, which cannot go negative.
  double best = -1.0;
  std::size_t best_split = lo + 1;
  double left = 0.0;
  for (std::size_t j = lo + 1; j < hi; ++j) {
    left += groups[j - 1].mean;
    const double k1 = static_cast<double>(j - lo), k2 = static_cast<double>(hi - j);
    const double d1 = left / k1 - grand, d2 = (total - left) / k2 - grand;
    const double b = k1 * d1 * d1 + k2 * d2 * d2;
    if (b > best + 1e-12 * std::abs(best)) {
      best = b;
      best_split = j;
    }
  }
  double spread = 0.0;
  for (std::size_t i = lo; i < hi; ++i) spread += (groups[i].mean - grand) * (groups[i].mean - grand);
  const double v = pooled.error_dof;
  const double sigma2 = (spread + v * pooled.s2_mean) / (static_cast<double>(k) + v);

  bool significant = false;
  if (best <= 0.0) {
    significant = false;
  } else if (sigma2 <= 0.0) {
    significant = true;
  } else {
    const double lambda = std::numbers::pi / (2.0 * (std::numbers::pi - 2.0)) * best / sigma2;
    const boost::math::chi_squared dist(static_cast<double>(k) / (std::numbers::pi - 2.0));
    significant = boost::math::cdf(boost::math::complement(dist, lambda)) < alpha;
  }
  if (!significant) return;
  boundaries.push_back(best_split);
  split_groups(groups, lo, best_split, pooled, alpha, boundaries);
  split_groups(groups, best_split, hi, pooled, alpha, boundaries);
}

}  // namespace

std::map<std::string, int> scott_knott_esd(const std::map<std::string, std::vector<double>>& distributions,
                                           const ScottKnottOptions& options) {
  std::vector<Group> groups;
  for (const auto& [name, raw] : distributions) {
    if (raw.size() < 2) throw InputError("scott_knott_esd: '" + name + "' needs at least 2 values");
    Group g{name, raw, 0.0};
    if (options.log_transform) {
      for (auto& x : g.values) {
        if (x <= -1.0) throw InputError("scott_knott_esd: log1p transform needs values > -1");
        x = std::log1p(x);
      }
    }
    g.mean = fit::mean(g.values);
    groups.push_back(std::move(g));
  }
  std::map<std::string, int> ranks;
  if (groups.empty()) return ranks;
  std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.mean > b.mean; });

  Pooled pooled;
  double ss = 0.0, inverse_n = 0.0, count = 0.0;
  for (const auto& g : groups) {
    for (const double x : g.values) ss += (x - g.mean) * (x - g.mean);
    count += static_cast<double>(g.values.size());
    inverse_n += 1.0 / static_cast<double>(g.values.size());
  }
  pooled.error_dof = count - static_cast<double>(groups.size());
  const double mse = pooled.error_dof > 0.0 ? ss / pooled.error_dof : 0.0;
  pooled.s2_mean = mse * inverse_n / static_cast<double>(groups.size());

  std::vector<std::size_t> boundaries;
  split_groups(groups, 0, groups.size(), pooled, options.alpha, boundaries);
  std::sort(boundaries.begin(), boundaries.end());

  // Clusters as contiguous index ranges, then merge negligible neighbours.
  std::vector<std::pair<std::size_t, std::size_t>> clusters;
  std::size_t start = 0;
  for (const auto b : boundaries) {
    clusters.emplace_back(start, b);
    start = b;
  }
  clusters.emplace_back(start, groups.size());

  const auto pooled_values = [&](const std::pair<std::size_t, std::size_t>& c) {
    std::vector<double> out;
    for (std::size_t i = c.first; i < c.second; ++i) out.insert(out.end(), groups[i].values.begin(), groups[i].values.end());
    return out;
  };
  while (clusters.size() > 1) {
    double smallest = std::numeric_limits<double>::infinity();
    std::size_t at = 0;
    for (std::size_t i = 0; i + 1 < clusters.size(); ++i) {
      const double d = std::abs(cohens_d(pooled_values(clusters[i]), pooled_values(clusters[i + 1])));
      if (d < smallest) {
        smallest = d;
        at = i;
      }
    }
    if (!(smallest < options.negligible_d)) break;
    clusters[at].second = clusters[at + 1].second;
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(at) + 1);
  }

  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (std::size_t i = clusters[c].first; i < clusters[c].second; ++i) ranks[groups[i].name] = static_cast<int>(c) + 1;
  }
  return ranks;
}

const VariableRank& RankReport::find(const std::string& variable) const {
  for (const auto& v : variables) {
    if (v.variable == variable) return v;
  }
  throw InputError("variable '" + variable + "' is not in the rank report");
}

json RankReport::to_json(bool include_values) const {
  json vars = json::array();
  for (const auto& v : variables) {
    json entry = {{"variable", v.variable},
                  {"rank", v.rank},
                  {"mean_chi2", v.mean_chi2},
                  {"sd_chi2", v.sd_chi2},
                  {"significance_fraction", v.significance_fraction},
                  {"starred", v.starred},
                  {"chi2", v.full.chi2},
                  {"dof", v.full.dof},
                  {"p", v.full.p},
                  {"overall_proportion", v.full.proportion},
                  {"nonlinear_chi2", v.full.nonlinear_chi2},
                  {"nonlinear_dof", v.full.nonlinear_dof},
                  {"nonlinear_p", v.full.nonlinear_p},
                  {"nonlinear_proportion", v.full.nonlinear_proportion}};
    if (include_values) entry["chi2_values"] = v.chi2_values;
    vars.push_back(std::move(entry));
  }
  return {{"variables", std::move(vars)}, {"iterations", iterations}, {"seed", seed}, {"redraws", redraws}};
}

RankReport rank_variables(const fit::FittedModel& full_model, const WaldDistributions& distributions,
                          const ScottKnottOptions& options) {
  std::map<std::string, std::vector<double>> by_name;
  for (std::size_t v = 0; v < distributions.variables.size(); ++v) by_name[distributions.variables[v]] = distributions.chi2[v];
  const auto ranks = scott_knott_esd(by_name, options);
  const auto full = fit::wald_table(full_model);

  RankReport report;
  report.iterations = distributions.iterations;
  report.seed = distributions.seed;
  report.redraws = distributions.redraws;
  for (std::size_t v = 0; v < distributions.variables.size(); ++v) {
    VariableRank r;
    r.variable = distributions.variables[v];
    r.rank = ranks.at(r.variable);
    r.chi2_values = distributions.chi2[v];
    r.mean_chi2 = fit::mean(r.chi2_values);
    r.sd_chi2 = fit::stddev(r.chi2_values);
    const auto& p = distributions.p[v];
    const auto hits = std::count_if(p.begin(), p.end(), [](double x) { return x < kSignificanceLevel; });
    r.significance_fraction = p.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(p.size());
    r.starred = r.significance_fraction > kStarShare;
    for (const auto& w : full) {
      if (w.variable == r.variable) r.full = w;
    }
    report.variables.push_back(std::move(r));
  }
  std::stable_sort(report.variables.begin(), report.variables.end(), [](const VariableRank& a, const VariableRank& b) {
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.mean_chi2 > b.mean_chi2;
  });
  return report;
}

std::map<std::string, double> reference_values(const fit::FittedModel& model, const fit::Frame& frame) {
  std::map<std::string, double> out;
  for (const auto& term : model.spec.terms) {
    const auto& col = frame.column(term.variable);
    if (col.empty()) throw InputError("reference_values: no rows");
    if (term.binary) {
      const auto ones = std::count(col.begin(), col.end(), 1.0);
      out[term.variable] = 2 * static_cast<std::size_t>(ones) > col.size() ? 1.0 : 0.0;
    } else {
      out[term.variable] = fit::median(col);
    }
  }
  return out;
}

namespace {

std::vector<double> ordered_values(const fit::ModelSpec& spec, const std::map<std::string, double>& values) {
  std::vector<double> out;
  out.reserve(spec.terms.size());
  for (const auto& t : spec.terms) out.push_back(values.at(t.variable));
  return out;
}

void require_variable(const fit::FittedModel& model, const std::string& variable) {
  const auto vars = model.spec.variables();
  if (std::find(vars.begin(), vars.end(), variable) == vars.end()) {
    throw InputError("variable '" + variable + "' is not in the model");
  }
}

}  // namespace

PartialEffect partial_effect(const fit::FittedModel& model, const fit::Frame& frame, const std::string& variable,
                             int grid_size) {
  require_variable(model, variable);
  if (grid_size < 2) throw InputError("partial_effect: grid size must be >= 2");
  PartialEffect out;
  out.variable = variable;
  auto values = reference_values(model, frame);
  for (const auto& [name, v] : values) {
    if (name != variable) out.fixed[name] = v;
  }

  if (model.spec.term(variable).binary) {
    out.x = {0.0, 1.0};
  } else {
    std::vector<double> sorted = frame.column(variable);
    std::sort(sorted.begin(), sorted.end());
    const double lo = fit::quantile_sorted(sorted, 0.01);
    const double hi = fit::quantile_sorted(sorted, 0.99);
    if (lo == hi) {
      out.x = {lo};
    } else {
      for (int i = 0; i < grid_size; ++i) {
        out.x.push_back(i + 1 == grid_size ? hi : lo + (hi - lo) * i / (grid_size - 1));
      }
    }
  }

  for (const double x : out.x) {
    values[variable] = x;
    const Eigen::VectorXd g = fit::design_row(model.spec, ordered_values(model.spec, values));
    const double eta = g.dot(model.coefficients);
    const double se = std::sqrt(std::max(0.0, g.dot(model.covariance * g)));
    out.p.push_back(fit::logistic(eta));
    out.low.push_back(fit::logistic(eta - 1.96 * se));
    out.high.push_back(fit::logistic(eta + 1.96 * se));
  }
  return out;
}

OddsRatioEntry odds_ratio_iqr(const fit::FittedModel& model, const fit::Frame& frame, const std::string& variable) {
  require_variable(model, variable);
  OddsRatioEntry out;
  out.variable = variable;
  if (model.spec.term(variable).binary) {
    out.q1 = 0.0;
    out.q3 = 1.0;
  } else {
    std::vector<double> sorted = frame.column(variable);
    std::sort(sorted.begin(), sorted.end());
    out.q1 = fit::quantile_sorted(sorted, 0.25);
    out.q3 = fit::quantile_sorted(sorted, 0.75);
  }
  if (out.q1 == out.q3) {
    out.degenerate = true;
    return out;
  }
  auto values = reference_values(model, frame);
  values[variable] = out.q1;
  const double eta1 = fit::design_row(model.spec, ordered_values(model.spec, values)).dot(model.coefficients);
  values[variable] = out.q3;
  const double eta3 = fit::design_row(model.spec, ordered_values(model.spec, values)).dot(model.coefficients);
  out.odds_ratio = std::exp(eta3 - eta1);
  out.percent = (out.odds_ratio - 1.0) * 100.0;
  return out;
}

json to_json(const OddsRatioEntry& entry) {
  return {{"variable", entry.variable}, {"q1", entry.q1},         {"q3", entry.q3},
          {"odds_ratio", entry.odds_ratio}, {"percent", entry.percent}, {"degenerate", entry.degenerate}};
}

void write_partial_effects_csv(std::ostream& out, const std::vector<PartialEffect>& effects) {
  csv::write_row(out, {"variable", "x", "p", "low", "high"});
  for (const auto& e : effects) {
    for (std::size_t i = 0; i < e.x.size(); ++i) {
      csv::write_row(out, {e.variable, csv::format_double(e.x[i]), csv::format_double(e.p[i]),
                           csv::format_double(e.low[i]), csv::format_double(e.high[i])});
    }
  }
}

}  // namespace revsignal::explain
