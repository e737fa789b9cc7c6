#include "revsignal/describe.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <ostream>
#include <unordered_map>

#include "revsignal/csv.hpp"
#include "revsignal/errors.hpp"
#include "revsignal/fit/stats.hpp"

namespace revsignal::describe {

using nlohmann::json;

json UnrespondedSummary::to_json() const {
  return {{"total_changes", total_changes},
          {"changes_with_unresponded", with_unresponded},
          {"proportion_with_unresponded", proportion_with_unresponded},
          {"median_unresponded_proportion", median_unresponded_proportion},
          {"zero_responder_changes", zero_responder_changes}};
}

UnrespondedSummary unresponded_summary(const std::vector<prepare::ParticipationLabel>& labels) {
  UnrespondedSummary out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& l : labels) {
    auto [it, fresh] = slot.try_emplace(l.change_id, out.changes.size());
    if (fresh) out.changes.push_back({l.change_id, 0, 0, 0.0});
    auto& c = out.changes[it->second];
    ++c.invited;
    if (!l.responded) ++c.unresponded;
  }
  std::vector<double> proportions;
  for (auto& c : out.changes) {
    c.proportion = static_cast<double>(c.unresponded) / static_cast<double>(c.invited);
    proportions.push_back(c.proportion);
    if (c.unresponded > 0) ++out.with_unresponded;
    if (c.unresponded == c.invited) ++out.zero_responder_changes;
  }
  out.total_changes = static_cast<long>(out.changes.size());
  if (out.total_changes > 0) {
    out.proportion_with_unresponded = static_cast<double>(out.with_unresponded) / static_cast<double>(out.total_changes);
    out.median_unresponded_proportion = fit::median(proportions);
  }
  return out;
}

std::string kendall_magnitude(double tau) {
  const double a = std::abs(tau);
  if (a < 0.1) return "trivial";
  if (a < 0.3) return "small";
  if (a < 0.5) return "medium";
  return "large";
}

namespace {

long long tied_pairs(const std::vector<double>& sorted) {
  long long total = 0, run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Sorts v ascending and returns the number of strictly inverted pairs.
long long merge_count(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long long swaps = merge_count(v, scratch, lo, mid) + merge_count(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<long long>(mid - i);
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

KendallTau kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("kendall_tau_b: length mismatch");
  if (x.size() < 2) throw InputError("kendall_tau_b: needs at least 2 points");
  const auto n = static_cast<long long>(x.size());

  std::vector<std::pair<double, double>> pts(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) pts[i] = {x[i], y[i]};
  std::sort(pts.begin(), pts.end());

  std::vector<double> xs(pts.size()), ys(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    xs[i] = pts[i].first;
    ys[i] = pts[i].second;
  }
  const long long n1 = tied_pairs(xs);
  long long n3 = 0, run = 1;  // pairs tied on both
  for (std::size_t i = 1; i <= pts.size(); ++i) {
    if (i < pts.size() && pts[i] == pts[i - 1]) {
      ++run;
    } else {
      n3 += run * (run - 1) / 2;
      run = 1;
    }
  }
  std::vector<double> scratch(ys.size());
  const long long swaps = merge_count(ys, scratch, 0, ys.size());
  const long long n2 = tied_pairs(ys);
  const long long n0 = n * (n - 1) / 2;
  if (n0 == n1 || n0 == n2) throw NumericError("kendall_tau_b: undefined when all values on one side are tied");

  KendallTau out;
  out.n = n;
  out.tied_x = n1;
  out.tied_y = n2;
  out.concordant_minus_discordant = n0 - n1 - n2 + n3 - 2 * swaps;
  out.tau = static_cast<double>(out.concordant_minus_discordant) /
            std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  out.magnitude = kendall_magnitude(out.tau);
  return out;
}

std::vector<HexBin> hexbin(std::span<const double> x, std::span<const double> y, double width) {
  if (x.size() != y.size()) throw InputError("hexbin: length mismatch");
  if (!(width > 0.0)) throw InputError("hexbin: bin width must be positive");
  const double size = width / std::sqrt(3.0);  // center-to-vertex
  std::map<std::pair<long, long>, long> cells;  // (r, q)
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InputError("hexbin: non-finite point");
    const double q = (std::sqrt(3.0) / 3.0 * x[i] - y[i] / 3.0) / size;
    const double r = (2.0 / 3.0 * y[i]) / size;
    const double s = -q - r;
    double rq = std::round(q), rr = std::round(r), rs = std::round(s);
    const double dq = std::abs(rq - q), dr = std::abs(rr - r), ds = std::abs(rs - s);
    if (dq > dr && dq > ds) {
      rq = -rr - rs;
    } else if (dr > ds) {
      rr = -rq - rs;
    }
    ++cells[{static_cast<long>(rr), static_cast<long>(rq)}];
  }
  std::vector<HexBin> out;
  out.reserve(cells.size());
  for (const auto& [key, count] : cells) {
    const auto [r, q] = key;
    out.push_back({width * (static_cast<double>(q) + static_cast<double>(r) / 2.0), size * 1.5 * static_cast<double>(r),
                   count});
  }
  return out;
}

InvitedVsUnresponded invited_vs_unresponded(const UnrespondedSummary& summary, double bin_width) {
  if (summary.changes.size() < 2) throw InputError("invited_vs_unresponded: needs at least 2 changes");
  std::vector<double> invited, unresponded;
  for (const auto& c : summary.changes) {
    invited.push_back(static_cast<double>(c.invited));
    unresponded.push_back(static_cast<double>(c.unresponded));
  }
  return {kendall_tau_b(invited, unresponded), hexbin(invited, unresponded, bin_width)};
}

json RateDistribution::to_json() const {
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"reviewers", rates.size()}, {"q1", opt(q1)}, {"median", opt(median)}, {"q3", opt(q3)}};
}

RateDistribution participation_rate_distribution(const metrics::TemporalIndex& index, Instant as_of) {
  RateDistribution out;
  for (const auto& who : index.invited_accounts()) {
    const auto [received, responded] = index.lifetime_participation(who, as_of);
    if (received == 0) continue;
    out.rates.emplace_back(who, static_cast<double>(responded) / static_cast<double>(received));
  }
  if (!out.rates.empty()) {
    std::vector<double> sorted;
    for (const auto& [who, rate] : out.rates) sorted.push_back(rate);
    std::sort(sorted.begin(), sorted.end());
    out.q1 = fit::quantile_sorted(sorted, 0.25);
    out.median = fit::quantile_sorted(sorted, 0.5);
    out.q3 = fit::quantile_sorted(sorted, 0.75);
  }
  return out;
}

std::string organization_of(std::string_view email) {
  const auto at = email.rfind('@');
  if (at == std::string_view::npos) return "unknown";
  std::string domain(email.substr(at + 1));
  while (!domain.empty() && std::isspace(static_cast<unsigned char>(domain.back()))) domain.pop_back();
  if (domain.empty()) return "unknown";
  for (auto& c : domain) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return domain;
}

std::vector<OrgShare> org_diversity(const std::vector<AccountRef>& accounts) {
  std::map<std::string, long> counts;
  for (const auto& a : accounts) ++counts[organization_of(a.email)];
  std::vector<OrgShare> out;
  for (const auto& [org, n] : counts) {
    out.push_back({org, n, static_cast<double>(n) / static_cast<double>(accounts.size())});
  }
  std::stable_sort(out.begin(), out.end(), [](const OrgShare& a, const OrgShare& b) { return a.developers > b.developers; });
  return out;
}

void write_violin_csv(std::ostream& out, const UnrespondedSummary& summary) {
  csv::write_row(out, {"change_id", "invited", "unresponded", "proportion"});
  for (const auto& c : summary.changes) {
    csv::write_row(out, {c.change_id, std::to_string(c.invited), std::to_string(c.unresponded),
                         csv::format_double(c.proportion)});
  }
}

void write_hexbin_csv(std::ostream& out, const std::vector<HexBin>& bins) {
  csv::write_row(out, {"cx", "cy", "count"});
  for (const auto& b : bins) {
    csv::write_row(out, {csv::format_double(b.cx), csv::format_double(b.cy), std::to_string(b.count)});
  }
}

void write_org_csv(std::ostream& out, const std::vector<OrgShare>& shares) {
  csv::write_row(out, {"organization", "developers", "proportion"});
  for (const auto& s : shares) {
    csv::write_row(out, {s.organization, std::to_string(s.developers), csv::format_double(s.proportion)});
  }
}

}  // namespace revsignal::describe
