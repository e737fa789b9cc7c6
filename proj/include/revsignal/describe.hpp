#pragma once

// Descriptive statistics over labeled invitations and the reviewer
// community.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "revsignal/metrics.hpp"
#include "revsignal/model.hpp"
#include "revsignal/prepare.hpp"

namespace revsignal::describe {

struct ChangeCounts {
  std::string change_id;
  long invited = 0;
  long unresponded = 0;
  double proportion = 0.0;  // unresponded / invited
};

struct UnrespondedSummary {
  std::vector<ChangeCounts> changes;  // first-appearance order
  long total_changes = 0;
  long with_unresponded = 0;
  double proportion_with_unresponded = 0.0;
  double median_unresponded_proportion = 0.0;
  long zero_responder_changes = 0;

  nlohmann::json to_json() const;
};

UnrespondedSummary unresponded_summary(const std::vector<prepare::ParticipationLabel>& labels);

struct KendallTau {
  double tau = 0.0;
  std::string magnitude;  // trivial | small | medium | large
  long long n = 0;
  long long concordant_minus_discordant = 0;
  long long tied_x = 0;  // pairs tied on x
  long long tied_y = 0;  // pairs tied on y
};

std::string kendall_magnitude(double tau);

/// Tau-b with tie correction, O(n log n). Throws InputError on size mismatch
/// or fewer than 2 points and NumericError when either side is all tied.
KendallTau kendall_tau_b(std::span<const double> x, std::span<const double> y);

struct HexBin {
  double cx = 0.0;
  double cy = 0.0;
  long count = 0;
};

/// Pointy-top hexagonal binning; `width` is the distance between horizontally
/// adjacent centers. Bins are returned ordered by row, then column.
std::vector<HexBin> hexbin(std::span<const double> x, std::span<const double> y, double width);

struct InvitedVsUnresponded {
  KendallTau tau;
  std::vector<HexBin> bins;
};

/// Requires at least 2 changes.
InvitedVsUnresponded invited_vs_unresponded(const UnrespondedSummary& summary, double bin_width);

struct RateDistribution {
  std::vector<std::pair<AccountId, double>> rates;  // by account id
  std::optional<double> q1, median, q3;

  nlohmann::json to_json() const;
};

/// Responded / received over each reviewer's history before `as_of`.
/// Reviewers without invitations are left out.
RateDistribution participation_rate_distribution(const metrics::TemporalIndex& index, Instant as_of);

struct OrgShare {
  std::string organization;
  long developers = 0;
  double proportion = 0.0;
};

/// Lower-cased text after '@'; empty or malformed emails count as "unknown".
std::string organization_of(std::string_view email);

/// Sorted by developer count (descending), then name.
std::vector<OrgShare> org_diversity(const std::vector<AccountRef>& accounts);

/// change_id,invited,unresponded,proportion
void write_violin_csv(std::ostream& out, const UnrespondedSummary& summary);
/// cx,cy,count
void write_hexbin_csv(std::ostream& out, const std::vector<HexBin>& bins);
/// organization,developers,proportion
void write_org_csv(std::ostream& out, const std::vector<OrgShare>& shares);

}  // namespace revsignal::describe
