#pragma once

#include <optional>
#include <span>
#include <vector>

namespace revsignal::fit {

/// 1-based ranks with ties assigned their average rank.
std::vector<double> midranks(std::span<const double> values);

/// Pearson correlation; nullopt when either side has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of midranks. nullopt when a rank vector is constant.
/// Throws InputError when sizes differ or fewer than 2 observations.
std::optional<double> spearman_rho(std::span<const double> x, std::span<const double> y);

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::span<const double> values, double p);
double median(std::span<const double> values);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double stddev(std::span<const double> values);

}  // namespace revsignal::fit
