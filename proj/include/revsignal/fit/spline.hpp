#pragma once

// Restricted (natural) cubic spline basis: cubic between knots, linear
// beyond the boundary knots. k knots give k - 1 columns, the first being x.

#include <optional>
#include <span>
#include <vector>

namespace revsignal::fit {

/// Strictly increasing knot locations, 3 to 6 of them.
class KnotSet {
 public:
  /// Throws InputError unless 3 <= size <= 6 and strictly increasing.
  explicit KnotSet(std::vector<double> knots);

  std::size_t size() const { return knots_.size(); }
  const std::vector<double>& values() const { return knots_; }
  double operator[](std::size_t i) const { return knots_[i]; }

 private:
  std::vector<double> knots_;
};

/// Default knot quantiles for k knots (k = 3..6).
const std::vector<double>& knot_quantiles(std::size_t k);

/// Places d + 1 knots at the default quantiles of x (d is capped at 5). When
/// quantiles coincide, retries with one knot fewer; returns nullopt when not
/// even 3 distinct knots are available, meaning the variable stays linear.
std::optional<KnotSet> rcs_knots(std::span<const double> x, int dof);

/// Basis row for one value: [x, s_1(x), ..., s_{k-2}(x)] where
/// s_j(x) = [(x - t_j)+^3 - (x - t_{k-1})+^3 (t_k - t_j)/(t_k - t_{k-1})
///           + (x - t_k)+^3 (t_{k-1} - t_j)/(t_k - t_{k-1})] / (t_k - t_1)^2.
std::vector<double> rcs_basis(double x, const KnotSet& knots);

/// Writes the k - 1 basis values into `out` (size must match).
void rcs_basis_into(double x, const KnotSet& knots, std::span<double> out);

}  // namespace revsignal::fit
