#include "revsignal/fit/spline.hpp"

#include <algorithm>

#include "revsignal/errors.hpp"
#include "revsignal/fit/stats.hpp"

namespace revsignal::fit {

KnotSet::KnotSet(std::vector<double> knots) : knots_(std::move(knots)) {
  if (knots_.size() < 3 || knots_.size() > 6) {
    throw InputError("knot set must have 3 to 6 knots, got " + std::to_string(knots_.size()));
  }
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i - 1] < knots_[i])) throw InputError("knots must be strictly increasing");
  }
}

const std::vector<double>& knot_quantiles(std::size_t k) {
  static const std::vector<double> k3{0.10, 0.50, 0.90};
  static const std::vector<double> k4{0.05, 0.35, 0.65, 0.95};
  static const std::vector<double> k5{0.05, 0.275, 0.50, 0.725, 0.95};
  static const std::vector<double> k6{0.05, 0.23, 0.41, 0.59, 0.77, 0.95};
  switch (k) {
    case 3:
      return k3;
    case 4:
      return k4;
    case 5:
      return k5;
    case 6:
      return k6;
    default:
      throw InputError("no default knot quantiles for " + std::to_string(k) + " knots");
  }
}

std::optional<KnotSet> rcs_knots(std::span<const double> x, int dof) {
  if (x.empty() || dof < 2) return std::nullopt;
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = static_cast<std::size_t>(std::min(dof, 5)) + 1; k >= 3; --k) {
    std::vector<double> knots;
    for (const double p : knot_quantiles(k)) knots.push_back(quantile_sorted(sorted, p));
    if (std::adjacent_find(knots.begin(), knots.end(), [](double a, double b) { return !(a < b); }) ==
        knots.end()) {
      return KnotSet(std::move(knots));
    }
  }
  return std::nullopt;
}

void rcs_basis_into(double x, const KnotSet& knots, std::span<double> out) {
  const std::size_t k = knots.size();
  if (out.size() != k - 1) throw InputError("rcs_basis_into: output size mismatch");
  const double tk = knots[k - 1];
  const double tk1 = knots[k - 2];
  const double norm = (tk - knots[0]) * (tk - knots[0]);
  const auto cube = [](double u) { return u > 0.0 ? u * u * u : 0.0; };
  const double tail_k1 = cube(x - tk1);
  const double tail_k = cube(x - tk);
  out[0] = x;
  for (std::size_t j = 0; j + 2 < k; ++j) {
    const double tj = knots[j];
    out[j + 1] = (cube(x - tj) - tail_k1 * (tk - tj) / (tk - tk1) + tail_k * (tk1 - tj) / (tk - tk1)) / norm;
  }
}

std::vector<double> rcs_basis(double x, const KnotSet& knots) {
  std::vector<double> out(knots.size() - 1);
  rcs_basis_into(x, knots, out);
  return out;
}

}  // namespace revsignal::fit
