#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "revsignal/errors.hpp"
#include "revsignal/fit/logistic.hpp"
#include "revsignal/fit/screening.hpp"
#include "revsignal/random.hpp"

using namespace revsignal;
using namespace revsignal::fit;

namespace {

// 400 rows at x = 0 with P(y) = 0.25 and 400 rows at x = 1 with P(y) = 0.75.
Frame two_by_two() {
  Frame f;
  f.names = {"x"};
  f.columns.resize(1);
  for (int i = 0; i < 800; ++i) {
    const bool one = i >= 400;
    f.columns[0].push_back(one);
    const int slot = i % 400;
    f.outcome.push_back(one ? slot < 300 : slot < 100);
  }
  return f;
}

ModelSpec linear_spec(const std::vector<std::string>& vars) {
  ModelSpec spec;
  for (const auto& v : vars) spec.terms.push_back({v, 1, 1, false, {}});
  return spec;
}

Frame random_frame(std::uint64_t seed, std::size_t n, std::size_t p) {
  Rng rng(seed);
  Frame f;
  for (std::size_t j = 0; j < p; ++j) f.names.push_back("v" + std::to_string(j));
  f.columns.assign(p, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double eta = -0.2;
    for (std::size_t j = 0; j < p; ++j) {
      f.columns[j][i] = rng.normal();
      eta += (j % 2 ? -0.4 : 0.6) * f.columns[j][i];
    }
    eta += 0.3 * f.columns[0][i] * f.columns[0][i];
    f.outcome.push_back(rng.bernoulli(logistic(eta)));
  }
  return f;
}

}  // namespace

TEST_CASE("2x2 fit recovers the closed-form logit") {
  const auto model = fit_model(linear_spec({"x"}), two_by_two());
  CHECK(model.converged);
  CHECK_FALSE(model.separation);
  CHECK(std::abs(model.coefficients[0] - std::log(1.0 / 3.0)) < 1e-6);
  CHECK(std::abs(model.coefficients[1] - std::log(9.0)) < 1e-6);

  // inverse information in closed form from the cell counts
  const double var_slope = 1.0 / 300 + 1.0 / 100 + 1.0 / 100 + 1.0 / 300;
  CHECK(model.covariance(1, 1) == doctest::Approx(var_slope).epsilon(1e-6));
  CHECK(model.covariance(0, 0) == doctest::Approx(1.0 / 100 + 1.0 / 300).epsilon(1e-6));

  const auto w = wald_joint(model, "x");
  const double b = std::log(9.0);
  CHECK(w.chi2 == doctest::Approx(b * b / var_slope).epsilon(1e-6));
  CHECK(w.dof == 1);
  CHECK(w.p < 1e-20);

  CHECK(predict(model, {{"x", 0.0}}) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(predict(model, {{"x", 1.0}}) == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("intercept-only and degenerate outcomes") {
  Frame f;
  f.names = {};
  for (int i = 0; i < 1000; ++i) f.outcome.push_back(i < 300);
  const auto model = fit_model(ModelSpec{}, f);
  CHECK(std::abs(model.coefficients[0] - std::log(0.3 / 0.7)) < 1e-6);
  CHECK(predict(model, std::map<std::string, double>{}) == doctest::Approx(0.3));

  Frame all_ones = two_by_two();
  std::fill(all_ones.outcome.begin(), all_ones.outcome.end(), 1.0);
  CHECK_THROWS_AS(fit_model(linear_spec({"x"}), all_ones), NumericError);
}

TEST_CASE("logistic function") {
  CHECK(logistic(0.0) == 0.5);
  CHECK(logistic(std::log(3.0)) == doctest::Approx(0.75));
  CHECK(logistic(1000.0) < 1.0);
  CHECK(logistic(-1000.0) > 0.0);
}

TEST_CASE("wald quadratic form") {
  Eigen::VectorXd beta(3);
  beta << 0.5, 0.0, 2.0;
  Eigen::MatrixXd v(3, 3);
  v << 1.0, 0.1, 0.0, 0.1, 0.25, 0.05, 0.0, 0.05, 0.5;
  CHECK(wald_quadratic_form(beta, v, {1}) == 0.0);
  CHECK(wald_quadratic_form(beta, v, {2}) == doctest::Approx(8.0));

  // 2x2 inverse by hand: [a b; b d]^-1 = [d -b; -b a] / (ad - b^2)
  const double a = 0.25, bb = 0.05, d = 0.5;
  const double x0 = 0.0, x1 = 2.0;
  const double expected = (d * x0 * x0 - 2 * bb * x0 * x1 + a * x1 * x1) / (a * d - bb * bb);
  CHECK(wald_quadratic_form(beta, v, {1, 2}) == doctest::Approx(expected).epsilon(1e-12));

  CHECK(chi2_upper_tail(0.0, 1) == 1.0);
  CHECK(chi2_upper_tail(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi2_upper_tail(5.991464547107979, 2) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("score matches finite differences of the log-likelihood at the optimum") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Frame f = random_frame(seed, 500, 5);
    auto spec = place_knots({{"v0", 3}, {"v1", 1}, {"v2", 1}, {"v3", 1}, {"v4", 1}}, f, seed);
    REQUIRE(spec.term("v0").knots.size() == 4);
    const auto x = design_matrix(spec, f);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(f.outcome.data(), f.outcome.size());
    const auto fit = fit_logistic(x, y);
    REQUIRE(fit.converged);
    // the optimum itself plus a perturbed point where the gradient is sizeable
    for (int where = 0; where < 2; ++where) {
      Eigen::VectorXd beta = fit.coefficients;
      if (where == 1) beta.array() += 0.1;
      const auto g = score(x, y, beta);
      for (Eigen::Index j = 0; j < beta.size(); ++j) {
        const double h = 1e-6;
        Eigen::VectorXd up = beta, down = beta;
        up[j] += h;
        down[j] -= h;
        const double fd = (log_likelihood(x, y, up) - log_likelihood(x, y, down)) / (2 * h);
        if (where == 0) {
          CHECK(std::abs(g[j]) < 1e-4);
          CHECK(std::abs(fd) < 1e-3);
        } else {
          CHECK(std::abs(fd - g[j]) <= 1e-4 * std::max(1.0, std::abs(g[j])));
        }
      }
    }
  }
}

TEST_CASE("predictions are invariant to affine rescaling of a linear predictor") {
  const Frame f = random_frame(3, 400, 3);
  Frame scaled = f;
  for (double& v : scaled.columns[1]) v = 1000.0 + 25.0 * v;
  const auto spec = linear_spec({"v0", "v1", "v2"});
  const auto a = predict(fit_model(spec, f), f);
  const auto b = predict(fit_model(spec, scaled), scaled);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-8));
}

TEST_CASE("model JSON round trip reproduces predictions bit-exactly") {
  const Frame f = random_frame(11, 300, 3);
  const auto spec = place_knots({{"v0", 4}, {"v1", 1}, {"v2", 2}}, f, 99, 20);
  const auto model = fit_model(spec, f);
  const auto restored = model_from_json(nlohmann::json::parse(model_to_json(model).dump()));
  CHECK(restored.spec == model.spec);
  CHECK(spec_hash(restored.spec) == spec_hash(model.spec));
  CHECK(predict(restored, f) == predict(model, f));
  CHECK(restored.coefficients == model.coefficients);
  CHECK(restored.covariance == model.covariance);
  CHECK(restored.n == 300);

  Frame missing = f.select({"v0", "v1"});
  CHECK_THROWS_AS(predict(model, missing), InputError);
}

TEST_CASE("singular information names the offending columns") {
  Frame f = random_frame(5, 200, 2);
  f.names.push_back("dup");
  f.columns.push_back(f.columns[0]);
  try {
    fit_model(linear_spec({"v0", "v1", "dup"}), f);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dup") != std::string::npos);
  }
}

TEST_CASE("wald table proportions sum to one") {
  const Frame f = random_frame(8, 500, 4);
  const auto model = fit_model(place_knots({{"v0", 3}, {"v1", 1}, {"v2", 1}, {"v3", 1}}, f), f);
  const auto table = wald_table(model);
  REQUIRE(table.size() == 4);
  double total = 0;
  for (const auto& w : table) total += w.proportion;
  CHECK(total == doctest::Approx(1.0));
  CHECK(table[0].dof == 3);
  CHECK(table[0].nonlinear_dof == 2);
  CHECK(table[1].nonlinear_dof == 0);
}

// ---------------------------------------------------------------- screening

TEST_CASE("dof_budget") {
  CHECK(dof_budget(77720, 54411) == 3627);
  CHECK(dof_budget(25905, 3572) == 238);
  CHECK(dof_budget(421927, 44593) == 2972);
  CHECK(dof_budget(155367, 47196) == 3146);
  CHECK(dof_budget(15, 15) == 1);
  CHECK(dof_budget(14, 1000) == 0);
}

TEST_CASE("variable clustering") {
  Rng rng(1);
  Frame f;
  f.names = {"remaining", "concurrent", "noise", "copy"};
  f.columns.assign(4, {});
  for (int i = 0; i < 300; ++i) {
    const double base = rng.normal();
    f.columns[0].push_back(base + 0.2 * rng.normal());
    f.columns[1].push_back(base);
    f.columns[2].push_back(rng.normal());
    f.columns[3].push_back(rng.normal());
    f.outcome.push_back(i % 2);
  }
  const auto r = variable_clustering(f, {"remaining", "concurrent", "noise"}, 0.7, {"concurrent", "remaining"});
  CHECK(r.surviving == std::vector<std::string>{"concurrent", "noise"});
  REQUIRE(r.clusters.size() == 1);
  CHECK(r.clusters[0].kept == "concurrent");

  const auto none = variable_clustering(f, {"noise", "copy"});
  CHECK(none.surviving == std::vector<std::string>{"noise", "copy"});
  CHECK(none.clusters.empty());

  f.columns[3] = f.columns[2];
  const auto dup = variable_clustering(f, {"noise", "copy"});
  CHECK(dup.surviving.size() == 1);
}

TEST_CASE("redundancy filter") {
  Rng rng(2);
  Frame f;
  f.names = {"x", "y", "z", "w"};
  f.columns.assign(4, {});
  for (int i = 0; i < 200; ++i) {
    const double x = rng.normal(), y = rng.normal();
    f.columns[0].push_back(x);
    f.columns[1].push_back(y);
    f.columns[2].push_back(x + y);
    f.columns[3].push_back(rng.normal());
    f.outcome.push_back(i % 2);
  }
  const auto r = redundancy_filter(f, {"x", "y", "z", "w"});
  REQUIRE(r.dropped.size() == 1);
  CHECK(r.dropped[0].r2 == doctest::Approx(1.0));
  CHECK(r.surviving.size() == 3);
  CHECK(std::find(r.surviving.begin(), r.surviving.end(), "w") != r.surviving.end());

  const auto clean = redundancy_filter(f, {"x", "y", "w"});
  CHECK(clean.dropped.empty());

  const std::vector<double> flat(10, 4.0), other{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(ols_r2(flat, {other}) == 1.0);
}

TEST_CASE("spearman_multiple_rho2") {
  Rng rng(3);
  std::vector<double> x(1000), step(1000), noise(1000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  const double med = (sorted[499] + sorted[500]) / 2;
  for (std::size_t i = 0; i < x.size(); ++i) {
    step[i] = x[i] > med;
    noise[i] = rng.normal();
  }
  // oracle: least squares of y on (r, r^2) through the normal equations
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    r[i] = static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), x[i]) - sorted.begin()) + 1;
  }
  Eigen::MatrixXd a(x.size(), 3);
  Eigen::VectorXd y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    a(i, 0) = 1;
    a(i, 1) = r[i];
    a(i, 2) = r[i] * r[i];
    y[i] = step[i];
  }
  const Eigen::VectorXd coef = (a.transpose() * a).ldlt().solve(a.transpose() * y);
  const Eigen::VectorXd resid = y - a * coef;
  const double r2 = 1 - resid.squaredNorm() / (y.array() - y.mean()).square().sum();
  const double got = spearman_multiple_rho2(x, step);
  CHECK(got == doctest::Approx(r2).epsilon(1e-6));
  CHECK(got > spearman_multiple_rho2(noise, step));

  std::vector<double> big(10000), coin(10000);
  Rng rng2(4);
  for (std::size_t i = 0; i < big.size(); ++i) {
    big[i] = rng2.normal();
    coin[i] = rng2.bernoulli(0.5);
  }
  CHECK(spearman_multiple_rho2(big, coin) < 0.01);
  CHECK(spearman_multiple_rho2(std::vector<double>(50, 1.0), std::vector<double>(coin.begin(), coin.begin() + 50)) ==
        0.0);
}

TEST_CASE("allocate_dof") {
  const std::vector<std::pair<std::string, double>> profile = {
      {"top", 0.30}, {"m1", 0.12}, {"m2", 0.11}, {"m3", 0.10}, {"m4", 0.095}, {"s1", 0.02}, {"s2", 0.01}, {"s3", 0.0}};
  const auto alloc = allocate_dof(profile, 100, {});
  const std::vector<int> expected{3, 3, 3, 3, 3, 1, 1, 1};
  for (std::size_t i = 0; i < alloc.size(); ++i) CHECK(alloc[i].second == expected[i]);

  const auto equal = allocate_dof({{"a", 0.2}, {"b", 0.2}, {"c", 0.2}}, 9, {});
  for (const auto& [name, d] : equal) CHECK(d == 3);

  const auto binary = allocate_dof({{"core", 0.5}, {"b", 0.4}}, 10, {"core"});
  CHECK(binary[0].second == 1);
  CHECK(binary[1].second == 3);

  // budget 7 fits two splined variables plus one linear
  const auto tight = allocate_dof({{"a", 0.5}, {"b", 0.4}, {"c", 0.3}}, 7, {});
  int total = 0;
  for (const auto& [name, d] : tight) total += d;
  CHECK(total <= 7);
  CHECK(tight[2].second == 1);
  CHECK(tight[0].second == 3);

  CHECK_THROWS_AS(allocate_dof({{"a", 0.5}, {"b", 0.4}}, 1, {}), NumericError);
}
