#pragma once

// Maximum-likelihood logistic regression over restricted-cubic-spline
// expanded predictors.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "revsignal/fit/spline.hpp"
#include "revsignal/frame.hpp"

namespace revsignal::fit {

struct TermSpec {
  std::string variable;
  int requested_dof = 1;      // allocation before knot placement
  int dof = 1;                // columns actually used
  bool binary = false;
  std::vector<double> knots;  // empty for linear terms

  bool operator==(const TermSpec&) const = default;
};

struct ModelSpec {
  std::vector<TermSpec> terms;
  std::string outcome = "responded";
  std::uint64_t seed = 0;
  std::optional<long> budget;

  std::vector<std::string> variables() const;
  /// Sum of per-term columns, excluding the intercept.
  int total_dof() const;
  const TermSpec& term(const std::string& variable) const;
  bool operator==(const ModelSpec&) const = default;
};

/// Places knots for every term on `frame` according to `requested_dof`.
/// Binary variables and d = 1 stay linear; degenerate quantiles fall back.
ModelSpec place_knots(const std::vector<std::pair<std::string, int>>& allocation, const Frame& frame,
                      std::uint64_t seed = 0, std::optional<long> budget = std::nullopt);

/// Same variables and allocations as `spec`, knots re-estimated on `frame`.
ModelSpec reestimate_knots(const ModelSpec& spec, const Frame& frame);

/// Columns of one variable in the design matrix.
struct TermColumns {
  std::string variable;
  std::vector<int> all;
  std::vector<int> nonlinear;
};

/// Intercept column followed by each term's basis columns.
Eigen::MatrixXd design_matrix(const ModelSpec& spec, const Frame& frame);
std::vector<TermColumns> term_columns(const ModelSpec& spec);
/// Expanded design row for one observation given values in spec order.
Eigen::VectorXd design_row(const ModelSpec& spec, const std::vector<double>& values);

struct FitOptions {
  int max_iterations = 25;
  double deviance_tolerance = 1e-8;
  int max_step_halvings = 30;
};

struct LogisticFit {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  double deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Coefficients diverging (max |b| > 15) while deviance approaches 0.
  bool separation = false;
};

/// IRLS (Newton-Raphson) with step halving. Throws NumericError when the
/// outcome has a single class or the information matrix is singular (the
/// message names the offending columns).
LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const FitOptions& options = {},
                         const std::vector<std::string>& column_names = {});

/// Bernoulli log-likelihood and its gradient, for verification.
double log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);
Eigen::VectorXd score(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);

/// Numerically stable logistic function, clamped to the open interval (0, 1).
double logistic(double eta);

struct FittedModel {
  ModelSpec spec;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  double deviance = 0.0;
  long n = 0;
  int iterations = 0;
  bool converged = false;
  bool separation = false;

  std::vector<TermColumns> terms() const { return term_columns(spec); }
};

FittedModel fit_model(const ModelSpec& spec, const Frame& frame, const FitOptions& options = {});

/// Linear predictor for every row of `frame`. Throws InputError when a model
/// variable is missing.
Eigen::VectorXd linear_predictor(const FittedModel& model, const Frame& frame);
std::vector<double> predict(const FittedModel& model, const Frame& frame);
/// Single observation given by variable name.
double predict(const FittedModel& model, const std::map<std::string, double>& values);

struct WaldResult {
  std::string variable;
  double chi2 = 0.0;
  int dof = 0;
  double p = 1.0;
  double proportion = 0.0;
  double nonlinear_chi2 = 0.0;
  int nonlinear_dof = 0;
  double nonlinear_p = 1.0;
  double nonlinear_proportion = 0.0;
};

/// b' V^-1 b over a coefficient block. Throws NumericError when the
/// covariance block is singular.
double wald_quadratic_form(const Eigen::VectorXd& beta, const Eigen::MatrixXd& covariance,
                           const std::vector<int>& columns);

/// Upper tail of the chi-square distribution.
double chi2_upper_tail(double chi2, int dof);

/// Joint Wald test per variable; proportions are relative to the sum of all
/// variables' chi-square values.
std::vector<WaldResult> wald_table(const FittedModel& model);
WaldResult wald_joint(const FittedModel& model, const std::string& variable);

nlohmann::json model_to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& doc);
nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& doc);

/// Hex FNV-1a digest of the canonical spec JSON.
std::string spec_hash(const ModelSpec& spec);

void save_model(const std::string& path, const FittedModel& model);
FittedModel load_model(const std::string& path);

}  // namespace revsignal::fit
