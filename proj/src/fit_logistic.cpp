#include "revsignal/fit/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>

#include "revsignal/errors.hpp"

namespace revsignal::fit {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

// log(1 + exp(u)) without overflow.
double softplus(double u) { return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

double raw_logistic(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double bernoulli_weight(double eta) {
  const double e = std::exp(-std::abs(eta));
  return e / ((1.0 + e) * (1.0 + e));
}

double deviance_of(const VectorXd& eta, const VectorXd& y) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    dev += y[i] * softplus(-eta[i]) + (1.0 - y[i]) * softplus(eta[i]);
  }
  return 2.0 * dev;
}

std::string column_label(const std::vector<std::string>& names, Eigen::Index j) {
  if (j < static_cast<Eigen::Index>(names.size())) return names[static_cast<std::size_t>(j)];
  return "column " + std::to_string(j);
}

}  // namespace

double logistic(double eta) {
  constexpr double kLow = std::numeric_limits<double>::min();
  constexpr double kHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(raw_logistic(eta), kLow, kHigh);
}

std::vector<std::string> ModelSpec::variables() const {
  std::vector<std::string> out;
  for (const auto& t : terms) out.push_back(t.variable);
  return out;
}

int ModelSpec::total_dof() const {
  int total = 0;
  for (const auto& t : terms) total += t.dof;
  return total;
}

const TermSpec& ModelSpec::term(const std::string& variable) const {
  for (const auto& t : terms) {
    if (t.variable == variable) return t;
  }
  throw InputError("variable '" + variable + "' is not in the model");
}

namespace {

TermSpec make_term(const std::string& variable, int requested, const Frame& frame) {
  TermSpec term;
  term.variable = variable;
  term.requested_dof = requested;
  const auto& column = frame.column(variable);
  term.binary = is_binary(column);
  if (requested >= 2 && !term.binary) {
    if (auto knots = rcs_knots(column, requested)) {
      term.knots = knots->values();
      term.dof = static_cast<int>(term.knots.size()) - 1;
    }
  }
  return term;
}

}  // namespace

ModelSpec place_knots(const std::vector<std::pair<std::string, int>>& allocation, const Frame& frame,
                      std::uint64_t seed, std::optional<long> budget) {
  ModelSpec spec;
  spec.seed = seed;
  spec.budget = budget;
  for (const auto& [variable, dof] : allocation) spec.terms.push_back(make_term(variable, dof, frame));
  return spec;
}

ModelSpec reestimate_knots(const ModelSpec& spec, const Frame& frame) {
  ModelSpec out = spec;
  out.terms.clear();
  for (const auto& t : spec.terms) out.terms.push_back(make_term(t.variable, t.requested_dof, frame));
  return out;
}

std::vector<TermColumns> term_columns(const ModelSpec& spec) {
  std::vector<TermColumns> out;
  int next = 1;
  for (const auto& t : spec.terms) {
    TermColumns tc;
    tc.variable = t.variable;
    for (int j = 0; j < t.dof; ++j) {
      tc.all.push_back(next + j);
      if (j > 0) tc.nonlinear.push_back(next + j);
    }
    next += t.dof;
    out.push_back(std::move(tc));
  }
  return out;
}

MatrixXd design_matrix(const ModelSpec& spec, const Frame& frame) {
  const auto n = static_cast<Eigen::Index>(frame.rows());
  MatrixXd x(n, 1 + spec.total_dof());
  x.col(0).setOnes();
  Eigen::Index col = 1;
  std::vector<double> buffer;
  for (const auto& t : spec.terms) {
    const auto& values = frame.column(t.variable);
    if (t.knots.empty()) {
      for (Eigen::Index i = 0; i < n; ++i) x(i, col) = values[static_cast<std::size_t>(i)];
    } else {
      const KnotSet knots(t.knots);
      buffer.resize(knots.size() - 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        rcs_basis_into(values[static_cast<std::size_t>(i)], knots, buffer);
        for (std::size_t j = 0; j < buffer.size(); ++j) x(i, col + static_cast<Eigen::Index>(j)) = buffer[j];
      }
    }
    col += t.dof;
  }
  return x;
}

VectorXd design_row(const ModelSpec& spec, const std::vector<double>& values) {
  if (values.size() != spec.terms.size()) throw InputError("design_row: value count mismatch");
  VectorXd row(1 + spec.total_dof());
  row[0] = 1.0;
  Eigen::Index col = 1;
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    const auto& t = spec.terms[i];
    if (t.knots.empty()) {
      row[col] = values[i];
    } else {
      const auto basis = rcs_basis(values[i], KnotSet(t.knots));
      for (std::size_t j = 0; j < basis.size(); ++j) row[col + static_cast<Eigen::Index>(j)] = basis[j];
    }
    col += t.dof;
  }
  return row;
}

double log_likelihood(const MatrixXd& design, const VectorXd& y, const VectorXd& beta) {
  return -0.5 * deviance_of(design * beta, y);
}

VectorXd score(const MatrixXd& design, const VectorXd& y, const VectorXd& beta) {
  const VectorXd eta = design * beta;
  VectorXd residual(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) residual[i] = y[i] - raw_logistic(eta[i]);
  return design.transpose() * residual;
}

LogisticFit fit_logistic(const MatrixXd& design, const VectorXd& y, const FitOptions& options,
                         const std::vector<std::string>& column_names) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n) throw InputError("fit_logistic: outcome length mismatch");
  if (n <= p) throw NumericError("fit_logistic: need more rows than columns");
  const double positives = y.sum();
  if (positives <= 0.0 || positives >= static_cast<double>(n)) {
    throw NumericError("fit_logistic: outcome has a single class");
  }

  // Work on unit-RMS columns; transform back at the end.
  VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double rms = design.col(j).norm() / std::sqrt(static_cast<double>(n));
    scale[j] = rms > 0.0 ? rms : 1.0;
  }
  const MatrixXd xs = design * scale.cwiseInverse().asDiagonal();

  Eigen::ColPivHouseholderQR<MatrixXd> qr(xs);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::string offending;
    for (Eigen::Index k = qr.rank(); k < p; ++k) {
      if (!offending.empty()) offending += ", ";
      offending += column_label(column_names, qr.colsPermutation().indices()[k]);
    }
    throw NumericError("singular information matrix; linearly dependent columns: " + offending);
  }

  VectorXd beta = VectorXd::Zero(p);
  VectorXd eta = VectorXd::Zero(n);
  double deviance = deviance_of(eta, y);
  LogisticFit result;

  const auto information = [&](const VectorXd& lp) {
    VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = bernoulli_weight(lp[i]);
    return MatrixXd(xs.transpose() * w.asDiagonal() * xs);
  };

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    result.iterations = iter;
    VectorXd residual(n);
    for (Eigen::Index i = 0; i < n; ++i) residual[i] = y[i] - raw_logistic(eta[i]);
    const MatrixXd info = information(eta);
    const Eigen::LDLT<MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) break;
    const VectorXd step = ldlt.solve(xs.transpose() * residual);
    if (!step.allFinite()) break;

    double factor = 1.0;
    VectorXd candidate = beta + step;
    VectorXd candidate_eta = xs * candidate;
    double candidate_dev = deviance_of(candidate_eta, y);
    for (int h = 0; h < options.max_step_halvings && !(candidate_dev <= deviance); ++h) {
      factor /= 2.0;
      candidate = beta + factor * step;
      candidate_eta = xs * candidate;
      candidate_dev = deviance_of(candidate_eta, y);
    }
    if (!(candidate_dev <= deviance)) {
      result.converged = true;  // no descent direction left
      break;
    }
    const double change = deviance - candidate_dev;
    beta = std::move(candidate);
    eta = std::move(candidate_eta);
    deviance = candidate_dev;
    if (std::abs(change) < options.deviance_tolerance) {
      result.converged = true;
      break;
    }
  }

  const MatrixXd info = information(eta);
  const Eigen::LDLT<MatrixXd> ldlt(info);
  MatrixXd cov_scaled = ldlt.solve(MatrixXd::Identity(p, p));
  cov_scaled = (cov_scaled + cov_scaled.transpose()) / 2.0;

  const VectorXd inv_scale = scale.cwiseInverse();
  result.coefficients = beta.cwiseProduct(inv_scale);
  result.covariance = inv_scale.asDiagonal() * cov_scaled * inv_scale.asDiagonal();
  result.deviance = deviance;
  result.separation = result.coefficients.cwiseAbs().maxCoeff() > 15.0 && deviance < 1e-3 * static_cast<double>(n);
  return result;
}

FittedModel fit_model(const ModelSpec& spec, const Frame& frame, const FitOptions& options) {
  const MatrixXd x = design_matrix(spec, frame);
  const VectorXd y = Eigen::Map<const VectorXd>(frame.outcome.data(), static_cast<Eigen::Index>(frame.outcome.size()));
  std::vector<std::string> names{"(intercept)"};
  for (const auto& t : spec.terms) {
    for (int j = 0; j < t.dof; ++j) names.push_back(t.variable + std::string(static_cast<std::size_t>(j), '\''));
  }
  LogisticFit fit = fit_logistic(x, y, options, names);
  FittedModel model;
  model.spec = spec;
  model.coefficients = std::move(fit.coefficients);
  model.covariance = std::move(fit.covariance);
  model.deviance = fit.deviance;
  model.n = static_cast<long>(frame.rows());
  model.iterations = fit.iterations;
  model.converged = fit.converged;
  model.separation = fit.separation;
  return model;
}

VectorXd linear_predictor(const FittedModel& model, const Frame& frame) {
  return design_matrix(model.spec, frame) * model.coefficients;
}

std::vector<double> predict(const FittedModel& model, const Frame& frame) {
  const VectorXd eta = linear_predictor(model, frame);
  std::vector<double> out(static_cast<std::size_t>(eta.size()));
  for (Eigen::Index i = 0; i < eta.size(); ++i) out[static_cast<std::size_t>(i)] = logistic(eta[i]);
  return out;
}

double predict(const FittedModel& model, const std::map<std::string, double>& values) {
  std::vector<double> ordered;
  for (const auto& t : model.spec.terms) {
    const auto it = values.find(t.variable);
    if (it == values.end()) throw InputError("missing value for model variable '" + t.variable + "'");
    ordered.push_back(it->second);
  }
  return logistic(design_row(model.spec, ordered).dot(model.coefficients));
}

double wald_quadratic_form(const VectorXd& beta, const MatrixXd& covariance, const std::vector<int>& columns) {
  const auto k = static_cast<Eigen::Index>(columns.size());
  VectorXd b(k);
  MatrixXd v(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    b[i] = beta[columns[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < k; ++j) {
      v(i, j) = covariance(columns[static_cast<std::size_t>(i)], columns[static_cast<std::size_t>(j)]);
    }
  }
  if (b.isZero(0.0)) return 0.0;
  const Eigen::LDLT<MatrixXd> ldlt(v);
  const double largest = v.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(largest > 0.0) ||
      ldlt.vectorD().minCoeff() <= largest * 1e-14) {
    throw NumericError("singular covariance block in Wald test");
  }
  return b.dot(ldlt.solve(b));
}

double chi2_upper_tail(double chi2, int dof) {
  if (dof <= 0 || !(chi2 > 0.0)) return 1.0;
  if (std::isinf(chi2)) return 0.0;
  const boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

std::vector<WaldResult> wald_table(const FittedModel& model) {
  std::vector<WaldResult> out;
  double total = 0.0;
  for (const auto& tc : model.terms()) {
    WaldResult r;
    r.variable = tc.variable;
    r.dof = static_cast<int>(tc.all.size());
    r.chi2 = wald_quadratic_form(model.coefficients, model.covariance, tc.all);
    r.p = chi2_upper_tail(r.chi2, r.dof);
    if (!tc.nonlinear.empty()) {
      r.nonlinear_dof = static_cast<int>(tc.nonlinear.size());
      r.nonlinear_chi2 = wald_quadratic_form(model.coefficients, model.covariance, tc.nonlinear);
      r.nonlinear_p = chi2_upper_tail(r.nonlinear_chi2, r.nonlinear_dof);
    }
    total += r.chi2;
    out.push_back(std::move(r));
  }
  for (auto& r : out) {
    r.proportion = total > 0.0 ? r.chi2 / total : 0.0;
    r.nonlinear_proportion = total > 0.0 ? r.nonlinear_chi2 / total : 0.0;
  }
  return out;
}

WaldResult wald_joint(const FittedModel& model, const std::string& variable) {
  for (auto& r : wald_table(model)) {
    if (r.variable == variable) return r;
  }
  throw InputError("variable '" + variable + "' is not in the model");
}

json spec_to_json(const ModelSpec& spec) {
  json terms = json::array();
  for (const auto& t : spec.terms) {
    terms.push_back({{"variable", t.variable},
                     {"requested_dof", t.requested_dof},
                     {"dof", t.dof},
                     {"binary", t.binary},
                     {"knots", t.knots}});
  }
  json doc = {{"outcome", spec.outcome}, {"seed", spec.seed}, {"terms", std::move(terms)}};
  doc["budget"] = spec.budget ? json(*spec.budget) : json(nullptr);
  return doc;
}

ModelSpec spec_from_json(const json& doc) {
  ModelSpec spec;
  spec.outcome = doc.value("outcome", std::string("responded"));
  spec.seed = doc.value("seed", std::uint64_t{0});
  if (doc.contains("budget") && !doc["budget"].is_null()) spec.budget = doc["budget"].get<long>();
  for (const auto& t : doc.at("terms")) {
    TermSpec term;
    term.variable = t.at("variable").get<std::string>();
    term.requested_dof = t.value("requested_dof", 1);
    term.dof = t.at("dof").get<int>();
    term.binary = t.value("binary", false);
    term.knots = t.value("knots", std::vector<double>{});
    if (!term.knots.empty()) {
      KnotSet check(term.knots);
      if (term.dof != static_cast<int>(check.size()) - 1) throw InputError("spec: dof does not match knots");
    } else if (term.dof != 1) {
      throw InputError("spec: linear term must have dof 1");
    }
    spec.terms.push_back(std::move(term));
  }
  return spec;
}

std::string spec_hash(const ModelSpec& spec) {
  const std::string text = spec_to_json(spec).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json model_to_json(const FittedModel& model) {
  json knots = json::object();
  for (const auto& t : model.spec.terms) knots[t.variable] = t.knots;
  std::vector<double> coefficients(model.coefficients.data(), model.coefficients.data() + model.coefficients.size());
  std::vector<double> covariance;
  covariance.reserve(static_cast<std::size_t>(model.covariance.size()));
  for (Eigen::Index i = 0; i < model.covariance.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.covariance.cols(); ++j) covariance.push_back(model.covariance(i, j));
  }
  return {{"format_version", 1},
          {"spec", spec_to_json(model.spec)},
          {"variables", model.spec.variables()},
          {"knots", std::move(knots)},
          {"coefficients", std::move(coefficients)},
          {"covariance", std::move(covariance)},
          {"deviance", model.deviance},
          {"n", model.n},
          {"seed", model.spec.seed},
          {"iterations", model.iterations},
          {"converged", model.converged},
          {"separation", model.separation}};
}

FittedModel model_from_json(const json& doc) {
  if (doc.value("format_version", 0) != 1) throw InputError("unsupported model format_version");
  FittedModel model;
  model.spec = spec_from_json(doc.at("spec"));
  const auto coefficients = doc.at("coefficients").get<std::vector<double>>();
  const auto p = static_cast<Eigen::Index>(coefficients.size());
  if (p != 1 + model.spec.total_dof()) throw InputError("model: coefficient count does not match spec");
  model.coefficients = Eigen::Map<const VectorXd>(coefficients.data(), p);
  const auto covariance = doc.at("covariance").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(covariance.size()) != p * p) throw InputError("model: covariance size mismatch");
  model.covariance.resize(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) model.covariance(i, j) = covariance[static_cast<std::size_t>(i * p + j)];
  }
  model.deviance = doc.at("deviance").get<double>();
  model.n = doc.at("n").get<long>();
  model.iterations = doc.value("iterations", 0);
  model.converged = doc.value("converged", true);
  model.separation = doc.value("separation", false);
  return model;
}

void save_model(const std::string& path, const FittedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << model_to_json(model).dump(2) << '\n';
}

FittedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model artifact '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("model artifact '" + path + "': " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace revsignal::fit
