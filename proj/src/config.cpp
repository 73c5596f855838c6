#include "bsp/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <string_view>

#include "bsp/error.hpp"

namespace bsp {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::Config, "config: " + what); }

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) fail("'" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail("unknown key '" + key + "' in " + where);
    }
  }
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_number()) fail(where + "." + key + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(where + "." + key + " must be finite");
  return d;
}

double number_or(const json& obj, const std::string& key, const std::string& where, double fallback) {
  return obj.contains(key) ? get_number(obj, key, where) : fallback;
}

std::uint64_t get_count(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) fail(where + "." + key + " must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_string()) fail(where + "." + key + " must be a string");
  return v.get<std::string>();
}

VectorXd get_vector(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_array()) fail(where + "." + key + " must be an array of numbers");
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(where + "." + key + " must be an array of numbers");
    out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    if (!std::isfinite(out(static_cast<Eigen::Index>(i)))) fail(where + "." + key + " has a non-finite entry");
  }
  return out;
}

MatrixXd get_matrix(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_array() || v.empty()) fail(where + "." + key + " must be a nonempty array of rows");
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_array() || v[i].size() != cols) fail(where + "." + key + " rows must have equal length");
    for (std::size_t j = 0; j < cols; ++j) {
      if (!v[i][j].is_number()) fail(where + "." + key + " must contain numbers");
      const double d = v[i][j].get<double>();
      if (!std::isfinite(d)) fail(where + "." + key + " has a non-finite entry");
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
    }
  }
  return out;
}

MomentConfig parse_moments(const json& obj, const std::string& where) {
  MomentConfig m;
  const std::string src = get_string(obj, "moments", where);
  if (src == "closed_form") {
    m.source = MomentSource::ClosedForm;
  } else if (src == "monte_carlo") {
    m.source = MomentSource::MonteCarlo;
  } else {
    fail(where + ".moments must be 'closed_form' or 'monte_carlo'");
  }
  if (obj.contains("samples")) {
    m.samples = get_count(obj, "samples", where);
    if (m.samples == 0) fail(where + ".samples must be positive");
  }
  return m;
}

DatasetConfig parse_dataset(const json& j) {
  check_keys(j, "dataset", {"path", "memory", "output_lags", "input_lags"});
  DatasetConfig d;
  d.path = get_string(j, "path", "dataset");
  if (j.contains("memory")) {
    if (j.contains("output_lags") || j.contains("input_lags")) fail("dataset: give either memory or explicit lags");
    const auto m = static_cast<Eigen::Index>(get_count(j, "memory", "dataset"));
    if (m < 1) fail("dataset.memory must be >= 1");
    d.layout = {m, m};
  } else {
    if (j.contains("output_lags")) d.layout.output_lags = static_cast<Eigen::Index>(get_count(j, "output_lags", "dataset"));
    if (j.contains("input_lags")) d.layout.input_lags = static_cast<Eigen::Index>(get_count(j, "input_lags", "dataset"));
  }
  if (d.layout.dimension() < 1) fail("dataset: layout needs at least one lag");
  return d;
}

KernelConfig parse_kernel(const json& j) {
  check_keys(j, "kernel", {"family", "eta", "degree", "ard_weights", "structure_matrix", "tc"});
  KernelConfig k;
  const std::string family = get_string(j, "family", "kernel");
  if (family == "spline") {
    k.family = KernelFamily::SplineFirstOrder;
  } else if (family == "gaussian") {
    k.family = KernelFamily::Gaussian;
    k.eta = number_or(j, "eta", "kernel", 1.0);
  } else if (family == "gaussian_ard") {
    k.family = KernelFamily::GaussianArd;
    if (!j.contains("ard_weights")) fail("kernel: gaussian_ard requires ard_weights");
    k.ard_weights = get_vector(j, "ard_weights", "kernel");
  } else if (family == "polynomial") {
    k.family = KernelFamily::Polynomial;
    k.degree = static_cast<int>(j.contains("degree") ? get_count(j, "degree", "kernel") : 2);
  } else if (family == "linear") {
    k.family = KernelFamily::Linear;
    if (j.contains("structure_matrix") == j.contains("tc")) {
      fail("kernel: linear requires exactly one of structure_matrix or tc");
    }
    if (j.contains("structure_matrix")) k.structure_matrix = get_matrix(j, "structure_matrix", "kernel");
    if (j.contains("tc")) {
      const json& tc = j.at("tc");
      check_keys(tc, "kernel.tc", {"alpha_y", "alpha_u"});
      k.tc = TcDecay<double>{get_number(tc, "alpha_y", "kernel.tc"), get_number(tc, "alpha_u", "kernel.tc")};
    }
  } else {
    fail("kernel.family must be one of spline, gaussian, gaussian_ard, polynomial, linear");
  }
  return k;
}

TuningConfig parse_tuning(const json& j) {
  check_keys(j, "tuning", {"mode", "lambda", "sigma2", "alpha", "scale"});
  TuningConfig t;
  const std::string mode = get_string(j, "mode", "tuning");
  if (mode == "fixed") {
    t.mode = TuningMode::Fixed;
    if (!j.contains("lambda") || !j.contains("sigma2")) fail("tuning: fixed mode requires lambda and sigma2");
    t.lambda = get_number(j, "lambda", "tuning");
    t.sigma2 = get_number(j, "sigma2", "tuning");
  } else if (mode == "empirical_bayes") {
    t.mode = TuningMode::EmpiricalBayes;
  } else if (mode == "schedule") {
    t.mode = TuningMode::Schedule;
    t.alpha = number_or(j, "alpha", "tuning", 0.25);
    t.scale = number_or(j, "scale", "tuning", 1.0);
  } else {
    fail("tuning.mode must be fixed, empirical_bayes or schedule");
  }
  return t;
}

MpcProblem<double> parse_problem(const json& j) {
  check_keys(j, "problem", {"q", "r", "y_ref", "u_ref", "y_past", "u_past"});
  if (!j.contains("y_ref")) fail("problem.y_ref is required");
  VectorXd y_ref = get_vector(j, "y_ref", "problem");
  const Eigen::Index t = y_ref.size();
  VectorXd q = j.contains("q") ? get_vector(j, "q", "problem") : VectorXd::Ones(t);
  VectorXd r = j.contains("r") ? get_vector(j, "r", "problem") : VectorXd::Zero(t);
  VectorXd u_ref = j.contains("u_ref") ? get_vector(j, "u_ref", "problem") : VectorXd::Zero(t);
  VectorXd y_past = j.contains("y_past") ? get_vector(j, "y_past", "problem") : VectorXd();
  VectorXd u_past = j.contains("u_past") ? get_vector(j, "u_past", "problem") : VectorXd();
  try {
    return MpcProblem<double>(std::move(q), std::move(r), std::move(y_ref), std::move(u_ref), std::move(y_past),
                              std::move(u_past));
  } catch (const Error& e) {
    fail(std::string("problem: ") + e.what());
  }
}

ThetaBelief<double> parse_belief(const json& j) {
  check_keys(j, "belief", {"mean", "covariance"});
  if (!j.contains("mean") || !j.contains("covariance")) fail("belief requires mean and covariance");
  try {
    return ThetaBelief<double>(get_vector(j, "mean", "belief"), get_matrix(j, "covariance", "belief"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    fail(std::string("belief: ") + e.what());
  }
}

}  // namespace

RunConfig parse_config(const json& doc) {
  check_keys(doc, "the top level",
             {"seed", "output", "threads", "dataset", "kernel", "tuning", "problem", "belief", "experiment",
              "control"});
  RunConfig cfg;
  if (doc.contains("seed")) cfg.seed = get_count(doc, "seed", "config");
  if (doc.contains("output")) cfg.output = get_string(doc, "output", "config");
  if (doc.contains("threads")) {
    cfg.threads = static_cast<unsigned>(get_count(doc, "threads", "config"));
    if (cfg.threads == 0) fail("threads must be positive");
  }
  if (doc.contains("dataset")) cfg.dataset = parse_dataset(doc.at("dataset"));
  if (doc.contains("kernel")) cfg.kernel = parse_kernel(doc.at("kernel"));
  if (doc.contains("tuning")) cfg.tuning = parse_tuning(doc.at("tuning"));
  if (doc.contains("problem")) cfg.problem = parse_problem(doc.at("problem"));
  if (doc.contains("belief")) cfg.belief = parse_belief(doc.at("belief"));
  if (doc.contains("experiment")) {
    const json& e = doc.at("experiment");
    check_keys(e, "experiment", {"runs", "moments", "samples"});
    if (e.contains("runs")) {
      cfg.runs = get_count(e, "runs", "experiment");
      if (cfg.runs == 0) fail("experiment.runs must be positive");
    }
    if (e.contains("moments")) cfg.experiment_moments = parse_moments(e, "experiment");
    else if (e.contains("samples")) fail("experiment.samples requires moments = monte_carlo");
  }
  if (doc.contains("control")) {
    const json& c = doc.at("control");
    check_keys(c, "control",
               {"method", "moments", "samples", "u0", "initial_step", "step_tolerance", "max_evaluations"});
    if (c.contains("method")) {
      const std::string m = get_string(c, "method", "control");
      if (m == "both") cfg.control.method = ControlMode::Both;
      else if (m == "bsp") cfg.control.method = ControlMode::Bsp;
      else if (m == "nominal") cfg.control.method = ControlMode::Nominal;
      else if (m == "narx" || m == "nfir") cfg.control.method = ControlMode::Narx;
      else fail("control.method must be both, bsp, nominal, narx or nfir");
    }
    if (c.contains("moments")) cfg.control.moments = parse_moments(c, "control");
    else if (c.contains("samples")) fail("control.samples requires moments = monte_carlo");
    if (c.contains("u0")) cfg.control.u0 = get_vector(c, "u0", "control");
    cfg.control.search.initial_step = number_or(c, "initial_step", "control", 0.0);
    cfg.control.search.step_tolerance = number_or(c, "step_tolerance", "control", 1e-6);
    if (cfg.control.search.step_tolerance <= 0.0) fail("control.step_tolerance must be positive");
    if (c.contains("max_evaluations")) {
      cfg.control.search.max_evaluations = static_cast<int>(get_count(c, "max_evaluations", "control"));
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Config, "config: '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

KernelSpec<double> make_kernel(const KernelConfig& cfg, const LocationLayout& layout) {
  switch (cfg.family) {
    case KernelFamily::SplineFirstOrder: return KernelSpec<double>::spline();
    case KernelFamily::Gaussian: return KernelSpec<double>::gaussian(cfg.eta);
    case KernelFamily::GaussianArd: return KernelSpec<double>::gaussian_ard(cfg.ard_weights);
    case KernelFamily::Polynomial: return KernelSpec<double>::polynomial(cfg.degree);
    case KernelFamily::Linear:
      if (cfg.tc) {
        return KernelSpec<double>::linear_tc(cfg.tc->alpha_y, layout.output_lags, cfg.tc->alpha_u, layout.input_lags);
      }
      return KernelSpec<double>::linear(cfg.structure_matrix);
  }
  throw Error(ErrorCode::Config, "config: unknown kernel family");
}

}  // namespace bsp
