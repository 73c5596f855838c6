#include "bsp/cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsp/error.hpp"
#include "bsp/experiment.hpp"
#include "bsp/io.hpp"
#include "bsp/mpc_control.hpp"

namespace bsp {

using nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> runs;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
};

RunConfig load_with_overrides(const Overrides& o) {
  RunConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed = o.seed;
  if (o.runs) {
    if (*o.runs == 0) throw Error(ErrorCode::Config, "--runs must be positive");
    cfg.runs = *o.runs;
  }
  if (o.out) cfg.output = o.out;
  if (o.threads) {
    if (*o.threads == 0) throw Error(ErrorCode::Config, "--threads must be positive");
    cfg.threads = *o.threads;
  }
  return cfg;
}

void emit(const RunConfig& cfg, const json& doc, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (cfg.output) {
    write_text_file(*cfg.output, text);
  } else {
    out << text;
  }
}

TuningResult<double> fixed_tuning(const MatrixXd& gram, const VectorXd& y, double lambda, double sigma2) {
  TuningResult<double> r;
  r.lambda = lambda;
  r.sigma2 = sigma2;
  r.gamma = sigma2 / lambda;
  r.dof = degrees_of_freedom(gram, r.gamma);
  r.wsrr = wsrr(gram, r.gamma, y);
  r.wssu = wssu(gram, r.gamma, y);
  r.residual = r.dof > 0.0 ? std::abs(lambda - r.wssu / r.dof) / (r.wssu / r.dof) : 0.0;
  r.diagnostics = "fixed hyperparameters; residual reported for reference only";
  return r;
}

json kernel_json(const KernelSpec<double>& k) {
  json j{{"family", std::string(to_string(k.family()))}};
  switch (k.family()) {
    case KernelFamily::Gaussian: j["eta"] = k.eta(); break;
    case KernelFamily::GaussianArd: j["ard_weights"] = vector_to_json(k.ard_weights()); break;
    case KernelFamily::Polynomial: j["degree"] = k.degree(); break;
    case KernelFamily::Linear: j["structure_matrix"] = matrix_to_json(k.structure_matrix()); break;
    case KernelFamily::SplineFirstOrder: break;
  }
  return j;
}

ThetaBelief<double> require_belief(const RunConfig& cfg, const char* who) {
  if (cfg.belief) return *cfg.belief;
  if (cfg.dataset && cfg.kernel && cfg.kernel->family == KernelFamily::Linear) {
    auto model = identify_model(cfg);
    if (model.belief) return *model.belief;
    throw Error(ErrorCode::Config, std::string(who) + ": identified linear model needs equal input and output memory");
  }
  throw Error(ErrorCode::Config,
              std::string(who) + ": a 'belief' section, or a dataset with a linear kernel, is required");
}

const MpcProblem<double>& require_problem(const RunConfig& cfg, const char* who) {
  if (!cfg.problem) throw Error(ErrorCode::Config, std::string(who) + ": a 'problem' section is required");
  return *cfg.problem;
}

PredictorMoments<double> control_moments(const RunConfig& cfg, const ThetaBelief<double>& belief,
                                         const MpcProblem<double>& problem) {
  const Eigen::Index m = belief.dimension() / 2;
  MomentConfig mc;
  if (cfg.control.moments) {
    mc = *cfg.control.moments;
  } else {
    mc.source = (m == 1 && problem.horizon() == 2) ? MomentSource::ClosedForm : MomentSource::MonteCarlo;
  }
  if (mc.source == MomentSource::MonteCarlo && !belief.is_degenerate() && !cfg.seed) {
    throw Error(ErrorCode::Config, "control: Monte Carlo moments need a seed (config 'seed' or --seed)");
  }
  ExperimentConfig ec{belief, problem, 1, cfg.seed.value_or(0), mc, cfg.threads};
  return experiment_moments(ec);
}

int cmd_identify(const RunConfig& cfg, std::ostream& out) {
  const IdentifiedModel model = identify_model(cfg);
  const auto& post = model.posterior;
  json doc{{"samples", model.data.size()},
           {"dimension", model.data.dimension()},
           {"layout", json{{"output_lags", post.layout().output_lags}, {"input_lags", post.layout().input_lags}}},
           {"kernel", kernel_json(model.kernel)},
           {"lambda", post.lambda()},
           {"sigma2", post.sigma2()},
           {"gamma", post.gamma()},
           {"jitter", post.jitter()},
           {"log_marginal_likelihood",
            log_marginal_likelihood(model.data, model.kernel, post.lambda(), post.sigma2())},
           {"weights", vector_to_json(post.weights())},
           {"tuning", to_json(model.tuning)}};
  if (model.belief) doc["belief"] = to_json(*model.belief);
  emit(cfg, doc, out);
  return 0;
}

int cmd_tune(const RunConfig& cfg, std::ostream& out) {
  const IdentifiedModel model = identify_model(cfg);
  json doc = to_json(model.tuning);
  doc["samples"] = model.data.size();
  emit(cfg, doc, out);
  return 0;
}

int cmd_control(const RunConfig& cfg, std::ostream& out) {
  const auto& problem = require_problem(cfg, "control");
  json solutions = json::array();
  json doc = json::object();
  const ControlMode mode = cfg.control.method;
  if (mode == ControlMode::Narx) {
    const IdentifiedModel model = identify_model(cfg);
    const VectorXd u0 = cfg.control.u0.value_or(VectorXd::Zero(problem.horizon()));
    solutions.push_back(to_json(optimize_narx_input(model.posterior, problem, u0, cfg.control.search)));
  } else {
    const ThetaBelief<double> belief = require_belief(cfg, "control");
    if (mode == ControlMode::Both || mode == ControlMode::Bsp) {
      const auto moments = control_moments(cfg, belief, problem);
      solutions.push_back(to_json(bsp_optimal_input(moments, problem)));
      doc["moments"] = to_json(moments);
    }
    if (mode == ControlMode::Both || mode == ControlMode::Nominal) {
      solutions.push_back(to_json(nominal_input(belief, problem)));
    }
  }
  doc["solutions"] = std::move(solutions);
  emit(cfg, doc, out);
  return 0;
}

int cmd_experiment(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.seed) throw Error(ErrorCode::Config, "experiment: a seed is required (config 'seed' or --seed)");
  if (!cfg.output) throw Error(ErrorCode::Config, "experiment: an output directory is required ('output' or --out)");
  ExperimentConfig ec{require_belief(cfg, "experiment"), require_problem(cfg, "experiment"), cfg.runs, *cfg.seed,
                      cfg.experiment_moments, cfg.threads};
  const ExperimentResult result = run_experiment(ec);

  const std::filesystem::path dir(*cfg.output);
  std::error_code ec_fs;
  std::filesystem::create_directories(dir, ec_fs);
  if (ec_fs) throw Error(ErrorCode::Io, "cannot create output directory '" + dir.string() + "': " + ec_fs.message());
  const auto records_path = (dir / "records.csv").string();
  const auto summary_path = (dir / "summary.json").string();
  write_text_file(records_path, records_csv(result.records, ec.problem.horizon()));
  write_text_file(summary_path, to_json(result.summary).dump(2) + "\n");

  const auto& s = result.summary;
  json brief{{"records", records_path}, {"summary", summary_path}};
  for (Controller c : kControllers) {
    const auto& t = s.of(c).total;
    brief["mean_J"][std::string(to_string(c))] = json{{"mean", t.mean}, {"std_error", t.std_error}};
  }
  out << brief.dump(2) << "\n";
  return 0;
}

}  // namespace

ThetaBelief<double> location_to_predictor_order(const ThetaBelief<double>& belief, const LocationLayout& layout) {
  detail::require(belief.dimension() == layout.dimension(), ErrorCode::DimensionMismatch,
                  "belief dimension does not match the location layout");
  const Eigen::Index ny = layout.output_lags, nu = layout.input_lags;
  Eigen::VectorXi perm(ny + nu);
  for (Eigen::Index i = 0; i < nu; ++i) perm(i) = static_cast<int>(ny + i);
  for (Eigen::Index i = 0; i < ny; ++i) perm(nu + i) = static_cast<int>(i);
  VectorXd mean = belief.mean()(perm);
  MatrixXd cov = belief.covariance()(perm, perm);
  return ThetaBelief<double>(std::move(mean), std::move(cov));
}

IdentifiedModel identify_model(const RunConfig& cfg) {
  if (!cfg.dataset) throw Error(ErrorCode::Config, "a 'dataset' section is required");
  if (!cfg.kernel) throw Error(ErrorCode::Config, "a 'kernel' section is required");
  Dataset<double> data = load_dataset(cfg.dataset->path, cfg.dataset->layout);
  KernelSpec<double> kernel = make_kernel(*cfg.kernel, data.layout());
  const MatrixXd gram = gram_matrix(kernel, data.locations());

  TuningResult<double> tuning;
  switch (cfg.tuning.mode) {
    case TuningMode::Fixed:
      tuning = fixed_tuning(gram, data.outputs(), cfg.tuning.lambda, cfg.tuning.sigma2);
      break;
    case TuningMode::EmpiricalBayes: tuning = empirical_bayes(gram, data.outputs()); break;
    case TuningMode::Schedule:
      tuning = schedule_gamma(data.size(), cfg.tuning.alpha, cfg.tuning.scale, gram, data.outputs());
      break;
  }

  GpPosterior<double> post(data, kernel, tuning.lambda, tuning.sigma2);
  std::optional<ThetaBelief<double>> belief;
  const auto& layout = data.layout();
  if (kernel.family() == KernelFamily::Linear && layout.output_lags == layout.input_lags) {
    const auto loc_belief =
        linear_posterior<double>(data.locations(), data.outputs(), kernel.structure_matrix(), tuning.lambda,
                                 tuning.sigma2);
    belief = location_to_predictor_order(loc_belief, layout);
  }
  return IdentifiedModel{std::move(data), std::move(kernel), std::move(tuning), std::move(post), std::move(belief)};
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian identification and uncertainty-aware predictive control"};
  app.require_subcommand(1);
  Overrides o;
  std::string chosen;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"identify", "Fit the Gaussian-regression posterior and write a model summary"},
      {"tune", "Estimate lambda and sigma2 and write the tuning result"},
      {"control", "Compute BSP, Nominal or NARX inputs for the configured problem"},
      {"experiment", "Run the Oracle / Nominal / BSP Monte Carlo experiment"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "JSON run configuration")->required();
    sub->add_option("--seed", o.seed, "Random seed (overrides the config)");
    sub->add_option("--runs", o.runs, "Number of experiment runs (overrides the config)");
    sub->add_option("--out", o.out, "Output file, or directory for experiment (overrides the config)");
    sub->add_option("--threads", o.threads, "Worker threads (overrides the config)");
    sub->callback([&chosen, n = name] { chosen = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << error_json("usage", e.what()).dump() << "\n";
    return 2;
  }

  try {
    const RunConfig cfg = load_with_overrides(o);
    if (chosen == "identify") return cmd_identify(cfg, out);
    if (chosen == "tune") return cmd_tune(cfg, out);
    if (chosen == "control") return cmd_control(cfg, out);
    return cmd_experiment(cfg, out);
  } catch (const Error& e) {
    err << error_json(to_string(e.code()), std::string(chosen) + ": " + e.what()).dump() << "\n";
    return e.code() == ErrorCode::Config ? 2 : 1;
  } catch (const std::exception& e) {
    err << error_json("internal", std::string(chosen) + ": " + e.what()).dump() << "\n";
    return 1;
  }
}

}  // namespace bsp
