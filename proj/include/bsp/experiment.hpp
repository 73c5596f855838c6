#ifndef BSP_EXPERIMENT_HPP
#define BSP_EXPERIMENT_HPP

/**
 * @file
 * @brief Monte Carlo comparison of the Oracle, Nominal and BSP controllers.
 *
 * Each run draws a true theta from the belief, applies the three inputs to the
 * noise-free predictor of that theta and records the realized cost and its
 * per-step decomposition J = J_1 + ... + J_T (+ input penalty).
 */

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bsp/gaussian_moments.hpp"
#include "bsp/gp_regression.hpp"
#include "bsp/mpc_problem.hpp"
#include "bsp/types.hpp"

namespace bsp {

struct CostBreakdown {
  double total = 0.0;
  /// q_i (y_ref_i - y_i)^2 per horizon step.
  VectorXd per_step;
  double input_penalty = 0.0;
};

/// Realized cost of input `u` on the noise-free predictor of `theta_true`.
CostBreakdown realized_cost(const VectorXd& theta_true, const VectorXd& u, const MpcProblem<double>& problem);

enum class Controller { Oracle = 0, Nominal = 1, Bsp = 2 };
inline constexpr std::array<Controller, 3> kControllers{Controller::Oracle, Controller::Nominal, Controller::Bsp};

std::string_view to_string(Controller c);
std::optional<Controller> controller_from_string(std::string_view name);

struct MomentConfig {
  MomentSource source = MomentSource::ClosedForm;
  /// Used only for MomentSource::MonteCarlo.
  std::uint64_t samples = 100000;
};

struct ExperimentConfig {
  ThetaBelief<double> belief;
  MpcProblem<double> problem;
  std::uint64_t runs = 10000;
  std::uint64_t seed = 0;
  MomentConfig moments{};
  unsigned threads = 1;
};

struct RunRecord {
  std::uint64_t run = 0;
  VectorXd theta;
  /// Indexed by Controller; the oracle entry is empty when it is undefined for the draw.
  std::array<std::optional<CostBreakdown>, 3> costs;
  bool oracle_failed = false;
};

/// Boxplot statistics; quartiles use linear interpolation (type 7), whiskers the 1.5 IQR rule.
struct BoxStats {
  std::uint64_t count = 0;
  double mean = 0.0;
  double std_error = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;

  bool operator==(const BoxStats&) const = default;
};

/// Values are summarized in the given order; they are copied for the quantiles.
BoxStats box_stats(const std::vector<double>& values);

/// Type-7 quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double p);

struct ControllerSummary {
  Controller controller = Controller::Oracle;
  /// Applied input; empty for the oracle, whose input changes every run.
  std::vector<double> input;
  BoxStats total;
  std::vector<BoxStats> steps;
  BoxStats input_penalty;

  bool operator==(const ControllerSummary&) const = default;
};

struct ExperimentSummary {
  std::uint64_t runs = 0;
  std::uint64_t seed = 0;
  std::int64_t horizon = 0;
  std::string moment_source;
  std::uint64_t moment_samples = 0;
  std::uint64_t oracle_failures = 0;
  std::array<ControllerSummary, 3> controllers;

  const ControllerSummary& of(Controller c) const { return controllers[static_cast<std::size_t>(c)]; }
  bool operator==(const ExperimentSummary&) const = default;
};

struct ExperimentResult {
  std::vector<RunRecord> records;
  ExperimentSummary summary;
  PredictorMoments<double> moments;
  VectorXd u_nominal;
  VectorXd u_bsp;
};

/// Belief moments as requested by the config (closed form or seeded Monte Carlo).
PredictorMoments<double> experiment_moments(const ExperimentConfig& config);

/// Deterministic in (config, seed); independent of config.threads.
ExperimentResult run_experiment(const ExperimentConfig& config);

}  // namespace bsp

#endif  // BSP_EXPERIMENT_HPP
