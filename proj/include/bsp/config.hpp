#ifndef BSP_CONFIG_HPP
#define BSP_CONFIG_HPP

/**
 * @file
 * @brief Strict JSON run configuration.
 *
 * Unknown keys anywhere in the document abort parsing before any computation.
 * See README.md for the full key reference.
 */

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "bsp/experiment.hpp"
#include "bsp/gp_regression.hpp"
#include "bsp/hyper_tune.hpp"
#include "bsp/kernels.hpp"
#include "bsp/mpc_control.hpp"
#include "bsp/mpc_problem.hpp"

namespace bsp {

struct DatasetConfig {
  std::string path;
  LocationLayout layout{1, 1};
};

struct KernelConfig {
  KernelFamily family = KernelFamily::Gaussian;
  double eta = 1.0;
  int degree = 1;
  VectorXd ard_weights;
  MatrixXd structure_matrix;
  std::optional<TcDecay<double>> tc;
};

enum class TuningMode { Fixed, EmpiricalBayes, Schedule };

struct TuningConfig {
  TuningMode mode = TuningMode::EmpiricalBayes;
  double lambda = 1.0;
  double sigma2 = 1.0;
  double alpha = 0.25;
  double scale = 1.0;
};

enum class ControlMode { Both, Bsp, Nominal, Narx };

struct ControlConfig {
  ControlMode method = ControlMode::Both;
  /// Unset: closed form when m = 1 and T = 2, Monte Carlo otherwise.
  std::optional<MomentConfig> moments;
  std::optional<VectorXd> u0;
  CoordinateSearchOptions search{};
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  unsigned threads = 1;
  std::optional<DatasetConfig> dataset;
  std::optional<KernelConfig> kernel;
  TuningConfig tuning{};
  std::optional<MpcProblem<double>> problem;
  std::optional<ThetaBelief<double>> belief;
  std::uint64_t runs = 10000;
  MomentConfig experiment_moments{};
  ControlConfig control{};
};

/// Parse and validate; throws Error(ErrorCode::Config) on unknown keys or bad values.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// Kernel for locations with the given layout (TC blocks are sized from it).
KernelSpec<double> make_kernel(const KernelConfig& cfg, const LocationLayout& layout);

}  // namespace bsp

#endif  // BSP_CONFIG_HPP
