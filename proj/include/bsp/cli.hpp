#ifndef BSP_CLI_HPP
#define BSP_CLI_HPP

#include <iosfwd>
#include <optional>

#include "bsp/config.hpp"
#include "bsp/gp_regression.hpp"
#include "bsp/hyper_tune.hpp"

namespace bsp {

/// Entry point of the `bsp` tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Dataset load, hyperparameter tuning and posterior fit, as done by `bsp identify`.
struct IdentifiedModel {
  Dataset<double> data;
  KernelSpec<double> kernel;
  TuningResult<double> tuning;
  GpPosterior<double> posterior;
  /// Present for a linear kernel with equal input and output memory.
  std::optional<ThetaBelief<double>> belief;
};

IdentifiedModel identify_model(const RunConfig& cfg);

/// Reorder location-ordered coefficients [a (output lags), b (input lags)] into predictor order [b, a].
ThetaBelief<double> location_to_predictor_order(const ThetaBelief<double>& belief, const LocationLayout& layout);

}  // namespace bsp

#endif  // BSP_CLI_HPP
