#ifndef BSP_IO_HPP
#define BSP_IO_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsp/experiment.hpp"
#include "bsp/gp_regression.hpp"
#include "bsp/hyper_tune.hpp"
#include "bsp/mpc_control.hpp"

namespace bsp {

/**
 * Read a `t,u,y` CSV and window it into input locations with the given layout.
 * The first max(output_lags, input_lags - 1) rows only provide history.
 */
Dataset<double> load_dataset(const std::string& path, const LocationLayout& layout);
Dataset<double> load_dataset(std::istream& in, const LocationLayout& layout, const std::string& source = "<stream>");

/// Raw series rows.
struct Series {
  std::vector<double> t, u, y;
};
Series read_series(std::istream& in, const std::string& source);
Dataset<double> window_series(const Series& series, const LocationLayout& layout);

/// Header `run,controller,J,J1,...,JT,flags`; one row per run and controller.
std::string records_csv(const std::vector<RunRecord>& records, Eigen::Index horizon);

nlohmann::json to_json(const BoxStats& s);
nlohmann::json to_json(const ExperimentSummary& s);
nlohmann::json to_json(const TuningResult<double>& r);
nlohmann::json to_json(const ControlSolution<double>& s);
nlohmann::json to_json(const PredictorMoments<double>& m);
nlohmann::json to_json(const ThetaBelief<double>& b);

BoxStats box_stats_from_json(const nlohmann::json& j);
ExperimentSummary summary_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const MatrixXd& m);
nlohmann::json vector_to_json(const VectorXd& v);

/// Machine-readable failure object: {"error": {"code": ..., "message": ...}}.
nlohmann::json error_json(std::string_view code, const std::string& message);

void write_text_file(const std::string& path, const std::string& contents);

}  // namespace bsp

#endif  // BSP_IO_HPP
