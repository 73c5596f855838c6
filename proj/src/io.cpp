#include "bsp/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bsp/error.hpp"

namespace bsp {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& field, const std::string& where) {
  if (field.empty()) throw Error(ErrorCode::Io, where + ": empty field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size() || errno == ERANGE) {
    throw Error(ErrorCode::Io, where + ": malformed number '" + field + "'");
  }
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, where + ": non-finite value '" + field + "'");
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Series read_series(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  const auto header = split(trim(line), ',');
  if (header != std::vector<std::string>{"t", "u", "y"}) {
    throw Error(ErrorCode::Io, source + ": expected header 't,u,y'");
  }
  Series s;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    const std::string where = source + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) + ")";
    const auto fields = split(trim(line), ',');
    if (fields.size() != 3) throw Error(ErrorCode::Io, where + ": expected 3 fields, got " +
                                                           std::to_string(fields.size()));
    const double t = parse_number(fields[0], where);
    if (!s.t.empty() && !(t > s.t.back())) throw Error(ErrorCode::Io, where + ": rows are not time-ordered");
    s.t.push_back(t);
    s.u.push_back(parse_number(fields[1], where));
    s.y.push_back(parse_number(fields[2], where));
  }
  return s;
}

Dataset<double> window_series(const Series& series, const LocationLayout& layout) {
  detail::require(layout.output_lags >= 0 && layout.input_lags >= 0 && layout.dimension() >= 1,
                  ErrorCode::InvalidArgument, "dataset: layout needs at least one lag");
  const auto rows = static_cast<Eigen::Index>(series.t.size());
  const Eigen::Index skip = std::max(layout.output_lags, layout.input_lags - 1);
  detail::require(rows >= skip + 1, ErrorCode::DegenerateData,
                  "dataset: " + std::to_string(rows) + " rows is fewer than the " + std::to_string(skip + 1) +
                      " needed for the requested memory");
  const Eigen::Index n = rows - skip;
  Locations<double> z(n, layout.dimension());
  VectorXd y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index t = k + skip;
    for (Eigen::Index j = 1; j <= layout.output_lags; ++j) z(k, j - 1) = series.y[t - j];
    for (Eigen::Index i = 0; i < layout.input_lags; ++i) z(k, layout.output_lags + i) = series.u[t - i];
    y(k) = series.y[t];
  }
  return Dataset<double>(std::move(z), std::move(y), layout);
}

Dataset<double> load_dataset(std::istream& in, const LocationLayout& layout, const std::string& source) {
  return window_series(read_series(in, source), layout);
}

Dataset<double> load_dataset(const std::string& path, const LocationLayout& layout) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open dataset '" + path + "'");
  return load_dataset(in, layout, path);
}

std::string records_csv(const std::vector<RunRecord>& records, Eigen::Index horizon) {
  std::ostringstream os;
  os << "run,controller,J";
  for (Eigen::Index i = 1; i <= horizon; ++i) os << ",J" << i;
  os << ",flags\n";
  for (const auto& rec : records) {
    for (Controller c : kControllers) {
      const auto& cost = rec.costs[static_cast<std::size_t>(c)];
      os << rec.run << ',' << to_string(c) << ',';
      if (cost) {
        os << format_double(cost->total);
        for (Eigen::Index i = 0; i < horizon; ++i) os << ',' << format_double(cost->per_step(i));
      } else {
        for (Eigen::Index i = 0; i < horizon; ++i) os << ',';
      }
      os << ',' << (c == Controller::Oracle && rec.oracle_failed ? "oracle_failed" : "") << '\n';
    }
  }
  return os.str();
}

json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json matrix_to_json(const MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

json to_json(const BoxStats& s) {
  return json{{"count", s.count},   {"mean", s.mean},     {"std_error", s.std_error},
              {"stddev", s.stddev}, {"min", s.min},       {"q1", s.q1},
              {"median", s.median}, {"q3", s.q3},         {"max", s.max},
              {"whisker_low", s.whisker_low}, {"whisker_high", s.whisker_high}};
}

BoxStats box_stats_from_json(const json& j) {
  BoxStats s;
  s.count = j.at("count").get<std::uint64_t>();
  s.mean = j.at("mean").get<double>();
  s.std_error = j.at("std_error").get<double>();
  s.stddev = j.at("stddev").get<double>();
  s.min = j.at("min").get<double>();
  s.q1 = j.at("q1").get<double>();
  s.median = j.at("median").get<double>();
  s.q3 = j.at("q3").get<double>();
  s.max = j.at("max").get<double>();
  s.whisker_low = j.at("whisker_low").get<double>();
  s.whisker_high = j.at("whisker_high").get<double>();
  return s;
}

json to_json(const ExperimentSummary& s) {
  json controllers = json::object();
  for (const auto& c : s.controllers) {
    json steps = json::array();
    for (const auto& st : c.steps) steps.push_back(to_json(st));
    controllers[std::string(to_string(c.controller))] = json{
        {"input", c.input.empty() ? json(nullptr) : json(c.input)},
        {"J", to_json(c.total)},
        {"steps", std::move(steps)},
        {"input_penalty", to_json(c.input_penalty)},
    };
  }
  return json{
      {"schema", "bsp.experiment.summary/1"},
      {"runs", s.runs},
      {"seed", s.seed},
      {"horizon", s.horizon},
      {"moments", json{{"source", s.moment_source}, {"samples", s.moment_samples}}},
      {"oracle_failures", s.oracle_failures},
      {"controllers", std::move(controllers)},
  };
}

ExperimentSummary summary_from_json(const json& j) {
  if (j.at("schema").get<std::string>() != "bsp.experiment.summary/1") {
    throw Error(ErrorCode::Io, "summary: unsupported schema");
  }
  ExperimentSummary s;
  s.runs = j.at("runs").get<std::uint64_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.horizon = j.at("horizon").get<std::int64_t>();
  s.moment_source = j.at("moments").at("source").get<std::string>();
  s.moment_samples = j.at("moments").at("samples").get<std::uint64_t>();
  s.oracle_failures = j.at("oracle_failures").get<std::uint64_t>();
  for (Controller c : kControllers) {
    const json& cj = j.at("controllers").at(std::string(to_string(c)));
    ControllerSummary& cs = s.controllers[static_cast<std::size_t>(c)];
    cs.controller = c;
    if (!cj.at("input").is_null()) cs.input = cj.at("input").get<std::vector<double>>();
    cs.total = box_stats_from_json(cj.at("J"));
    for (const auto& st : cj.at("steps")) cs.steps.push_back(box_stats_from_json(st));
    cs.input_penalty = box_stats_from_json(cj.at("input_penalty"));
  }
  return s;
}

json to_json(const TuningResult<double>& r) {
  return json{{"gamma", r.gamma},         {"lambda", r.lambda},         {"sigma2", r.sigma2},
              {"dof", r.dof},             {"wsrr", r.wsrr},             {"wssu", r.wssu},
              {"iterations", r.iterations}, {"residual", r.residual}, {"bracketed", r.bracketed},
              {"diagnostics", r.diagnostics}};
}

json to_json(const ControlSolution<double>& s) {
  return json{{"method", std::string(to_string(s.method))},
              {"u", vector_to_json(s.u)},
              {"predicted_cost", s.predicted_cost},
              {"evaluations", s.evaluations}};
}

json to_json(const PredictorMoments<double>& m) {
  json j{{"source", std::string(to_string(m.source))},
         {"e_AtQA", matrix_to_json(m.e_AtQA)},
         {"e_At", matrix_to_json(m.e_At)},
         {"e_AtQB", matrix_to_json(m.e_AtQB)},
         {"e_AtQC", matrix_to_json(m.e_AtQC)}};
  if (m.source == MomentSource::MonteCarlo) {
    j["samples"] = m.samples;
    j["seed"] = m.seed;
    j["std_errors"] = json{{"e_AtQA", matrix_to_json(m.se_AtQA)},
                           {"e_At", matrix_to_json(m.se_At)},
                           {"e_AtQB", matrix_to_json(m.se_AtQB)},
                           {"e_AtQC", matrix_to_json(m.se_AtQC)}};
  }
  return j;
}

json to_json(const ThetaBelief<double>& b) {
  return json{{"mean", vector_to_json(b.mean())}, {"covariance", matrix_to_json(b.covariance())}};
}

json error_json(std::string_view code, const std::string& message) {
  return json{{"error", json{{"code", std::string(code)}, {"message", message}}}};
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << contents;
  if (!out) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace bsp
