#include "bsp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "bsp/error.hpp"
#include "bsp/linear_predictor.hpp"
#include "bsp/mpc_control.hpp"
#include "bsp/random.hpp"

namespace bsp {

std::string_view to_string(Controller c) {
  switch (c) {
    case Controller::Oracle: return "oracle";
    case Controller::Nominal: return "nominal";
    case Controller::Bsp: return "bsp";
  }
  return "unknown";
}

std::optional<Controller> controller_from_string(std::string_view name) {
  for (Controller c : kControllers) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

CostBreakdown realized_cost(const VectorXd& theta_true, const VectorXd& u, const MpcProblem<double>& problem) {
  const PredictorCoefficients<double> coeffs(theta_true);
  detail::check_problem_memory(problem, coeffs.memory(), "realized_cost");
  detail::require(u.size() == problem.horizon(), ErrorCode::DimensionMismatch,
                  "realized_cost: input length must equal T");
  const auto mats = build_multistep(coeffs, problem.horizon());
  const VectorXd err = problem.y_ref() - predict(mats, u, problem.y_past(), problem.u_past());

  CostBreakdown out;
  out.per_step = problem.q_weights().cwiseProduct(err.cwiseAbs2());
  out.input_penalty = (problem.r_weights().array() * (problem.u_ref() - u).array().square()).sum();
  out.total = out.per_step.sum() + out.input_penalty;
  return out;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  detail::require(!sorted.empty(), ErrorCode::InvalidArgument, "quantile: empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(const std::vector<double>& values) {
  BoxStats s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  s.mean = sum / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
    s.std_error = s.stddev / std::sqrt(n);
  }
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.q1 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q3 = quantile_sorted(sorted, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr, hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_low = *std::lower_bound(sorted.begin(), sorted.end(), lo_fence);
  s.whisker_high = *(std::upper_bound(sorted.begin(), sorted.end(), hi_fence) - 1);
  return s;
}

PredictorMoments<double> experiment_moments(const ExperimentConfig& config) {
  const Eigen::Index t = config.problem.horizon();
  const Eigen::Index m = config.belief.dimension() / 2;
  switch (config.moments.source) {
    case MomentSource::ClosedForm:
      detail::require(t == 2 && m == 1, ErrorCode::Unsupported,
                      "experiment: closed-form moments need m = 1 and T = 2; use monte_carlo");
      return closed_form_moments(config.belief, config.problem.q());
    case MomentSource::MonteCarlo: {
      MonteCarloOptions opts;
      opts.samples = config.moments.samples;
      opts.seed = config.seed;
      opts.threads = config.threads;
      return monte_carlo_moments(config.belief, config.problem.q(), t, m, opts);
    }
    case MomentSource::PlugIn:
      return plugin_moments(PredictorCoefficients<double>(config.belief.mean()), config.problem.q(), t);
  }
  throw Error(ErrorCode::InvalidArgument, "experiment: unknown moment source");
}

namespace {

ControllerSummary summarize(Controller c, const std::vector<RunRecord>& records, Eigen::Index horizon) {
  ControllerSummary out;
  out.controller = c;
  const auto idx = static_cast<std::size_t>(c);
  std::vector<double> totals, penalty;
  std::vector<std::vector<double>> steps(static_cast<std::size_t>(horizon));
  totals.reserve(records.size());
  for (const auto& rec : records) {
    const auto& cost = rec.costs[idx];
    if (!cost) continue;
    totals.push_back(cost->total);
    penalty.push_back(cost->input_penalty);
    for (Eigen::Index i = 0; i < horizon; ++i) steps[static_cast<std::size_t>(i)].push_back(cost->per_step(i));
  }
  out.total = box_stats(totals);
  out.input_penalty = box_stats(penalty);
  for (const auto& s : steps) out.steps.push_back(box_stats(s));
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  detail::require(config.runs >= 1, ErrorCode::InvalidArgument, "experiment: runs must be >= 1");
  const auto& problem = config.problem;
  const Eigen::Index m = config.belief.dimension() / 2;
  detail::require(config.belief.dimension() == 2 * m && m >= 1, ErrorCode::DimensionMismatch,
                  "experiment: belief dimension must be 2m");
  detail::check_problem_memory(problem, m, "experiment");

  ExperimentResult result;
  result.moments = experiment_moments(config);
  result.u_bsp = bsp_optimal_input(result.moments, problem).u;
  result.u_nominal = nominal_input(config.belief, problem).u;

  const GaussianSampler<double> sampler(config.belief);
  const bool oracle_defined = !problem.has_input_penalty();
  result.records.resize(config.runs);

  auto run_one = [&](std::uint64_t i) {
    RunRecord rec;
    rec.run = i;
    auto engine = substream_engine(config.seed, Stream::ExperimentRuns, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd z(sampler.dimension());
    sampler.draw(engine, normal, z, rec.theta);

    if (oracle_defined && std::abs(rec.theta(0)) >= 1e-12) {
      const VectorXd u_oracle = oracle_input(PredictorCoefficients<double>(rec.theta), problem);
      rec.costs[static_cast<std::size_t>(Controller::Oracle)] = realized_cost(rec.theta, u_oracle, problem);
    } else {
      rec.oracle_failed = true;
    }
    rec.costs[static_cast<std::size_t>(Controller::Nominal)] = realized_cost(rec.theta, result.u_nominal, problem);
    rec.costs[static_cast<std::size_t>(Controller::Bsp)] = realized_cost(rec.theta, result.u_bsp, problem);
    result.records[i] = std::move(rec);
  };

  const unsigned n_threads =
      static_cast<unsigned>(std::max<std::uint64_t>(1, std::min<std::uint64_t>(config.threads, config.runs)));
  if (n_threads == 1) {
    for (std::uint64_t i = 0; i < config.runs; ++i) run_one(i);
  } else {
    // Workers take contiguous chunks; every run writes only its own slot.
    constexpr std::uint64_t kChunk = 256;
    std::atomic<std::uint64_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n_threads; ++w) {
      pool.emplace_back([&] {
        for (std::uint64_t begin = next.fetch_add(kChunk); begin < config.runs; begin = next.fetch_add(kChunk)) {
          const std::uint64_t end = std::min(config.runs, begin + kChunk);
          for (std::uint64_t i = begin; i < end; ++i) run_one(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  auto& summary = result.summary;
  summary.runs = config.runs;
  summary.seed = config.seed;
  summary.horizon = problem.horizon();
  summary.moment_source = std::string(to_string(result.moments.source));
  summary.moment_samples = result.moments.samples;
  summary.oracle_failures = static_cast<std::uint64_t>(
      std::count_if(result.records.begin(), result.records.end(), [](const RunRecord& r) { return r.oracle_failed; }));
  for (Controller c : kControllers) {
    summary.controllers[static_cast<std::size_t>(c)] = summarize(c, result.records, problem.horizon());
  }
  auto& nominal = summary.controllers[static_cast<std::size_t>(Controller::Nominal)];
  nominal.input.assign(result.u_nominal.data(), result.u_nominal.data() + result.u_nominal.size());
  auto& bsp = summary.controllers[static_cast<std::size_t>(Controller::Bsp)];
  bsp.input.assign(result.u_bsp.data(), result.u_bsp.data() + result.u_bsp.size());
  return result;
}

}  // namespace bsp
