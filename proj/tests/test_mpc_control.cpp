#include <doctest.h>

#include "bsp/error.hpp"
#include "bsp/mpc_control.hpp"
#include "test_support.hpp"

using namespace bsp;
using testing::max_abs_diff;
using testing::random_vector;

namespace {

Vector<double> vec(std::initializer_list<double> v) {
  Vector<double> out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ThetaBelief<double> reference_belief() {
  MatrixXd cov(2, 2);
  cov << 4.0, 0.9, 0.9, 4.0;
  return ThetaBelief<double>(vec({10.0, 5.0}), cov);
}

/// Posterior whose predictor is numerically the deterministic linear map theta.
GpPosterior<double> near_deterministic_posterior(const Vector<double>& theta_loc, const LocationLayout& layout,
                                                 std::mt19937_64& rng, double sigma2) {
  const Eigen::Index d = layout.dimension();
  const Locations<double> z = testing::random_matrix(rng, 4 * d, d);
  const Vector<double> y = z * theta_loc;
  const MatrixXd m = theta_loc * theta_loc.transpose();
  return fit_posterior(Dataset<double>(z, y, layout), KernelSpec<double>::linear(m), 1.0, sigma2);
}

}  // namespace

TEST_CASE("BSP input for the identity system") {
  const auto problem = MpcProblem<double>::tracking(vec({1.0, 1.0}), vec({0.0}));
  const auto moments = plugin_moments(PredictorCoefficients<double>(vec({1.0, 0.0})), problem.q(), 2);
  const auto sol = bsp_optimal_input(moments, problem);
  CHECK(max_abs_diff(sol.u, vec({1.0, 1.0})) <= 1e-14);
  CHECK(sol.method == ControlMethod::Bsp);
}

TEST_CASE("BSP input at the reference belief minimizes the posterior quadratic") {
  const auto problem = MpcProblem<double>::tracking(vec({10.0, 10.0}), vec({1.0}));
  const auto moments = closed_form_moments(reference_belief(), problem.q());
  const auto sol = bsp_optimal_input(moments, problem);
  // Independent minimizer of the expanded quadratic via a full-pivot solve.
  const auto [normal, rhs] = bsp_normal_equations(moments, problem);
  const Vector<double> brute = normal.fullPivHouseholderQr().solve(rhs);
  CHECK(max_abs_diff(sol.u, brute) <= 1e-8);
  CHECK(sol.u(0) == doctest::Approx(-0.65719317).epsilon(1e-7));
  CHECK(sol.u(1) == doctest::Approx(1.48624929).epsilon(1e-7));
  CHECK(posterior_quadratic_gradient(moments, problem, sol.u).norm() <= 1e-9);
}

TEST_CASE("normal equations use the unweighted first moment") {
  const MpcProblem<double> problem(vec({2.0, 0.5}), vec({0.0, 0.0}), vec({10.0, 10.0}), vec({0.0, 0.0}), vec({1.0}),
                                   Vector<double>());
  const auto moments = closed_form_moments(reference_belief(), problem.q());
  const auto [normal, rhs] = bsp_normal_equations(moments, problem);
  const Vector<double> expected = moments.e_At * problem.q() * problem.y_ref() - moments.e_AtQB * problem.y_past();
  CHECK(max_abs_diff(rhs, expected) <= 1e-12);
  CHECK(max_abs_diff(normal, moments.e_AtQA) == 0.0);
}

TEST_CASE("posterior quadratic matches the sample average of realized costs up to a constant") {
  const MpcProblem<double> problem(vec({1.0, 2.0}), vec({0.1, 0.3}), vec({10.0, 10.0}), vec({0.5, -0.5}), vec({1.0}),
                                   Vector<double>());
  const auto belief = reference_belief();
  const auto moments = closed_form_moments(belief, problem.q());
  // Difference between two inputs removes H. Gauss-Hermite on N(mu, Sigma) gives the exact expectation.
  const Vector<double> u1 = vec({0.3, -1.0}), u2 = vec({-0.7, 2.0});
  MatrixXd j(5, 5);
  j.setZero();
  for (int k = 1; k < 5; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<MatrixXd> herm(j);
  const Vector<double> x = herm.eigenvalues();
  const Vector<double> w = herm.eigenvectors().row(0).transpose().array().square();
  const MatrixXd root = belief.covariance().llt().matrixL();
  double diff = 0.0;
  for (int a = 0; a < 5; ++a) {
    for (int b = 0; b < 5; ++b) {
      const Vector<double> theta = belief.mean() + root * vec({x(a), x(b)});
      const auto mats = build_multistep(PredictorCoefficients<double>(theta), 2);
      auto cost = [&](const Vector<double>& u) {
        const Vector<double> e = problem.y_ref() - predict(mats, u, problem.y_past(), problem.u_past());
        const Vector<double> du = problem.u_ref() - u;
        return e.dot(problem.q() * e) + du.dot(problem.r() * du);
      };
      diff += w(a) * w(b) * (cost(u1) - cost(u2));
    }
  }
  const double model_diff = posterior_quadratic_cost(moments, problem, u1) - posterior_quadratic_cost(moments, problem, u2);
  CHECK(model_diff == doctest::Approx(diff).epsilon(1e-10));
}

TEST_CASE("large input penalty pins the input to its reference") {
  const Vector<double> u_ref = vec({0.4, -0.3});
  const MpcProblem<double> problem(vec({1.0, 1.0}), vec({1e12, 1e12}), vec({10.0, 10.0}), u_ref, vec({1.0}),
                                   Vector<double>());
  const auto sol = bsp_optimal_input(closed_form_moments(reference_belief(), problem.q()), problem);
  CHECK(max_abs_diff(sol.u, u_ref) <= 1e-6);
}

TEST_CASE("stationarity, global optimality and gradient of the BSP solution") {
  std::mt19937_64 rng(61);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::Index m = 1 + rep % 2, t = 2 + rep % 3;
    const Vector<double> mu = random_vector(rng, 2 * m, 0.7);
    const MatrixXd cov = 0.05 * testing::random_spd(rng, 2 * m, 0.2);
    const ThetaBelief<double> belief(mu, 0.5 * (cov + cov.transpose()));
    const Vector<double> r = testing::random_uniform(rng, t, 1, 0.0, 0.2);
    const MpcProblem<double> problem(Vector<double>::Ones(t), r, random_vector(rng, t), random_vector(rng, t),
                                     random_vector(rng, m), random_vector(rng, m - 1));
    MonteCarloOptions opts;
    opts.samples = 5000;
    opts.seed = 11;
    const auto moments = monte_carlo_moments(belief, problem.q(), t, m, opts);
    const auto sol = bsp_optimal_input(moments, problem);
    const auto [normal, rhs] = bsp_normal_equations(moments, problem);
    CHECK((normal * sol.u - rhs).norm() <= 1e-10 * rhs.norm());

    const double best = posterior_quadratic_cost(moments, problem, sol.u);
    for (int s = 0; s < 100; ++s) {
      const Vector<double> delta = random_vector(rng, t).normalized();
      for (double eps : {1e-2, 1e-1, 1.0}) {
        CHECK(posterior_quadratic_cost(moments, problem, Vector<double>(sol.u + eps * delta)) > best);
      }
    }

    const Vector<double> u = random_vector(rng, t);
    const Vector<double> g = posterior_quadratic_gradient(moments, problem, u);
    Vector<double> fd(t);
    for (Eigen::Index i = 0; i < t; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(u(i)));
      Vector<double> up = u, dn = u;
      up(i) += h;
      dn(i) -= h;
      fd(i) = (posterior_quadratic_cost(moments, problem, up) - posterior_quadratic_cost(moments, problem, dn)) /
              (2.0 * h);
    }
    CHECK((fd - g).norm() <= 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST_CASE("Nominal input") {
  const auto problem = MpcProblem<double>::tracking(vec({10.0, 10.0}), vec({1.0}));
  const auto nominal = nominal_input(reference_belief(), problem);
  const Vector<double> oracle = oracle_input(PredictorCoefficients<double>(vec({10.0, 5.0})), problem);
  CHECK(max_abs_diff(nominal.u, oracle) <= 1e-12);
  CHECK(nominal.method == ControlMethod::Nominal);

  const auto point = ThetaBelief<double>::point(vec({10.0, 5.0}));
  const auto bsp = bsp_optimal_input(closed_form_moments(point, problem.q()), problem);
  CHECK(max_abs_diff(bsp.u, nominal_input(point, problem).u) <= 1e-12);

  CHECK_THROWS_AS(nominal_input(ThetaBelief<double>::point(vec({0.0, 5.0})), problem), Error);
}

TEST_CASE("NARX rollout of a near-deterministic linear posterior follows the linear recursion") {
  std::mt19937_64 rng(62);
  // Predictor order [b1, b2, a1, a2]; locations [y(t-1), y(t-2), u(t), u(t-1)].
  const Vector<double> theta = vec({0.8, -0.3, 0.5, 0.2});
  const Vector<double> theta_loc = vec({0.5, 0.2, 0.8, -0.3});
  const LocationLayout layout{2, 2};
  const auto post = near_deterministic_posterior(theta_loc, layout, rng, 1e-12);
  const MpcProblem<double> problem(Vector<double>::Ones(4), Vector<double>::Constant(4, 0.1), random_vector(rng, 4),
                                   Vector<double>::Zero(4), vec({0.4, -0.1}), vec({0.7}));
  const Vector<double> u = random_vector(rng, 4);
  const auto roll = narx_rollout(post, problem, u);
  const auto mats = build_multistep(PredictorCoefficients<double>(theta), 4);
  const Vector<double> lin = predict(mats, u, problem.y_past(), problem.u_past());
  CHECK(max_abs_diff(roll.means, lin) <= 1e-8);
  CHECK(roll.variances.maxCoeff() <= 1e-8);

  // Zero-uncertainty limit: NARX cost equals the deterministic plug-in cost.
  const Vector<double> e = problem.y_ref() - lin;
  const double plug = e.squaredNorm() + 0.1 * u.squaredNorm();
  CHECK(narx_cost(post, problem, u) == doctest::Approx(plug).epsilon(1e-7));
}

TEST_CASE("NARX rollout basic properties") {
  std::mt19937_64 rng(63);
  const LocationLayout layout{1, 1};
  const Locations<double> z = testing::random_matrix(rng, 10, 2);
  const Vector<double> y = random_vector(rng, 10);
  const auto k = KernelSpec<double>::gaussian(1.0);
  const auto post = fit_posterior(Dataset<double>(z, y, layout), k, 1.0, 0.1);

  const auto one = MpcProblem<double>::tracking(vec({0.5}), vec({0.3}));
  const auto r1 = narx_rollout(post, one, vec({-0.2}));
  CHECK(r1.means(0) == posterior_mean(post, vec({0.3, -0.2})));
  CHECK(r1.variances(0) == posterior_variance(post, vec({0.3, -0.2})));

  const auto problem = MpcProblem<double>(vec({1.0, 2.0, 0.5}), vec({0.1, 0.0, 0.2}), random_vector(rng, 3),
                                          random_vector(rng, 3), vec({0.3}), Vector<double>());
  const Vector<double> u = random_vector(rng, 3);
  const auto roll = narx_rollout(post, problem, u);
  CHECK(roll.locations(1, 0) == roll.means(0));
  CHECK(roll.locations(2, 1) == u(2));
  double manual = 0.0;
  for (Eigen::Index l = 0; l < 3; ++l) {
    manual += problem.q_weights()(l) * (std::pow(problem.y_ref()(l) - roll.means(l), 2) + roll.variances(l));
    manual += problem.r_weights()(l) * std::pow(problem.u_ref()(l) - u(l), 2);
  }
  CHECK(std::abs(narx_cost(post, problem, u) - manual) <= 1e-12 * std::max(1.0, manual));

  // Zero outputs give zero weights: means vanish and variances are the prior minus the data correction.
  const auto zero = fit_posterior(Dataset<double>(z, Vector<double>::Zero(10), layout), k, 1.0, 0.1);
  const auto rz = narx_rollout(zero, problem, u);
  CHECK(rz.means.isZero(0.0));
  for (Eigen::Index l = 0; l < 3; ++l) {
    CHECK(rz.variances(l) == doctest::Approx(posterior_variance(zero, rz.locations.row(l))).epsilon(1e-15));
    CHECK(rz.variances(l) < 1.0);
  }
}

TEST_CASE("NFIR cost") {
  std::mt19937_64 rng(64);
  const LocationLayout layout{0, 1};
  const Locations<double> z = testing::random_matrix(rng, 12, 1);
  const double b = 1.3, lambda = 0.7, sigma2 = 0.05;
  std::normal_distribution<double> noise(0.0, 0.2);
  Vector<double> y(12);
  for (Eigen::Index i = 0; i < 12; ++i) y(i) = b * z(i, 0) + noise(rng);
  const auto post = fit_posterior(Dataset<double>(z, y, layout), KernelSpec<double>::linear(MatrixXd::Identity(1, 1)),
                                  lambda, sigma2);
  const auto problem = MpcProblem<double>(vec({1.0, 1.0}), vec({0.2, 0.2}), vec({1.0, -0.5}), vec({0.1, 0.1}),
                                          Vector<double>(), Vector<double>());
  const auto belief = linear_posterior<double>(z, y, MatrixXd::Identity(1, 1), lambda, sigma2);
  const double mb = belief.mean()(0), vb = belief.covariance()(0, 0);
  const Vector<double> u = vec({0.4, -0.9});
  double expected = 0.0;
  for (Eigen::Index l = 0; l < 2; ++l) {
    expected += std::pow(problem.y_ref()(l) - mb * u(l), 2) + vb * u(l) * u(l);
    expected += 0.2 * std::pow(0.1 - u(l), 2);
  }
  CHECK(nfir_cost(post, problem, u) == doctest::Approx(expected).epsilon(1e-10));
  CHECK(nfir_cost(post, problem, u) == narx_cost(post, problem, u));

  const auto zero_q = MpcProblem<double>(vec({0.0, 0.0}), vec({0.2, 0.2}), vec({1.0, -0.5}), vec({0.1, 0.1}),
                                         Vector<double>(), Vector<double>());
  CHECK(nfir_cost(post, zero_q, vec({0.1, 0.1})) == 0.0);

  const auto narx_post = fit_posterior(Dataset<double>(testing::random_matrix(rng, 5, 2), random_vector(rng, 5),
                                                       LocationLayout{1, 1}),
                                       KernelSpec<double>::gaussian(1.0), 1.0, 0.1);
  CHECK_THROWS_AS(nfir_cost(narx_post, MpcProblem<double>::tracking(vec({1.0}), vec({0.0})), vec({0.0})), Error);
}

TEST_CASE("NFIR cost of a zero-uncertainty perfect tracker is the input penalty") {
  std::mt19937_64 rng(65);
  const auto post = near_deterministic_posterior(vec({2.0}), LocationLayout{0, 1}, rng, 1e-14);
  const Vector<double> u = vec({0.5, -1.0});
  const auto problem = MpcProblem<double>(vec({1.0, 1.0}), vec({0.3, 0.3}), Vector<double>(2.0 * u),
                                          Vector<double>::Zero(2), Vector<double>(), Vector<double>());
  const double penalty = 0.3 * u.squaredNorm();
  CHECK(nfir_cost(post, problem, u) == doctest::Approx(penalty).epsilon(1e-8));
}

TEST_CASE("compass search") {
  std::mt19937_64 rng(66);
  const LocationLayout layout{0, 1};
  const Locations<double> z = testing::random_matrix(rng, 15, 1);
  const Vector<double> y = 1.5 * Vector<double>(z.col(0)) + 0.1 * random_vector(rng, 15);
  const double lambda = 1.0, sigma2 = 0.05;
  const auto post = fit_posterior(Dataset<double>(z, y, layout), KernelSpec<double>::linear(MatrixXd::Identity(1, 1)),
                                  lambda, sigma2);
  const auto problem = MpcProblem<double>(vec({1.0, 2.0}), vec({0.1, 0.4}), vec({1.0, -0.5}), vec({0.2, 0.0}),
                                          Vector<double>(), Vector<double>());
  const auto belief = linear_posterior<double>(z, y, MatrixXd::Identity(1, 1), lambda, sigma2);
  const double mb = belief.mean()(0), eb2 = mb * mb + belief.covariance()(0, 0);
  Vector<double> closed(2);
  for (Eigen::Index l = 0; l < 2; ++l) {
    const double ql = problem.q_weights()(l), rl = problem.r_weights()(l);
    closed(l) = (ql * mb * problem.y_ref()(l) + rl * problem.u_ref()(l)) / (ql * eb2 + rl);
  }
  const auto sol = optimize_narx_input(post, problem, Vector<double>(Vector<double>::Zero(2)));
  CHECK(max_abs_diff(sol.u, closed) <= 1e-4);
  CHECK(sol.method == ControlMethod::Nfir);
  CHECK(sol.evaluations > 0);

  const auto again = optimize_narx_input(post, problem, closed);
  CHECK(narx_cost(post, problem, again.u) <= narx_cost(post, problem, closed));
  CHECK(max_abs_diff(again.u, closed) <= 1e-5);

  const auto pure_penalty = MpcProblem<double>(vec({0.0, 0.0}), vec({1.0, 1.0}), vec({1.0, -0.5}), vec({0.25, -0.75}),
                                               Vector<double>(), Vector<double>());
  const auto to_ref = optimize_narx_input(post, pure_penalty, Vector<double>(Vector<double>::Zero(2)));
  CHECK(max_abs_diff(to_ref.u, pure_penalty.u_ref()) <= 1e-6);
}

TEST_CASE("BSP solve rejects singular normal equations") {
  const auto problem = MpcProblem<double>::tracking(vec({1.0, 1.0}), vec({0.0}));
  const auto moments = plugin_moments(PredictorCoefficients<double>(vec({0.0, 0.0})), problem.q(), 2);
  try {
    bsp_optimal_input(moments, problem);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularMatrix);
  }
}

TEST_CASE("long double BSP solve") {
  using LD = long double;
  Vector<LD> mu(2);
  mu << 10.0L, 5.0L;
  Matrix<LD> cov(2, 2);
  cov << 4.0L, 0.9L, 0.9L, 4.0L;
  Vector<LD> yref(2), ypast(1);
  yref << 10.0L, 10.0L;
  ypast << 1.0L;
  const auto problem = MpcProblem<LD>::tracking(yref, ypast);
  const auto sol = bsp_optimal_input(closed_form_moments(ThetaBelief<LD>(mu, cov), problem.q()), problem);
  CHECK(std::abs(sol.u(0) - (-0.65719317L)) < 1e-8L);
}
