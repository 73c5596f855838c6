#include <doctest.h>

#include "bsp/error.hpp"
#include "bsp/hyper_tune.hpp"
#include "bsp/kernels.hpp"
#include "test_support.hpp"

using namespace bsp;
using testing::max_abs_diff;
using testing::random_spd;
using testing::random_vector;

namespace {

MatrixXd dense_inverse(const MatrixXd& m) { return m.fullPivLu().inverse(); }

/// Spline Gram and noisy smooth outputs on sorted points of (0, 1].
std::pair<MatrixXd, Vector<double>> spline_problem(std::mt19937_64& rng, Eigen::Index n, double noise) {
  Locations<double> z = testing::random_uniform(rng, n, 1, 0.02, 1.0);
  std::sort(z.data(), z.data() + n);
  std::normal_distribution<double> e(0.0, noise);
  Vector<double> y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = std::sin(4.0 * z(i, 0)) + z(i, 0) + e(rng);
  return {gram_matrix(KernelSpec<double>::spline(), z), y};
}

/// Maximizer of the profile marginal likelihood over a dense log10 grid,
/// using lambda_hat(gamma) = Y^T (K + gamma I)^{-1} Y / N.
struct GridOptimum {
  double log10_gamma;
  double lambda;
  double sigma2;
  double log_likelihood;
};

GridOptimum profile_grid_search(const MatrixXd& k, const Vector<double>& y, int points, double lo, double hi) {
  const Eigen::Index n = y.size();
  GridOptimum best{0.0, 0.0, 0.0, -std::numeric_limits<double>::infinity()};
  for (int i = 0; i < points; ++i) {
    const double lg = lo + (hi - lo) * i / (points - 1);
    const double gamma = std::pow(10.0, lg);
    MatrixXd sigma = k;
    sigma.diagonal().array() += gamma;
    Eigen::LLT<MatrixXd> llt(sigma);
    const double lambda = y.dot(llt.solve(y)) / static_cast<double>(n);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double ll = -0.5 * (static_cast<double>(n) * (std::log(2.0 * std::numbers::pi * lambda) + 1.0) + logdet);
    if (ll > best.log_likelihood) best = {lg, lambda, lambda * gamma, ll};
  }
  return best;
}

double fixed_point_residual(const MatrixXd& k, const Vector<double>& y, const TuningResult<double>& r) {
  const double q = degrees_of_freedom(k, r.gamma);
  const double lambda_eq = wssu(k, r.gamma, y) / q;
  const double sigma2_eq = wsrr(k, r.gamma, y) / (static_cast<double>(y.size()) - q);
  return std::max(std::abs(r.lambda - lambda_eq) / lambda_eq, std::abs(r.sigma2 - sigma2_eq) / sigma2_eq);
}

/// Sign change of log(gamma) - log(sigma2 / lambda) on a fine grid, from the dense-matrix quantities.
bool has_fixed_point(const MatrixXd& k, const Vector<double>& y) {
  const double n = static_cast<double>(y.size());
  int sign = 0;
  for (int i = 0; i <= 1600; ++i) {
    const double gamma = std::pow(10.0, -8.0 + 0.01 * i);
    const double q = degrees_of_freedom(k, gamma);
    const double h = std::log(gamma) - std::log((wsrr(k, gamma, y) / (n - q)) / (wssu(k, gamma, y) / q));
    const int s = h < 0.0 ? -1 : 1;
    if (sign != 0 && s != sign) return true;
    sign = s;
  }
  return false;
}

}  // namespace

TEST_CASE("hat matrix") {
  CHECK(max_abs_diff(hat_matrix<double>(MatrixXd::Identity(3, 3), 1.0), 0.5 * MatrixXd::Identity(3, 3)) <= 1e-15);
  std::mt19937_64 rng(31);
  const MatrixXd k = random_spd(rng, 5);
  CHECK(max_abs_diff(hat_matrix(k, 1e-12), MatrixXd::Identity(5, 5)) <= 1e-10);
  const MatrixXd oracle = k * dense_inverse(k + 0.3 * MatrixXd::Identity(5, 5));
  CHECK(max_abs_diff(hat_matrix(k, 0.3), oracle) <= 1e-10);
}

TEST_CASE("degrees of freedom") {
  CHECK(degrees_of_freedom<double>(MatrixXd::Identity(4, 4), 1.0) == doctest::Approx(2.0).epsilon(1e-15));
  std::mt19937_64 rng(32);
  const MatrixXd k = random_spd(rng, 6);
  CHECK(degrees_of_freedom(k, 1e12) < 1e-10);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(k);
  for (double gamma : {1e-3, 0.1, 1.0, 10.0}) {
    const double oracle = (es.eigenvalues().array() / (es.eigenvalues().array() + gamma)).sum();
    CHECK(std::abs(degrees_of_freedom(k, gamma) - oracle) <= 1e-10);
  }
}

TEST_CASE("weighted sums of squares") {
  std::mt19937_64 rng(33);
  const MatrixXd k = random_spd(rng, 6);
  const Vector<double> y = random_vector(rng, 6);
  CHECK(wsrr(k, 1e-12, y) < 1e-20);
  CHECK(wsrr(k, 1e12, y) == doctest::Approx(y.squaredNorm()).epsilon(1e-10));
  const MatrixXd h = k * dense_inverse(k + 0.7 * MatrixXd::Identity(6, 6));
  CHECK(std::abs(wsrr(k, 0.7, y) - ((MatrixXd::Identity(6, 6) - h) * y).squaredNorm()) <= 1e-10);

  Vector<double> two(1);
  two << 2.0;
  CHECK(wssu<double>(MatrixXd::Identity(1, 1), 1.0, two) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(wssu<double>(k, 0.5, Vector<double>::Zero(6)) == 0.0);
  const Vector<double> fhat = h * y;
  CHECK(std::abs(wssu(k, 0.7, y) - fhat.dot(dense_inverse(k) * fhat)) <= 1e-8);
}

TEST_CASE("q decreases and WSRR does not decrease along gamma") {
  std::mt19937_64 rng(34);
  for (int rep = 0; rep < 5; ++rep) {
    const auto [k, y] = spline_problem(rng, 15, 0.1);
    double prev_q = std::numeric_limits<double>::infinity(), prev_r = -1.0;
    for (int i = 0; i <= 64; ++i) {
      const double gamma = std::pow(10.0, -8.0 + 0.25 * i);
      const double q = degrees_of_freedom(k, gamma), r = wsrr(k, gamma, y);
      CHECK(q < prev_q);
      CHECK(r >= prev_r * (1.0 - 1e-12));
      prev_q = q;
      prev_r = r;
    }
  }
}

TEST_CASE("empirical Bayes satisfies the fixed point on random spline problems") {
  std::mt19937_64 rng(35);
  int unbracketed = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto [k, y] = spline_problem(rng, 20, 0.05 + 0.01 * rep);
    const auto r = empirical_bayes(k, y);
    CHECK(r.gamma == doctest::Approx(r.sigma2 / r.lambda).epsilon(1e-14));
    if (!has_fixed_point(k, y)) {
      ++unbracketed;
      CHECK_FALSE(r.bracketed);
      CHECK(!r.diagnostics.empty());
      CHECK(std::log10(r.gamma) == doctest::Approx(profile_grid_search(k, y, 2, -8.0, 8.0).log10_gamma));
      continue;
    }
    CHECK(r.bracketed);
    CHECK(r.residual <= 1e-6);
    CHECK(fixed_point_residual(k, y, r) <= 1e-6);
  }
  CHECK(unbracketed <= 2);
}

TEST_CASE("empirical Bayes agrees with a dense profile-likelihood grid") {
  std::mt19937_64 rng(36);
  for (int rep = 0; rep < 3; ++rep) {
    const auto [k, y] = spline_problem(rng, 20, 0.1);
    const auto r = empirical_bayes(k, y);
    const auto grid = profile_grid_search(k, y, 10000, -8.0, 8.0);
    const double spacing = 16.0 / 9999.0;
    CHECK(std::abs(std::log10(r.gamma) - grid.log10_gamma) <= spacing);
    CHECK(r.lambda == doctest::Approx(grid.lambda).epsilon(1e-2));
    CHECK(r.sigma2 == doctest::Approx(grid.sigma2).epsilon(1e-2));
  }
}

TEST_CASE("noise-free data in a low-dimensional feature space give a small noise variance") {
  std::mt19937_64 rng(37);
  const Eigen::Index n = 25;
  const MatrixXd f = testing::random_matrix(rng, n, 2);
  Vector<double> theta(2);
  theta << 1.5, -0.7;
  const Vector<double> y = f * theta;
  const MatrixXd k = gram_matrix(KernelSpec<double>::linear(MatrixXd::Identity(2, 2)), Locations<double>(f));
  const auto r = empirical_bayes(k, y);
  const auto grid = profile_grid_search(k, y, 10000, -8.0, 8.0);
  INFO("gamma " << r.gamma << " sigma2 " << r.sigma2 << " grid sigma2 " << grid.sigma2);
  CHECK(r.sigma2 <= 1e-6 * y.squaredNorm() / n);
  CHECK(grid.sigma2 <= 1e-6 * y.squaredNorm() / n);
  CHECK(std::abs(std::log10(r.gamma) - grid.log10_gamma) <= 0.01);
}

TEST_CASE("empirical Bayes degenerate cases") {
  std::mt19937_64 rng(38);
  const MatrixXd k = random_spd(rng, 5);
  try {
    empirical_bayes<double>(k, Vector<double>::Zero(5));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateData);
  }
  CHECK_THROWS_AS(empirical_bayes<double>(MatrixXd::Identity(1, 1), Vector<double>::Ones(1)), Error);
  CHECK_THROWS_AS(empirical_bayes<double>(k, Vector<double>::Ones(4)), Error);
}

TEST_CASE("endpoint limits of the degrees of freedom") {
  Locations<double> z(20, 1);
  for (Eigen::Index i = 0; i < 20; ++i) z(i, 0) = 0.05 * static_cast<double>(i + 1);
  const MatrixXd k = gram_matrix(KernelSpec<double>::spline(), z);
  const TuningOptions opts;
  CHECK(std::abs(degrees_of_freedom(k, std::pow(10.0, opts.log10_gamma_min)) - 20.0) <= 1e-3);
  CHECK(degrees_of_freedom(k, std::pow(10.0, opts.log10_gamma_max)) <= 1e-3);
}

TEST_CASE("scheduled gamma") {
  CHECK(scheduled_gamma<double>(100, 0.25, 1.0) == doctest::Approx(31.6227766016838).epsilon(1e-14));
  CHECK(scheduled_gamma<double>(1, 0.3, 2.5) == 2.5);
  CHECK_THROWS_AS(scheduled_gamma<double>(10, 0.5, 1.0), Error);
  CHECK_THROWS_AS(scheduled_gamma<double>(10, 0.0, 1.0), Error);
  CHECK_THROWS_AS(scheduled_gamma<double>(10, 0.2, 0.0), Error);

  std::mt19937_64 rng(39);
  const auto [k, y] = spline_problem(rng, 30, 0.1);
  const auto r = schedule_gamma<double>(30, 0.25, 0.1, k, y);
  CHECK(r.gamma == scheduled_gamma<double>(30, 0.25, 0.1));
  CHECK(r.sigma2 / r.lambda == doctest::Approx(r.gamma).epsilon(1e-15));
  CHECK(r.sigma2 == doctest::Approx(wsrr(k, r.gamma, y) / (30.0 - degrees_of_freedom(k, r.gamma))).epsilon(1e-12));
  CHECK_THROWS_AS(schedule_gamma<double>(29, 0.25, 0.1, k, y), Error);
}

TEST_CASE("long double tuning") {
  using LD = long double;
  Matrix<LD> k = Matrix<LD>::Identity(3, 3);
  k(0, 1) = k(1, 0) = 0.2L;
  Vector<LD> y(3);
  y << 1.0L, -0.5L, 2.0L;
  CHECK(std::abs(degrees_of_freedom(k, LD(1)) - hat_matrix(k, LD(1)).trace()) < 1e-18L);
}
