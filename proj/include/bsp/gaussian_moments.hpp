#ifndef BSP_GAUSSIAN_MOMENTS_HPP
#define BSP_GAUSSIAN_MOMENTS_HPP

/**
 * @file
 * @brief Posterior moments of the multistep predictor matrices.
 *
 * For theta ~ N(mu, Sigma) the controller needs E[A^T Q A], E[A^T],
 * E[A^T Q B] and E[A^T Q C]. closed_form_moments() covers m = 1, T = 2 with
 * diagonal Q through non-central Gaussian moments; monte_carlo_moments()
 * handles any (m, T, Q) by seeded sampling.
 */

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <random>
#include <thread>
#include <utility>
#include <vector>

#include "bsp/error.hpp"
#include "bsp/gp_regression.hpp"
#include "bsp/linear_predictor.hpp"
#include "bsp/random.hpp"
#include "bsp/types.hpp"

namespace bsp {

enum class MomentSource { ClosedForm, MonteCarlo, PlugIn };

inline std::string_view to_string(MomentSource s) {
  switch (s) {
    case MomentSource::ClosedForm: return "closed_form";
    case MomentSource::MonteCarlo: return "monte_carlo";
    case MomentSource::PlugIn: return "plug_in";
  }
  return "unknown";
}

template <typename Scalar>
struct PredictorMoments {
  Matrix<Scalar> e_AtQA;  ///< T x T
  Matrix<Scalar> e_At;    ///< T x T
  Matrix<Scalar> e_AtQB;  ///< T x m
  Matrix<Scalar> e_AtQC;  ///< T x (m - 1)

  /// Monte Carlo standard errors of each entry; zero for exact sources.
  Matrix<Scalar> se_AtQA;
  Matrix<Scalar> se_At;
  Matrix<Scalar> se_AtQB;
  Matrix<Scalar> se_AtQC;

  MomentSource source = MomentSource::ClosedForm;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;

  Eigen::Index horizon() const noexcept { return e_AtQA.rows(); }
  Eigen::Index memory() const noexcept { return e_AtQB.cols(); }

  void zero_errors() {
    se_AtQA.setZero(e_AtQA.rows(), e_AtQA.cols());
    se_At.setZero(e_At.rows(), e_At.cols());
    se_AtQB.setZero(e_AtQB.rows(), e_AtQB.cols());
    se_AtQC.setZero(e_AtQC.rows(), e_AtQC.cols());
  }
};

namespace detail {

template <typename Scalar>
void check_weight(const Matrix<Scalar>& q, Eigen::Index horizon, const char* who) {
  detail::require(q.rows() == horizon && q.cols() == horizon, ErrorCode::DimensionMismatch,
                  std::string(who) + ": Q must be T x T");
  const Scalar scale = std::max(Scalar(1), q.cwiseAbs().maxCoeff());
  detail::require((q - q.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-12) * scale, ErrorCode::InvalidArgument,
                  std::string(who) + ": Q is not symmetric");
}

}  // namespace detail

/// Exact moments of the degenerate belief concentrated at `coeffs`.
template <typename Scalar>
PredictorMoments<Scalar> plugin_moments(const PredictorCoefficients<Scalar>& coeffs, const Matrix<Scalar>& q,
                                        Eigen::Index horizon) {
  detail::check_weight(q, horizon, "plugin_moments");
  const auto mats = build_multistep(coeffs, horizon);
  const Matrix<Scalar> qa = q * mats.A;
  PredictorMoments<Scalar> out;
  out.e_AtQA = mats.A.transpose() * qa;
  out.e_At = mats.A.transpose();
  out.e_AtQB = qa.transpose() * mats.B;
  out.e_AtQC = qa.transpose() * mats.C;
  out.source = MomentSource::PlugIn;
  out.zero_errors();
  return out;
}

/**
 * @brief Non-central Gaussian moments for m = 1, T = 2, Q = diag(q1, q2).
 *
 * With rows r1 = [t1, 0] and r2 = [t2 t1, t1] of A and B = [t2, t2^2]^T,
 * A^T Q A = q1 r1^T r1 + q2 r2^T r2 and A^T Q B = q1 t2 r1^T + q2 t2^2 r2^T,
 * so each entry is a weighted sum of E[t1^2], E[t1^2 t2], E[t1^2 t2^2],
 * E[t1 t2], E[t1 t2^2] and E[t1 t2^3].
 */
template <typename Scalar>
PredictorMoments<Scalar> closed_form_moments(const ThetaBelief<Scalar>& belief, const Matrix<Scalar>& q) {
  detail::require(belief.dimension() == 2, ErrorCode::Unsupported,
                  "closed_form_moments: only memory m = 1 (two coefficients) is supported");
  detail::require(q.rows() == 2 && q.cols() == 2, ErrorCode::Unsupported,
                  "closed_form_moments: only horizon T = 2 is supported");
  detail::require(q(0, 1) == Scalar(0) && q(1, 0) == Scalar(0), ErrorCode::Unsupported,
                  "closed_form_moments: Q must be diagonal");
  detail::require(q(0, 0) >= Scalar(0) && q(1, 1) >= Scalar(0), ErrorCode::InvalidArgument,
                  "closed_form_moments: Q must be positive semidefinite");

  const Scalar m1 = belief.mean()(0), m2 = belief.mean()(1);
  const Scalar s1 = belief.covariance()(0, 0), s2 = belief.covariance()(1, 1);
  const Scalar s12 = belief.covariance()(0, 1);
  const Scalar q1 = q(0, 0), q2 = q(1, 1);

  const Scalar e_t1t1 = m1 * m1 + s1;
  const Scalar e_t1t2 = m1 * m2 + s12;
  const Scalar e_t1t1t2 = m1 * m1 * m2 + Scalar(2) * m1 * s12 + m2 * s1;
  const Scalar e_t1t1t2t2 = m1 * m1 * m2 * m2 + s1 * s2 + s1 * m2 * m2 + s2 * m1 * m1 + Scalar(2) * s12 * s12 +
                            Scalar(4) * m1 * m2 * s12;
  const Scalar e_t1t2t2 = m2 * m2 * m1 + Scalar(2) * m2 * s12 + s2 * m1;
  const Scalar e_t1t2t2t2 =
      Scalar(3) * s2 * s12 + Scalar(3) * m2 * m2 * s12 + m1 * (m2 * m2 * m2 + Scalar(3) * m2 * s2);

  PredictorMoments<Scalar> out;
  out.e_At.resize(2, 2);
  out.e_At << m1, e_t1t2, Scalar(0), m1;

  out.e_AtQA.resize(2, 2);
  out.e_AtQA(0, 0) = q1 * e_t1t1 + q2 * e_t1t1t2t2;
  out.e_AtQA(0, 1) = q2 * e_t1t1t2;
  out.e_AtQA(1, 0) = out.e_AtQA(0, 1);
  out.e_AtQA(1, 1) = q2 * e_t1t1;

  out.e_AtQB.resize(2, 1);
  out.e_AtQB(0, 0) = q1 * e_t1t2 + q2 * e_t1t2t2t2;
  out.e_AtQB(1, 0) = q2 * e_t1t2t2;

  out.e_AtQC.resize(2, 0);
  out.source = MomentSource::ClosedForm;
  out.zero_errors();
  return out;
}

/// Draws theta = mean + L z with L L^T = covariance.
template <typename Scalar>
class GaussianSampler {
 public:
  explicit GaussianSampler(const ThetaBelief<Scalar>& belief) : mean_(belief.mean()) {
    const Eigen::Index p = belief.dimension();
    degenerate_ = belief.is_degenerate();
    if (degenerate_) {
      factor_.setZero(p, p);
      return;
    }
    Eigen::LLT<Matrix<Scalar>> llt(belief.covariance());
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      return;
    }
    // Singular PSD covariance: symmetric square root.
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(belief.covariance());
    detail::require(es.info() == Eigen::Success, ErrorCode::FactorizationFailure,
                    "gaussian sampler: covariance factorization failed");
    factor_ = es.eigenvectors() * es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal();
  }

  bool degenerate() const noexcept { return degenerate_; }
  Eigen::Index dimension() const noexcept { return mean_.size(); }

  template <typename Engine>
  void draw(Engine& engine, std::normal_distribution<Scalar>& normal, Vector<Scalar>& z, Vector<Scalar>& out) const {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(engine);
    out = mean_;
    out.noalias() += factor_ * z;
  }

 private:
  Vector<Scalar> mean_;
  Matrix<Scalar> factor_;
  bool degenerate_ = false;
};

struct MonteCarloOptions {
  std::uint64_t samples = 100000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Samples per independent substream; fixes the reduction order.
  std::uint64_t block_size = 8192;
};

/**
 * @brief Sample averages of A^T Q A, A^T, A^T Q B, A^T Q C under theta ~ belief.
 *
 * Samples are split into fixed-size blocks, each drawn from its own substream
 * of the seed, and block statistics are merged in block order. The result is
 * bitwise independent of the thread count. A zero covariance short-circuits
 * to the exact plug-in moments.
 */
template <typename Scalar>
PredictorMoments<Scalar> monte_carlo_moments(const ThetaBelief<Scalar>& belief, const Matrix<Scalar>& q,
                                             Eigen::Index horizon, Eigen::Index memory,
                                             const MonteCarloOptions& opts) {
  detail::require(opts.samples >= 1, ErrorCode::InvalidArgument, "monte_carlo_moments: samples must be >= 1");
  detail::require(opts.block_size >= 1, ErrorCode::InvalidArgument, "monte_carlo_moments: block size must be >= 1");
  detail::require(memory >= 1 && belief.dimension() == 2 * memory, ErrorCode::DimensionMismatch,
                  "monte_carlo_moments: belief dimension must equal 2m");
  detail::require(horizon >= 1, ErrorCode::InvalidArgument, "monte_carlo_moments: horizon must be >= 1");
  detail::check_weight(q, horizon, "monte_carlo_moments");

  const GaussianSampler<Scalar> sampler(belief);
  if (sampler.degenerate()) {
    auto out = plugin_moments(PredictorCoefficients<Scalar>(belief.mean()), q, horizon);
    out.source = MomentSource::MonteCarlo;
    out.samples = opts.samples;
    out.seed = opts.seed;
    return out;
  }

  const Eigen::Index t = horizon, m = memory;
  const Eigen::Index n_qa = t * t, n_at = t * t, n_qb = t * m, n_qc = t * (m - 1);
  const Eigen::Index width = n_qa + n_at + n_qb + n_qc;

  struct Block {
    std::uint64_t count = 0;
    Vector<Scalar> mean;
    Vector<Scalar> m2;
  };
  const std::uint64_t n_blocks = (opts.samples + opts.block_size - 1) / opts.block_size;
  std::vector<Block> blocks(n_blocks);

  auto run_block = [&](std::uint64_t b) {
    const std::uint64_t begin = b * opts.block_size;
    const std::uint64_t end = std::min(opts.samples, begin + opts.block_size);
    auto engine = substream_engine(opts.seed, Stream::MomentSamples, b);
    std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));

    Vector<Scalar> z(sampler.dimension()), theta(sampler.dimension());
    MultistepMatrices<Scalar> mats;
    Matrix<Scalar> qa(t, t), ata(t, t), atqb(t, m), atqc(t, m - 1);
    Vector<Scalar> x(width), delta(width);
    Block blk;
    blk.mean.setZero(width);
    blk.m2.setZero(width);
    for (std::uint64_t s = begin; s < end; ++s) {
      sampler.draw(engine, normal, z, theta);
      build_multistep_into(PredictorCoefficients<Scalar>(theta), t, mats);
      qa.noalias() = q * mats.A;
      ata.noalias() = mats.A.transpose() * qa;
      atqb.noalias() = qa.transpose() * mats.B;
      if (m > 1) atqc.noalias() = qa.transpose() * mats.C;

      x.segment(0, n_qa) = ata.reshaped();
      x.segment(n_qa, n_at) = mats.A.transpose().reshaped();
      x.segment(n_qa + n_at, n_qb) = atqb.reshaped();
      if (n_qc > 0) x.segment(n_qa + n_at + n_qb, n_qc) = atqc.reshaped();

      ++blk.count;
      delta = x - blk.mean;
      blk.mean += delta / static_cast<Scalar>(blk.count);
      blk.m2.array() += delta.array() * (x - blk.mean).array();
    }
    blocks[b] = std::move(blk);
  };

  const unsigned n_threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(n_blocks)));
  if (n_threads == 1) {
    for (std::uint64_t b = 0; b < n_blocks; ++b) run_block(b);
  } else {
    std::atomic<std::uint64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) {
      pool.emplace_back([&] {
        for (std::uint64_t b = next++; b < n_blocks; b = next++) run_block(b);
      });
    }
    for (auto& th : pool) th.join();
  }

  // Chan et al. pairwise merge, in block order.
  Block total = std::move(blocks[0]);
  for (std::uint64_t b = 1; b < n_blocks; ++b) {
    const Block& other = blocks[b];
    const auto na = static_cast<Scalar>(total.count), nb = static_cast<Scalar>(other.count);
    const Vector<Scalar> delta = other.mean - total.mean;
    total.count += other.count;
    const auto n = static_cast<Scalar>(total.count);
    total.mean += delta * (nb / n);
    total.m2.array() += other.m2.array() + delta.array().square() * (na * nb / n);
  }

  Vector<Scalar> se = Vector<Scalar>::Zero(width);
  if (total.count > 1) {
    const auto n = static_cast<Scalar>(total.count);
    se = (total.m2.array() / (n - Scalar(1)) / n).cwiseMax(Scalar(0)).sqrt().matrix();
  }

  auto unpack = [&](const Vector<Scalar>& v, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
    Matrix<Scalar> out(rows, cols);
    if (rows * cols > 0) out.reshaped() = v.segment(offset, rows * cols);
    return out;
  };

  PredictorMoments<Scalar> out;
  out.e_AtQA = unpack(total.mean, 0, t, t);
  out.e_AtQA = (Scalar(0.5) * (out.e_AtQA + out.e_AtQA.transpose())).eval();
  out.e_At = unpack(total.mean, n_qa, t, t);
  out.e_AtQB = unpack(total.mean, n_qa + n_at, t, m);
  out.e_AtQC = unpack(total.mean, n_qa + n_at + n_qb, t, m - 1);
  out.se_AtQA = unpack(se, 0, t, t);
  out.se_At = unpack(se, n_qa, t, t);
  out.se_AtQB = unpack(se, n_qa + n_at, t, m);
  out.se_AtQC = unpack(se, n_qa + n_at + n_qb, t, m - 1);
  out.source = MomentSource::MonteCarlo;
  out.samples = opts.samples;
  out.seed = opts.seed;
  return out;
}

}  // namespace bsp

#endif  // BSP_GAUSSIAN_MOMENTS_HPP
