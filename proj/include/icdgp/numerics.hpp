#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "icdgp/errors.hpp"
#include "icdgp/rng.hpp"

namespace icdgp {

/// Relative jitter ladder applied to the diagonal until a Cholesky
/// factorization succeeds.
inline constexpr std::array<double, 5> kJitterLadder = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};

struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter_used = 0.0;

  double log_det() const {
    return 2.0 * lower.diagonal().array().log().sum();
  }

  /// L^{-1} b
  Eigen::VectorXd forward_solve(const Eigen::VectorXd& b) const {
    return lower.triangularView<Eigen::Lower>().solve(b);
  }

  /// (L L^T)^{-1} b
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = lower.triangularView<Eigen::Lower>().solve(b);
    lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
  }
};

namespace detail {

/// In-place lower Cholesky; returns false if a pivot fails. On failure the
/// buffer contents are unspecified and must be rebuilt.
inline bool try_cholesky_in_place(Eigen::MatrixXd& buffer) {
  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(buffer);
  return llt.info() == Eigen::Success && buffer.diagonal().allFinite();
}

/// Scale for the relative jitter ladder: mean diagonal, falling back to 1
/// for zero or non-positive diagonals.
inline double jitter_scale(const Eigen::MatrixXd& matrix) {
  const double mean_diag = matrix.diagonal().mean();
  return mean_diag > 0.0 ? mean_diag : 1.0;
}

}  // namespace icdgp::detail

/// Factors A + jitter*I, escalating jitter through the relative ladder, and
/// records the jitter that succeeded.
inline CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols())
    throw DimensionMismatchError("Cholesky input must be square");
  if (!matrix.allFinite()) throw NotPositiveDefiniteError();
  const double scale = detail::jitter_scale(matrix);
  for (double level : kJitterLadder) {
    const double jitter = level * scale;
    Eigen::MatrixXd buffer = matrix;
    buffer.diagonal().array() += jitter;
    if (detail::try_cholesky_in_place(buffer)) {
      buffer.triangularView<Eigen::StrictlyUpper>().setZero();
      return CholeskyFactor{std::move(buffer), jitter};
    }
  }
  throw NotPositiveDefiniteError();
}

struct GlsFit {
  Eigen::VectorXd whitened_response;  // L^{-1} y
  Eigen::MatrixXd whitened_design;    // L^{-1} X
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd fitted;             // whitened-scale fitted values
  double residual_ss = 0.0;
  CholeskyFactor covariance_factor;
};

/// Whitens (y, X) by the Cholesky factor of C and solves the generalized
/// least-squares problem.
inline GlsFit whiten_gls(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& C) {
  if (y.size() != X.rows() || y.size() != C.rows())
    throw DimensionMismatchError("response, design, and covariance sizes differ");
  GlsFit fit;
  fit.covariance_factor = cholesky_with_jitter(C);
  const auto L = fit.covariance_factor.lower.triangularView<Eigen::Lower>();
  fit.whitened_response = L.solve(y);
  fit.whitened_design = L.solve(X);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(fit.whitened_design);
  if (qr.rank() < X.cols()) throw RankDeficientDesignError();
  fit.beta_hat = qr.solve(fit.whitened_response);
  fit.fitted = fit.whitened_design * fit.beta_hat;
  fit.residual_ss = (fit.whitened_response - fit.fitted).squaredNorm();
  return fit;
}

inline Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean,
                                  const CholeskyFactor& factor, RngStream& rng) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + factor.lower.triangularView<Eigen::Lower>() * z;
}

inline Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean,
                                  const Eigen::MatrixXd& covariance, RngStream& rng) {
  if (mean.size() != covariance.rows())
    throw DimensionMismatchError("mean and covariance sizes differ");
  return mvn_sample(mean, cholesky_with_jitter(covariance), rng);
}

}  // namespace icdgp
