#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "icdgp/catalog.hpp"
#include "icdgp/errors.hpp"
#include "icdgp/kernel.hpp"
#include "icdgp/metrics.hpp"
#include "icdgp/numerics.hpp"
#include "icdgp/rng.hpp"
#include "icdgp/samplers.hpp"

namespace icdgp {

struct RegressionData {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // first column all ones
  std::vector<Diagnosis> diagnoses;
  Eigen::MatrixXd test_X;
  std::vector<Diagnosis> test_diagnoses;

  void validate() const {
    const auto n = y.size();
    if (n != X.rows() || static_cast<std::size_t>(n) != diagnoses.size())
      throw DimensionMismatchError("training response, design, and diagnoses sizes differ");
    if (X.cols() < 1 || n <= X.cols())
      throw InputError("need n > p >= 1 training rows");
    if (test_X.rows() != static_cast<Eigen::Index>(test_diagnoses.size()) ||
        (test_X.rows() > 0 && test_X.cols() != X.cols()))
      throw DimensionMismatchError("test design and diagnoses sizes differ");
    if (!y.allFinite() || !X.allFinite() || !test_X.allFinite())
      throw InputError("data contain non-finite values");
    if ((X.col(0).array() != 1.0).any() ||
        (test_X.rows() > 0 && (test_X.col(0).array() != 1.0).any()))
      throw InputError("first design column must be the intercept");
  }
};

struct RegressionConfig {
  double a_phi = 0.0;
  double b_phi = 5.0;
  double b1 = 1.0;
  double b2 = 2.0;
  double gamma = 2.0;  // 1 = exponential kernel, 2 = squared exponential
  int iterations = 10000;
  int burn_in = 5000;
  int thin = 5;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  std::optional<Vec2> fixed_u;  // freeze (phi, alpha) at transform_reg(fixed_u)

  void validate() const {
    if (!(0.0 <= a_phi && a_phi < b_phi)) throw InputError("need 0 <= a_phi < b_phi");
    if (!(b1 > 0.0 && b2 > 0.0)) throw InputError("prior variances must be positive");
    if (!(gamma >= 1.0 && gamma <= 2.0)) throw InputError("gamma must lie in [1, 2]");
    if (iterations < 1 || burn_in < 0 || burn_in >= iterations)
      throw InputError("need 0 <= burn_in < iterations");
    if (thin < 1) throw InputError("thin must be >= 1");
  }

  int retained() const { return (iterations - burn_in) / thin; }
};

/// Post burn-in thinned draws; one row per retained iteration.
struct RegressionDraws {
  std::vector<int> iteration;
  Eigen::MatrixXd beta;    // R x p
  Eigen::VectorXd sigma2;  // R
  Eigen::VectorXd phi;     // R
  Eigen::VectorXd tau2;    // R
  Eigen::MatrixXd fstar;   // R x m
  Eigen::MatrixXd ystar;   // R x m
};

namespace detail {

inline double gaussian_marginal_loglik(double log_det, double quad_form, Eigen::Index n,
                                       double sigma2) {
  return -0.5 * log_det -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * sigma2) -
         0.5 * quad_form / sigma2;
}

struct SigmaBetaCore {
  double sigma2;
  Eigen::VectorXd beta;
  Eigen::VectorXd beta_hat;
  double residual_ss;
};

/// Joint flat-prior draw from the whitened regression: scaled inverse
/// chi-square for sigma2, Gaussian for beta.
inline SigmaBetaCore sigma_beta_from_whitened(const Eigen::VectorXd& y_white,
                                              const Eigen::MatrixXd& x_white,
                                              RngStream& rng) {
  const Eigen::Index n = y_white.size();
  const Eigen::Index p = x_white.cols();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x_white);
  if (qr.rank() < p) throw RankDeficientDesignError();
  SigmaBetaCore out;
  out.beta_hat = qr.solve(y_white);
  out.residual_ss = (y_white - x_white * out.beta_hat).squaredNorm();
  if (out.residual_ss <= 1e-12 * std::max(1.0, y_white.squaredNorm()))
    throw DegenerateResidualError();
  out.sigma2 = out.residual_ss / rng.chi_squared(static_cast<double>(n - p));
  const Eigen::MatrixXd gram = x_white.transpose() * x_white;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw RankDeficientDesignError();
  Eigen::VectorXd z(p);
  for (Eigen::Index j = 0; j < p; ++j) z[j] = rng.normal();
  llt.matrixU().solveInPlace(z);
  out.beta = out.beta_hat + std::sqrt(out.sigma2) * z;
  return out;
}

}  // namespace detail

struct SigmaBetaDraw {
  double sigma2;
  Eigen::VectorXd beta;
};

/// Joint draw of (sigma2, beta) given the marginal covariance factor of the
/// whitening matrix C_yy.
inline SigmaBetaDraw draw_sigma_beta(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                     const CholeskyFactor& cyy_factor, RngStream& rng) {
  const auto L = cyy_factor.lower.triangularView<Eigen::Lower>();
  const Eigen::VectorXd y_white = L.solve(y);
  const Eigen::MatrixXd x_white = L.solve(X);
  auto core = detail::sigma_beta_from_whitened(y_white, x_white, rng);
  return SigmaBetaDraw{core.sigma2, std::move(core.beta)};
}

/// Marginal log-likelihood of the transformed hyperparameters: the response
/// with f integrated out is N(X beta, sigma2 {K(phi) + alpha I}), where
/// K(phi) = exp(-phi d^gamma) on the unit-variance correlation scale.
inline double reg_loglik(const Vec2& u, const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& beta, double sigma2,
                         const Eigen::MatrixXd& powered_distances, double a_phi,
                         double b_phi) {
  const auto [phi, alpha] = transform_reg(u, a_phi, b_phi);
  Eigen::MatrixXd cov = (-phi * powered_distances.array()).exp();
  cov.diagonal().array() += alpha;
  const CholeskyFactor factor = cholesky_with_jitter(cov);
  const Eigen::VectorXd v = factor.forward_solve(y - X * beta);
  return detail::gaussian_marginal_loglik(factor.log_det(), v.squaredNorm(), y.size(),
                                          sigma2);
}

namespace detail {

/// Shared workspace for one chain: powered distance blocks plus the cached
/// Cholesky factor of C at the current hyperparameters.
class RegressionChain {
 public:
  RegressionChain(const RegressionData& data, const ConditionCatalog& catalog,
                  const RegressionConfig& config)
      : data_(data), config_(config), rng_(config.seed, config.stream) {
    n_ = data.y.size();
    p_ = data.X.cols();
    m_ = data.test_X.rows();

    std::vector<Diagnosis> all(data.diagnoses.begin(), data.diagnoses.end());
    all.insert(all.end(), data.test_diagnoses.begin(), data.test_diagnoses.end());
    NormalizedFeatureSet features(all, catalog, LambdaSpec::identity());
    auto powered = [&](std::size_t i, std::size_t j) {
      return std::pow(features.feature_distance(i, j), config.gamma);
    };
    dist_train_.resize(n_, n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      dist_train_(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n_; ++j) {
        const double v = powered(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        dist_train_(i, j) = v;
        dist_train_(j, i) = v;
      }
    }
    dist_cross_.resize(n_, m_);
    dist_test_.resize(m_, m_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      const auto tj = static_cast<std::size_t>(n_ + j);
      for (Eigen::Index i = 0; i < n_; ++i)
        dist_cross_(i, j) = powered(static_cast<std::size_t>(i), tj);
      for (Eigen::Index i = 0; i <= j; ++i) {
        const double v = powered(static_cast<std::size_t>(n_ + i), tj);
        dist_test_(i, j) = v;
        dist_test_(j, i) = v;
      }
    }
    factor_.resize(n_, n_);
    proposal_factor_.resize(n_, n_);
  }

  RegressionDraws run() {
    RegressionDraws draws;
    const int retained = config_.retained();
    draws.iteration.reserve(static_cast<std::size_t>(retained));
    draws.beta.resize(retained, p_);
    draws.sigma2.resize(retained);
    draws.phi.resize(retained);
    draws.tau2.resize(retained);
    draws.fstar.resize(retained, m_);
    draws.ystar.resize(retained, m_);

    Vec2 u = config_.fixed_u.value_or(Vec2{0.0, 0.0});
    refactor_current(u);

    int kept = 0;
    int max_jitter_iterations = 0;
    for (int iter = 1; iter <= config_.iterations; ++iter) {
      try {
        iteration_hit_max_jitter_ = false;

        // (1) joint (sigma2, beta) given the marginalized covariance
        const auto L = factor_.triangularView<Eigen::Lower>();
        const Eigen::VectorXd y_white = L.solve(data_.y);
        const Eigen::MatrixXd x_white = L.solve(data_.X);
        auto core = sigma_beta_from_whitened(y_white, x_white, rng_);
        sigma2_ = core.sigma2;
        beta_ = core.beta;
        residual_ = data_.y - data_.X * beta_;

        // (2) hyperparameters by elliptical slice sampling
        if (!config_.fixed_u) {
          EssTarget target{std::sqrt(config_.b1), std::sqrt(config_.b2),
                           [&](const Vec2& point) { return loglik_cached(u, point); }};
          const Vec2 next = ess_step(u, target, rng_);
          promote(next, u);
          u = next;
        }
        const auto [phi, alpha] = transform_reg(u, config_.a_phi, config_.b_phi);
        tau2_ = sigma2_ * alpha;

        // (3) latent process at the test points, (4) predictive responses;
        // part of the cycle, so drawn every iteration
        Eigen::VectorXd fstar(m_), ystar(m_);
        if (m_ > 0) draw_predictions(phi, fstar, ystar);

        const bool keep = iter > config_.burn_in &&
                          (iter - config_.burn_in) % config_.thin == 0;

        if (keep) {
          draws.iteration.push_back(iter);
          draws.beta.row(kept) = beta_.transpose();
          draws.sigma2[kept] = sigma2_;
          draws.phi[kept] = phi;
          draws.tau2[kept] = tau2_;
          if (m_ > 0) {
            draws.fstar.row(kept) = fstar.transpose();
            draws.ystar.row(kept) = ystar.transpose();
          }
          ++kept;
        }

        if (iteration_hit_max_jitter_) ++max_jitter_iterations;
        if (max_jitter_iterations > 0.01 * config_.iterations)
          throw ChainError(iter, "more than 1% of iterations required maximum jitter");
      } catch (const ChainError&) {
        throw;
      } catch (const Error& err) {
        throw ChainError(iter, err.what());
      }
    }
    return draws;
  }

 private:
  /// Builds C = exp(-phi D^gamma) + alpha I into `buffer` and factors it in
  /// place, escalating jitter. Returns the log-determinant.
  double build_factor(const Vec2& u, Eigen::MatrixXd& buffer) {
    const auto [phi, alpha] = transform_reg(u, config_.a_phi, config_.b_phi);
    for (double level : kJitterLadder) {
      buffer.array() = (-phi * dist_train_.array()).exp();
      buffer.diagonal().array() += alpha + level * (1.0 + alpha);
      if (try_cholesky_in_place(buffer)) {
        if (level == kJitterLadder.back()) iteration_hit_max_jitter_ = true;
        return 2.0 * buffer.diagonal().array().log().sum();
      }
    }
    throw NotPositiveDefiniteError();
  }

  void refactor_current(const Vec2& u) { log_det_ = build_factor(u, factor_); }

  /// Likelihood for the slice sampler; the factor of the current state is
  /// reused, proposals are factored into the spare buffer and promoted on
  /// acceptance.
  double loglik_cached(const Vec2& current, const Vec2& point) {
    double log_det;
    const Eigen::MatrixXd* factor;
    if (point == current) {
      log_det = log_det_;
      factor = &factor_;
    } else {
      proposal_log_det_ = build_factor(point, proposal_factor_);
      proposal_u_ = point;
      has_proposal_ = true;
      log_det = proposal_log_det_;
      factor = &proposal_factor_;
    }
    const Eigen::VectorXd v = factor->triangularView<Eigen::Lower>().solve(residual_);
    return gaussian_marginal_loglik(log_det, v.squaredNorm(), n_, sigma2_);
  }

  void promote(const Vec2& accepted, const Vec2& previous) {
    if (accepted == previous) return;
    if (has_proposal_ && proposal_u_ == accepted) {
      factor_.swap(proposal_factor_);
      log_det_ = proposal_log_det_;
    } else {
      refactor_current(accepted);
    }
    has_proposal_ = false;
  }

  void draw_predictions(double phi, Eigen::VectorXd& fstar, Eigen::VectorXd& ystar) {
    const auto L = factor_.triangularView<Eigen::Lower>();
    Eigen::MatrixXd cross = (-phi * dist_cross_.array()).exp();
    L.solveInPlace(cross);
    const Eigen::VectorXd v = L.solve(residual_);
    const Eigen::VectorXd mean = cross.transpose() * v;
    Eigen::MatrixXd cov = (-phi * dist_test_.array()).exp();
    cov.noalias() -= cross.transpose() * cross;
    cov *= sigma2_;
    const CholeskyFactor cov_factor = cholesky_with_jitter(cov);
    if (cov_factor.jitter_used >= kJitterLadder.back() * jitter_scale(cov))
      iteration_hit_max_jitter_ = true;
    fstar = mvn_sample(mean, cov_factor, rng_);
    const double tau = std::sqrt(tau2_);
    ystar = data_.test_X * beta_ + fstar;
    for (Eigen::Index j = 0; j < m_; ++j) ystar[j] += tau * rng_.normal();
  }

  const RegressionData& data_;
  const RegressionConfig& config_;
  RngStream rng_;
  Eigen::Index n_ = 0, p_ = 0, m_ = 0;
  Eigen::MatrixXd dist_train_, dist_cross_, dist_test_;

  Eigen::MatrixXd factor_;           // Cholesky of C at the current u
  double log_det_ = 0.0;
  Eigen::MatrixXd proposal_factor_;  // spare buffer for slice proposals
  double proposal_log_det_ = 0.0;
  Vec2 proposal_u_{};
  bool has_proposal_ = false;
  bool iteration_hit_max_jitter_ = false;

  double sigma2_ = 1.0, tau2_ = 1.0;
  Eigen::VectorXd beta_, residual_;
};

}  // namespace detail

/// Four-step Gibbs cycle: conjugate (sigma2, beta), elliptical slice update
/// of (phi, alpha), then joint prediction of f* and y* at the test points.
inline RegressionDraws run_regression_mcmc(const RegressionData& data,
                                           const ConditionCatalog& catalog,
                                           const RegressionConfig& config) {
  data.validate();
  config.validate();
  detail::RegressionChain chain(data, catalog, config);
  return chain.run();
}

// --- Posterior summaries ------------------------------------------------

struct QuantitySummary {
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct PosteriorSummary {
  double level = 0.95;
  std::vector<std::pair<std::string, QuantitySummary>> quantities;

  const QuantitySummary* find(const std::string& name) const {
    for (const auto& [key, value] : quantities) {
      if (key == name) return &value;
    }
    return nullptr;
  }
};

namespace detail {

inline QuantitySummary summarize_column(std::span<const double> values, double level) {
  QuantitySummary out;
  const auto n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.sd = std::sqrt(ss / (n - 1.0));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  out.lower = quantile_type7(sorted, 0.5 * (1.0 - level));
  out.upper = quantile_type7(sorted, 1.0 - 0.5 * (1.0 - level));
  return out;
}

inline void summarize_matrix(PosteriorSummary& summary, const Eigen::MatrixXd& draws,
                             const std::string& prefix, double level) {
  std::vector<double> column(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    for (Eigen::Index r = 0; r < draws.rows(); ++r)
      column[static_cast<std::size_t>(r)] = draws(r, j);
    summary.quantities.emplace_back(prefix + std::to_string(j + 1),
                                    summarize_column(column, level));
  }
}

inline void summarize_vector(PosteriorSummary& summary, const Eigen::VectorXd& draws,
                             const std::string& name, double level) {
  std::vector<double> column(draws.data(), draws.data() + draws.size());
  summary.quantities.emplace_back(name, summarize_column(column, level));
}

}  // namespace detail

inline PosteriorSummary summarize_regression(const RegressionDraws& draws,
                                             double level = 0.95) {
  if (draws.sigma2.size() < 2) throw TooFewDrawsError();
  PosteriorSummary summary;
  summary.level = level;
  detail::summarize_matrix(summary, draws.beta, "beta_", level);
  detail::summarize_vector(summary, draws.sigma2, "sigma2", level);
  detail::summarize_vector(summary, draws.phi, "phi", level);
  detail::summarize_vector(summary, draws.tau2, "tau2", level);
  detail::summarize_matrix(summary, draws.fstar, "fstar_", level);
  detail::summarize_matrix(summary, draws.ystar, "ystar_", level);
  return summary;
}

/// Equal-tailed per-test-point predictive intervals from the y* draws.
inline std::vector<PredictionInterval> prediction_intervals(const Eigen::MatrixXd& ystar,
                                                            double level = 0.95) {
  std::vector<PredictionInterval> intervals;
  intervals.reserve(static_cast<std::size_t>(ystar.cols()));
  std::vector<double> column(static_cast<std::size_t>(ystar.rows()));
  for (Eigen::Index j = 0; j < ystar.cols(); ++j) {
    for (Eigen::Index r = 0; r < ystar.rows(); ++r)
      column[static_cast<std::size_t>(r)] = ystar(r, j);
    std::sort(column.begin(), column.end());
    intervals.push_back(PredictionInterval{quantile_type7(column, 0.5 * (1.0 - level)),
                                           quantile_type7(column, 1.0 - 0.5 * (1.0 - level))});
  }
  return intervals;
}

}  // namespace icdgp
