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
#include "icdgp/gp_regression.hpp"
#include "icdgp/kernel.hpp"
#include "icdgp/numerics.hpp"
#include "icdgp/rng.hpp"
#include "icdgp/samplers.hpp"

namespace icdgp {

struct ClassificationData {
  Eigen::VectorXi y;  // 0/1 labels
  Eigen::MatrixXd X;  // first column all ones
  std::vector<Diagnosis> diagnoses;
  Eigen::MatrixXd test_X;
  std::vector<Diagnosis> test_diagnoses;

  void validate() const {
    const auto n = y.size();
    if (n != X.rows() || static_cast<std::size_t>(n) != diagnoses.size())
      throw DimensionMismatchError("training labels, design, and diagnoses sizes differ");
    if (X.cols() < 1 || n < X.cols()) throw InputError("need n >= p >= 1 training rows");
    if (test_X.rows() != static_cast<Eigen::Index>(test_diagnoses.size()) ||
        (test_X.rows() > 0 && test_X.cols() != X.cols()))
      throw DimensionMismatchError("test design and diagnoses sizes differ");
    if (!X.allFinite() || !test_X.allFinite())
      throw InputError("data contain non-finite values");
    if ((X.col(0).array() != 1.0).any() ||
        (test_X.rows() > 0 && (test_X.col(0).array() != 1.0).any()))
      throw InputError("first design column must be the intercept");
    bool has_zero = false, has_one = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (y[i] == 0) has_zero = true;
      else if (y[i] == 1) has_one = true;
      else throw InputError("labels must be 0 or 1");
    }
    if (!has_zero || !has_one) throw SingleClassLabelsError();
  }
};

using ClassificationConfig = RegressionConfig;  // same hyperpriors and schedule

/// Latent augmented state of the logistic chain.
struct AugmentedState {
  Eigen::VectorXd omega;  // Polya-Gamma auxiliaries, positive
  Eigen::VectorXd z;      // pseudo responses (y - 1/2) / omega
  Eigen::VectorXd beta;
  Eigen::VectorXd f;      // latent process at the training points
  double phi = 0.0;
  double sigma2 = 1.0;
};

struct ClassificationDraws {
  std::vector<int> iteration;
  Eigen::MatrixXd beta;    // R x p
  Eigen::VectorXd sigma2;  // R
  Eigen::VectorXd phi;     // R
  Eigen::MatrixXd fstar;   // R x m
  Eigen::MatrixXd ystar;   // R x m, values in {0,1}
  Eigen::MatrixXd pstar;   // R x m, success probabilities
  Eigen::VectorXd train_probability;  // posterior mean Pr(y_i = 1) at the training points
};

/// Log-density of the pseudo responses marginalized over f: z given the rest
/// is N(X beta, sigma2 exp(-phi d^gamma) + Omega^{-1}).
inline double clf_loglik(const Vec2& u, const Eigen::VectorXd& z, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& beta, const Eigen::VectorXd& omega,
                         const Eigen::MatrixXd& powered_distances, double a_phi,
                         double b_phi) {
  const auto [phi, sigma2] = transform_clf(u, a_phi, b_phi);
  Eigen::MatrixXd cov = sigma2 * (-phi * powered_distances.array()).exp();
  cov.diagonal() += omega.cwiseMax(1e-10).cwiseInverse();
  const CholeskyFactor factor = cholesky_with_jitter(cov);
  const Eigen::VectorXd v = factor.forward_solve(z - X * beta);
  return -0.5 * factor.log_det() -
         0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi) -
         0.5 * v.squaredNorm();
}

namespace detail {

/// Exact draw of f ~ N(V Omega r, V), V = K - K C^{-1} K, via Matheron's
/// rule: a joint prior draw corrected by the whitened residual. Identical in
/// distribution to materializing V, one factorization of K instead of two
/// n x n products.
inline Eigen::VectorXd draw_latent_matheron(const Eigen::MatrixXd& kernel,
                                            const CholeskyFactor& kernel_factor,
                                            const Eigen::MatrixXd& czz_lower,
                                            const Eigen::VectorXd& omega,
                                            const Eigen::VectorXd& residual,
                                            RngStream& rng) {
  const Eigen::Index n = residual.size();
  Eigen::VectorXd z1(n), z2(n);
  for (Eigen::Index i = 0; i < n; ++i) z1[i] = rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) z2[i] = rng.normal();
  const Eigen::VectorXd prior_draw =
      kernel_factor.lower.triangularView<Eigen::Lower>() * z1;
  const Eigen::VectorXd noise_draw =
      z2.array() / omega.cwiseMax(1e-10).array().sqrt();
  Eigen::VectorXd s = residual - prior_draw - noise_draw;
  czz_lower.triangularView<Eigen::Lower>().solveInPlace(s);
  czz_lower.transpose().triangularView<Eigen::Upper>().solveInPlace(s);
  return prior_draw + kernel * s;
}

/// Reference implementation materializing V = K - K C^{-1} K with explicit
/// symmetrization; used to cross-check the Matheron draw.
inline Eigen::VectorXd draw_latent_explicit(const Eigen::MatrixXd& kernel,
                                            const Eigen::MatrixXd& czz_lower,
                                            const Eigen::VectorXd& omega,
                                            const Eigen::VectorXd& residual,
                                            RngStream& rng) {
  Eigen::MatrixXd half = kernel;
  czz_lower.triangularView<Eigen::Lower>().solveInPlace(half);
  Eigen::MatrixXd cov = kernel - half.transpose() * half;
  cov = 0.5 * (cov + cov.transpose());
  const Eigen::VectorXd mean =
      cov * (omega.cwiseMax(1e-10).asDiagonal() * residual);
  return mvn_sample(mean, cov, rng);
}

class ClassificationChain {
 public:
  ClassificationChain(const ClassificationData& data, const ConditionCatalog& catalog,
                      const ClassificationConfig& config)
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
    ybar_ = data.y.cast<double>().array() - 0.5;
    factor_.resize(n_, n_);
    proposal_factor_.resize(n_, n_);
    kernel_.resize(n_, n_);
    kernel_factor_.lower.resize(n_, n_);
  }

  ClassificationDraws run() {
    ClassificationDraws draws;
    const int retained = config_.retained();
    draws.iteration.reserve(static_cast<std::size_t>(retained));
    draws.beta.resize(retained, p_);
    draws.sigma2.resize(retained);
    draws.phi.resize(retained);
    draws.fstar.resize(retained, m_);
    draws.ystar.resize(retained, m_);
    draws.pstar.resize(retained, m_);
    draws.train_probability = Eigen::VectorXd::Zero(n_);

    // neutral starting point: prior-mean auxiliaries, zero effects
    state_.omega = Eigen::VectorXd::Constant(n_, 0.25);
    state_.beta = Eigen::VectorXd::Zero(p_);
    state_.f = Eigen::VectorXd::Zero(n_);
    Vec2 u = config_.fixed_u.value_or(Vec2{0.0, 0.0});

    int kept = 0;
    int max_jitter_iterations = 0;
    for (int iter = 1; iter <= config_.iterations; ++iter) {
      try {
        iteration_hit_max_jitter_ = false;
        state_.z = ybar_.array() / state_.omega.cwiseMax(1e-10).array();

        // omega changed since the last factorization
        refactor_current(u);

        // (1) beta given y, omega, phi, sigma2
        const auto L = factor_.triangularView<Eigen::Lower>();
        const Eigen::VectorXd z_white = L.solve(state_.z);
        const Eigen::MatrixXd x_white = L.solve(data_.X);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x_white);
        if (qr.rank() < p_) throw RankDeficientDesignError();
        const Eigen::VectorXd beta_hat = qr.solve(z_white);
        const Eigen::MatrixXd gram = x_white.transpose() * x_white;
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() != Eigen::Success) throw RankDeficientDesignError();
        Eigen::VectorXd zdraw(p_);
        for (Eigen::Index j = 0; j < p_; ++j) zdraw[j] = rng_.normal();
        llt.matrixU().solveInPlace(zdraw);
        state_.beta = beta_hat + zdraw;
        residual_ = state_.z - data_.X * state_.beta;

        // (2) hyperparameters by elliptical slice sampling
        if (!config_.fixed_u) {
          EssTarget target{std::sqrt(config_.b1), std::sqrt(config_.b2),
                           [&](const Vec2& point) { return loglik_cached(u, point); }};
          const Vec2 next = ess_step(u, target, rng_);
          promote(next, u);
          u = next;
        }
        const auto [phi, sigma2] = transform_clf(u, config_.a_phi, config_.b_phi);
        state_.phi = phi;
        state_.sigma2 = sigma2;

        // (3) latent process at the training points
        kernel_.array() = sigma2 * (-phi * dist_train_.array()).exp();
        factor_kernel();
        state_.f = draw_latent_matheron(kernel_, kernel_factor_, factor_, state_.omega,
                                        residual_, rng_);

        // (4) latent process at the test points, (5) predicted labels
        Eigen::VectorXd fstar(m_), pstar(m_), ystar(m_);
        if (m_ > 0) {
          draw_predictions(phi, sigma2, fstar);
          const Eigen::VectorXd linear = data_.test_X * state_.beta + fstar;
          for (Eigen::Index j = 0; j < m_; ++j) {
            pstar[j] = 1.0 / (1.0 + std::exp(-linear[j]));
            ystar[j] = rng_.uniform() < pstar[j] ? 1.0 : 0.0;
          }
        }

        // (6) Polya-Gamma auxiliaries
        const Eigen::VectorXd train_linear = data_.X * state_.beta + state_.f;
        for (Eigen::Index i = 0; i < n_; ++i)
          state_.omega[i] = pg_draw(std::abs(train_linear[i]), rng_);

        const bool keep = iter > config_.burn_in &&
                          (iter - config_.burn_in) % config_.thin == 0;
        if (keep) {
          draws.iteration.push_back(iter);
          draws.beta.row(kept) = state_.beta.transpose();
          draws.sigma2[kept] = sigma2;
          draws.phi[kept] = phi;
          if (m_ > 0) {
            draws.fstar.row(kept) = fstar.transpose();
            draws.ystar.row(kept) = ystar.transpose();
            draws.pstar.row(kept) = pstar.transpose();
          }
          draws.train_probability.array() +=
              (1.0 / (1.0 + (-train_linear.array()).exp()));
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
    if (kept > 0) draws.train_probability /= static_cast<double>(kept);
    return draws;
  }

 private:
  double build_factor(const Vec2& u, Eigen::MatrixXd& buffer) {
    const auto [phi, sigma2] = transform_clf(u, config_.a_phi, config_.b_phi);
    const Eigen::VectorXd inv_omega = state_.omega.cwiseMax(1e-10).cwiseInverse();
    const double scale = sigma2 + inv_omega.mean();
    for (double level : kJitterLadder) {
      buffer.array() = sigma2 * (-phi * dist_train_.array()).exp();
      buffer.diagonal() += inv_omega;
      buffer.diagonal().array() += level * scale;
      if (try_cholesky_in_place(buffer)) {
        if (level == kJitterLadder.back()) iteration_hit_max_jitter_ = true;
        return 2.0 * buffer.diagonal().array().log().sum();
      }
    }
    throw NotPositiveDefiniteError();
  }

  void refactor_current(const Vec2& u) { log_det_ = build_factor(u, factor_); }

  void factor_kernel() {
    const double scale = state_.sigma2;
    for (double level : kJitterLadder) {
      kernel_factor_.lower = kernel_;
      kernel_factor_.lower.diagonal().array() += level * scale;
      kernel_factor_.jitter_used = level * scale;
      if (try_cholesky_in_place(kernel_factor_.lower)) {
        if (level == kJitterLadder.back()) iteration_hit_max_jitter_ = true;
        return;
      }
    }
    throw NotPositiveDefiniteError();
  }

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
    return -0.5 * log_det -
           0.5 * static_cast<double>(n_) * std::log(2.0 * std::numbers::pi) -
           0.5 * v.squaredNorm();
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

  void draw_predictions(double phi, double sigma2, Eigen::VectorXd& fstar) {
    const auto L = factor_.triangularView<Eigen::Lower>();
    Eigen::MatrixXd cross = sigma2 * (-phi * dist_cross_.array()).exp();
    L.solveInPlace(cross);
    const Eigen::VectorXd v = L.solve(residual_);
    const Eigen::VectorXd mean = cross.transpose() * v;
    Eigen::MatrixXd cov = sigma2 * (-phi * dist_test_.array()).exp();
    cov.noalias() -= cross.transpose() * cross;
    const CholeskyFactor cov_factor = cholesky_with_jitter(cov);
    if (cov_factor.jitter_used >= kJitterLadder.back() * jitter_scale(cov))
      iteration_hit_max_jitter_ = true;
    fstar = mvn_sample(mean, cov_factor, rng_);
  }

  const ClassificationData& data_;
  const ClassificationConfig& config_;
  RngStream rng_;
  Eigen::Index n_ = 0, p_ = 0, m_ = 0;
  Eigen::MatrixXd dist_train_, dist_cross_, dist_test_;
  Eigen::VectorXd ybar_;

  Eigen::MatrixXd factor_;
  double log_det_ = 0.0;
  Eigen::MatrixXd proposal_factor_;
  double proposal_log_det_ = 0.0;
  Vec2 proposal_u_{};
  bool has_proposal_ = false;
  bool iteration_hit_max_jitter_ = false;

  Eigen::MatrixXd kernel_;
  CholeskyFactor kernel_factor_;

  AugmentedState state_;
  Eigen::VectorXd residual_;
};

}  // namespace detail

/// Six-step Gibbs cycle with Polya-Gamma augmentation: beta, elliptical
/// slice update of (phi, sigma2), latent process at the training and test
/// points, Bernoulli predictions, then the auxiliaries.
inline ClassificationDraws run_classification_mcmc(const ClassificationData& data,
                                                   const ConditionCatalog& catalog,
                                                   const ClassificationConfig& config) {
  data.validate();
  config.validate();
  detail::ClassificationChain chain(data, catalog, config);
  return chain.run();
}

inline PosteriorSummary summarize_classification(const ClassificationDraws& draws,
                                                 double level = 0.95) {
  if (draws.sigma2.size() < 2) throw TooFewDrawsError();
  PosteriorSummary summary;
  summary.level = level;
  detail::summarize_matrix(summary, draws.beta, "beta_", level);
  detail::summarize_vector(summary, draws.sigma2, "sigma2", level);
  detail::summarize_vector(summary, draws.phi, "phi", level);
  detail::summarize_matrix(summary, draws.pstar, "pstar_", level);
  detail::summarize_matrix(summary, draws.ystar, "ystar_", level);
  return summary;
}

// --- Pseudo patients and marginal associations --------------------------

/// One pseudo patient per condition: the full condition code set and nothing
/// else, sharing a common covariate row.
struct PseudoPatientSet {
  std::vector<Diagnosis> diagnoses;
  Eigen::RowVectorXd x_star;
};

inline PseudoPatientSet pseudo_patient_set(const ConditionCatalog& catalog,
                                           Eigen::RowVectorXd x_star) {
  if (x_star.size() < 1 || x_star[0] != 1.0)
    throw InputError("pseudo-patient covariates must start with the intercept 1");
  PseudoPatientSet set;
  set.x_star = std::move(x_star);
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    if (catalog.condition(c).codes.empty())
      throw EmptyConditionDefinitionError(catalog.condition(c).name);
    Diagnosis diagnosis;
    diagnosis.per_condition.resize(catalog.size());
    diagnosis.per_condition[c] = catalog.condition(c).codes;
    set.diagnoses.push_back(std::move(diagnosis));
  }
  return set;
}

struct AssociationEstimate {
  std::string condition;
  double estimate;
  double lower;
  double upper;
};

/// Posterior mean and equal-tailed interval of Pr(y = 1 | T_c) per condition
/// from the retained pseudo-patient probability draws (one column per
/// condition, catalog order).
inline std::vector<AssociationEstimate> marginal_associations(
    const Eigen::MatrixXd& pseudo_pstar, const ConditionCatalog& catalog,
    double level = 0.95) {
  if (pseudo_pstar.cols() != static_cast<Eigen::Index>(catalog.size()))
    throw DimensionMismatchError("one probability column per condition required");
  if (pseudo_pstar.rows() < 2) throw TooFewDrawsError();
  std::vector<AssociationEstimate> estimates;
  std::vector<double> column(static_cast<std::size_t>(pseudo_pstar.rows()));
  for (Eigen::Index c = 0; c < pseudo_pstar.cols(); ++c) {
    for (Eigen::Index r = 0; r < pseudo_pstar.rows(); ++r)
      column[static_cast<std::size_t>(r)] = pseudo_pstar(r, c);
    const double mean =
        pseudo_pstar.col(c).mean();
    std::sort(column.begin(), column.end());
    estimates.push_back(AssociationEstimate{
        catalog.condition(static_cast<std::size_t>(c)).name, mean,
        quantile_type7(column, 0.5 * (1.0 - level)),
        quantile_type7(column, 1.0 - 0.5 * (1.0 - level))});
  }
  return estimates;
}

}  // namespace icdgp
