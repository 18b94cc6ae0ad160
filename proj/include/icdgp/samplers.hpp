#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "icdgp/errors.hpp"
#include "icdgp/rng.hpp"

namespace icdgp {

using Vec2 = std::array<double, 2>;

/// Target for elliptical slice sampling over (u1, u2): a centered Gaussian
/// prior with the given standard deviations and an arbitrary log-likelihood.
/// -inf log-likelihood marks rejection regions.
struct EssTarget {
  double prior_sd1 = 1.0;
  double prior_sd2 = 1.0;
  std::function<double(const Vec2&)> log_likelihood;
};

/// One elliptical slice update (Murray, Adams & MacKay, 2010). Tuning-free;
/// leaves prior x exp(log_likelihood) invariant. The bracket shrinks at most
/// 1000 times before giving up.
inline Vec2 ess_step(const Vec2& current, const EssTarget& target, RngStream& rng) {
  const double log_current = target.log_likelihood(current);
  if (!std::isfinite(log_current)) throw NonFiniteLikelihoodAtCurrentError();

  const Vec2 nu = {target.prior_sd1 * rng.normal(), target.prior_sd2 * rng.normal()};
  const double log_y = log_current + std::log(rng.uniform());

  constexpr double tau = 2.0 * std::numbers::pi;
  double theta = rng.uniform(0.0, tau);
  double theta_min = theta - tau;
  double theta_max = theta;

  for (int shrink = 0; shrink < 1000; ++shrink) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const Vec2 proposal = {current[0] * c + nu[0] * s, current[1] * c + nu[1] * s};
    if (target.log_likelihood(proposal) > log_y) return proposal;
    if (theta < 0.0) theta_min = theta;
    else theta_max = theta;
    theta = rng.uniform(theta_min, theta_max);
  }
  throw SliceShrinkLimitError();
}

/// Regression hyperparameter map: phi through a scaled logistic, alpha (the
/// noise-to-signal ratio) through an exponential.
struct RegTransform {
  double phi;
  double alpha;
};

inline RegTransform transform_reg(const Vec2& u, double a_phi, double b_phi) {
  return RegTransform{a_phi + (b_phi - a_phi) / (1.0 + std::exp(-u[0])),
                      std::exp(u[1])};
}

inline Vec2 inverse_transform_reg(double phi, double alpha, double a_phi, double b_phi) {
  const double p = (phi - a_phi) / (b_phi - a_phi);
  return Vec2{std::log(p / (1.0 - p)), std::log(alpha)};
}

/// Classification variant: the second coordinate carries sigma2.
struct ClfTransform {
  double phi;
  double sigma2;
};

inline ClfTransform transform_clf(const Vec2& u, double a_phi, double b_phi) {
  return ClfTransform{a_phi + (b_phi - a_phi) / (1.0 + std::exp(-u[0])),
                      std::exp(u[1])};
}

inline Vec2 inverse_transform_clf(double phi, double sigma2, double a_phi, double b_phi) {
  const double p = (phi - a_phi) / (b_phi - a_phi);
  return Vec2{std::log(p / (1.0 - p)), std::log(sigma2)};
}

namespace detail {

/// log Phi(x), stable far into the left tail via the Mills-ratio expansion.
inline double log_normal_cdf(double x) {
  if (x > -8.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

inline double inverse_gaussian_draw(double mu, double lambda, RngStream& rng) {
  const double nu = rng.normal();
  const double y = nu * nu;
  double x = mu + mu * mu * y / (2.0 * lambda) -
             mu / (2.0 * lambda) * std::sqrt(4.0 * mu * lambda * y + mu * mu * y * y);
  if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
  return x;
}

/// Inverse-Gaussian IG(1/z, 1) conditioned on (0, t).
inline double truncated_inverse_gaussian(double z, double t, RngStream& rng) {
  if (z < 1.0 / t) {
    // mean exceeds the truncation point: chi-square style proposal
    while (true) {
      double e1, e2;
      do {
        e1 = rng.exponential();
        e2 = rng.exponential();
      } while (e1 * e1 > 2.0 * e2 / t);
      const double x = t / ((1.0 + t * e1) * (1.0 + t * e1));
      if (rng.uniform() <= std::exp(-0.5 * z * z * x)) return x;
    }
  }
  while (true) {
    const double x = inverse_gaussian_draw(1.0 / z, 1.0, rng);
    if (x < t) return x;
  }
}

/// Alternating-series coefficients of the Jacobi-type density.
inline double pg_series_coef(int n, double x, double t) {
  const double k = n + 0.5;
  if (x <= t) {
    return std::numbers::pi * k * std::pow(2.0 / (std::numbers::pi * x), 1.5) *
           std::exp(-2.0 * k * k / x);
  }
  return std::numbers::pi * k *
         std::exp(-0.5 * k * k * std::numbers::pi * std::numbers::pi * x);
}

}  // namespace detail

/// Exact Polya-Gamma PG(1, c) draw via the alternating-series accept/reject
/// method of Polson, Scott & Windle (2013) with the two-piece proposal split
/// at t = 0.64 (inverse-Gaussian body, exponential tail).
inline double pg_draw(double c, RngStream& rng) {
  const double z = 0.5 * std::abs(c);
  constexpr double t = 0.64;
  const double rate = std::numbers::pi * std::numbers::pi / 8.0 + 0.5 * z * z;

  // Mass of each proposal piece, in log space to survive large z.
  const double log_p = std::log(std::numbers::pi / (2.0 * rate)) - rate * t;
  const double sqrt_t = std::sqrt(t);
  const double log_q_left = std::numbers::ln2 - z +
                            detail::log_normal_cdf((t * z - 1.0) / sqrt_t);
  const double log_q_right = std::numbers::ln2 + z +
                             detail::log_normal_cdf(-(t * z + 1.0) / sqrt_t);
  const double log_q = std::max(log_q_left, log_q_right) +
                       std::log1p(std::exp(-std::abs(log_q_left - log_q_right)));
  const double prob_exponential = 1.0 / (1.0 + std::exp(log_q - log_p));

  while (true) {
    double x;
    if (rng.uniform() < prob_exponential) {
      x = t + rng.exponential() / rate;
    } else {
      x = detail::truncated_inverse_gaussian(z, t, rng);
    }
    double partial = detail::pg_series_coef(0, x, t);
    const double slice = rng.uniform() * partial;
    int n = 0;
    while (true) {
      ++n;
      if (n & 1) {
        partial -= detail::pg_series_coef(n, x, t);
        if (slice <= partial) return 0.25 * x;
      } else {
        partial += detail::pg_series_coef(n, x, t);
        if (slice > partial) break;
      }
    }
  }
}

/// Moments of PG(1, c), used as test oracles and sanity checks.
inline double pg_mean(double c) {
  if (c == 0.0) return 0.25;
  return std::tanh(0.5 * c) / (2.0 * c);
}

inline double pg_variance(double c) {
  if (c == 0.0) return 1.0 / 24.0;
  const double sech = 1.0 / std::cosh(0.5 * c);
  return (std::sinh(c) - c) * sech * sech / (4.0 * c * c * c);
}

}  // namespace icdgp
