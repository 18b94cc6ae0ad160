#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "icdgp/rng.hpp"
#include "icdgp/samplers.hpp"
#include "support/test_support.hpp"

using namespace icdgp;
using Catch::Approx;

TEST_CASE("hyperparameter transforms", "[samplers]") {
  SECTION("regression map") {
    const auto mid = transform_reg({0.0, 0.0}, 0.0, 5.0);
    CHECK(mid.phi == Approx(2.5));
    CHECK(mid.alpha == Approx(1.0));
    const auto saturated = transform_reg({50.0, 0.0}, 0.0, 5.0);
    CHECK(saturated.phi == Approx(5.0).epsilon(1e-12));
    const auto example = transform_reg({std::log(3.0), std::log(2.0)}, 0.0, 5.0);
    CHECK(example.phi == Approx(3.75));
    CHECK(example.alpha == Approx(2.0));
  }
  SECTION("classification map") {
    const auto mid = transform_clf({0.0, 0.0}, 0.0, 5.0);
    CHECK(mid.phi == Approx(2.5));
    CHECK(mid.sigma2 == Approx(1.0));
    const auto four = transform_clf({0.0, std::log(4.0)}, 0.0, 5.0);
    CHECK(four.sigma2 == Approx(4.0));
  }
  SECTION("transforms invert") {
    const Vec2 u = {0.73, -1.21};
    const auto reg = transform_reg(u, 0.0, 5.0);
    const auto u_back = inverse_transform_reg(reg.phi, reg.alpha, 0.0, 5.0);
    CHECK(u_back[0] == Approx(u[0]).margin(1e-10));
    CHECK(u_back[1] == Approx(u[1]).margin(1e-10));
    const auto clf = transform_clf(u, 0.5, 3.0);
    const auto u_clf = inverse_transform_clf(clf.phi, clf.sigma2, 0.5, 3.0);
    CHECK(u_clf[0] == Approx(u[0]).margin(1e-10));
    CHECK(u_clf[1] == Approx(u[1]).margin(1e-10));
  }
}

TEST_CASE("elliptical slice sampling leaves the prior invariant under a flat target",
          "[samplers]") {
  const double sd1 = 1.0, sd2 = std::sqrt(2.0);
  EssTarget target{sd1, sd2, [](const Vec2&) { return 0.0; }};
  RngStream rng(31);
  Vec2 state = {0.0, 0.0};
  const int steps = 10000;
  std::vector<double> first, second;
  first.reserve(steps);
  second.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    state = ess_step(state, target, rng);
    first.push_back(state[0]);
    second.push_back(state[1]);
  }
  const double d1 = icdgp::testing::ks_statistic(
      first, [&](double x) { return icdgp::testing::normal_cdf(x, 0.0, sd1); });
  const double d2 = icdgp::testing::ks_statistic(
      second, [&](double x) { return icdgp::testing::normal_cdf(x, 0.0, sd2); });
  CHECK(icdgp::testing::ks_pvalue(d1, first.size()) > 0.01);
  CHECK(icdgp::testing::ks_pvalue(d2, second.size()) > 0.01);
}

TEST_CASE("elliptical slice sampling matches the conjugate Gaussian posterior",
          "[samplers]") {
  // prior N(0, diag(1, 2)), likelihood N(mu, diag(s1^2, s2^2)) in u:
  // posterior is Gaussian with precision sum and precision-weighted mean
  const double b1 = 1.0, b2 = 2.0;
  const double mu1 = 0.8, mu2 = -0.5, like_v1 = 0.5, like_v2 = 0.25;
  EssTarget target{std::sqrt(b1), std::sqrt(b2), [&](const Vec2& u) {
                     const double r1 = u[0] - mu1;
                     const double r2 = u[1] - mu2;
                     return -0.5 * (r1 * r1 / like_v1 + r2 * r2 / like_v2);
                   }};
  const double post_v1 = 1.0 / (1.0 / b1 + 1.0 / like_v1);
  const double post_m1 = post_v1 * mu1 / like_v1;
  const double post_v2 = 1.0 / (1.0 / b2 + 1.0 / like_v2);
  const double post_m2 = post_v2 * mu2 / like_v2;

  RngStream rng(47);
  Vec2 state = {0.0, 0.0};
  for (int i = 0; i < 500; ++i) state = ess_step(state, target, rng);  // warm up
  std::vector<double> first, second;
  for (int i = 0; i < 10000; ++i) {
    for (int t = 0; t < 3; ++t) state = ess_step(state, target, rng);
    first.push_back(state[0]);
    second.push_back(state[1]);
  }
  const double d1 = icdgp::testing::ks_statistic(first, [&](double x) {
    return icdgp::testing::normal_cdf(x, post_m1, std::sqrt(post_v1));
  });
  const double d2 = icdgp::testing::ks_statistic(second, [&](double x) {
    return icdgp::testing::normal_cdf(x, post_m2, std::sqrt(post_v2));
  });
  CHECK(icdgp::testing::ks_pvalue(d1, first.size()) > 0.01);
  CHECK(icdgp::testing::ks_pvalue(d2, second.size()) > 0.01);
}

TEST_CASE("slice condition confines accepted states", "[samplers]") {
  // likelihood is -inf outside a ball of radius 1.5
  EssTarget target{1.0, 1.0, [](const Vec2& u) {
                     const double r2 = u[0] * u[0] + u[1] * u[1];
                     return r2 <= 2.25 ? 0.0 : -std::numeric_limits<double>::infinity();
                   }};
  RngStream rng(9);
  Vec2 state = {0.1, -0.2};
  for (int i = 0; i < 2000; ++i) {
    state = ess_step(state, target, rng);
    CHECK(state[0] * state[0] + state[1] * state[1] <= 2.25);
  }
}

TEST_CASE("ess requires a finite starting likelihood", "[samplers]") {
  EssTarget target{1.0, 1.0, [](const Vec2&) {
                     return -std::numeric_limits<double>::infinity();
                   }};
  RngStream rng(3);
  CHECK_THROWS_AS(ess_step({0.0, 0.0}, target, rng), NonFiniteLikelihoodAtCurrentError);
}

TEST_CASE("ess replays deterministically", "[samplers]") {
  EssTarget target{1.0, 1.0, [](const Vec2& u) { return -u[0] * u[0] - u[1] * u[1]; }};
  RngStream rng_a(123, 4), rng_b(123, 4);
  Vec2 a = {0.3, 0.3}, b = {0.3, 0.3};
  for (int i = 0; i < 200; ++i) {
    a = ess_step(a, target, rng_a);
    b = ess_step(b, target, rng_b);
    REQUIRE(a == b);
  }
  RngStream rng_c(123, 5);
  Vec2 c = ess_step({0.3, 0.3}, target, rng_c);
  CHECK(c != a);
}

TEST_CASE("polya-gamma moments match the closed forms", "[samplers][pg]") {
  RngStream rng(2718);
  const int draws = 1000000;
  for (double c : {0.0, 0.5, 1.0, 2.0, 5.0}) {
    double sum = 0.0, sum_sq = 0.0, min_draw = 1e300;
    for (int i = 0; i < draws; ++i) {
      const double x = pg_draw(c, rng);
      sum += x;
      sum_sq += x * x;
      min_draw = std::min(min_draw, x);
    }
    const double mean = sum / draws;
    const double variance = sum_sq / draws - mean * mean;
    const double mean_se = std::sqrt(variance / draws);
    CHECK(std::abs(mean - pg_mean(c)) <= 3.0 * mean_se);
    // standard error of the sample variance from the fourth central moment
    RngStream rng_m4(99);
    double m4 = 0.0;
    const int m4_draws = 200000;
    for (int i = 0; i < m4_draws; ++i) {
      const double x = pg_draw(c, rng_m4);
      const double d = x - mean;
      m4 += d * d * d * d;
    }
    m4 /= m4_draws;
    const double var_se = std::sqrt((m4 - variance * variance) / draws);
    CHECK(std::abs(variance - pg_variance(c)) <= 3.0 * var_se);
    CHECK(min_draw > 0.0);
  }
}

TEST_CASE("polya-gamma draws use the magnitude of c and replay deterministically",
          "[samplers][pg]") {
  RngStream rng_a(5), rng_b(5);
  for (int i = 0; i < 1000; ++i) {
    CHECK(pg_draw(1.7, rng_a) == pg_draw(-1.7, rng_b));
  }
  // large tilt stays finite and small
  RngStream rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double x = pg_draw(800.0, rng);
    CHECK(x > 0.0);
    CHECK(x < 0.01);
  }
}
