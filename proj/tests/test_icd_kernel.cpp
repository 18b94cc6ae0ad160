#include <Eigen/Eigenvalues>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>
#include <sstream>

#include "icdgp/catalog.hpp"
#include "icdgp/icd_code.hpp"
#include "icdgp/kernel.hpp"
#include "support/test_support.hpp"

using namespace icdgp;
using Catch::Approx;

TEST_CASE("code parsing validates and canonicalizes", "[icd_kernel]") {
  CHECK(parse_code("J301").text() == "J301");
  CHECK(parse_code("d50").text() == "D50");
  CHECK_THROWS_AS(parse_code("301J"), InvalidFirstCharacterError);
  CHECK_THROWS_AS(parse_code(""), EmptyCodeError);
  CHECK_THROWS_AS(parse_code("D5.0"), InvalidCharacterError);
  CHECK(parse_code("A123456").length() == 7);
  CHECK_THROWS_AS(parse_code("A1234567"), CodeTooLongError);
  CHECK_THROWS_AS(parse_code("A123", 3), CodeTooLongError);
}

TEST_CASE("saturated prefixes clamp to the whole code", "[icd_kernel]") {
  const auto code = parse_code("D50");
  CHECK(code.saturated_prefix(1) == "D");
  CHECK(code.saturated_prefix(2) == "D5");
  CHECK(code.saturated_prefix(3) == "D50");
  CHECK(code.saturated_prefix(7) == "D50");
  const auto prefix = saturated_prefix(code, 5);
  CHECK(prefix.position == 5);
  CHECK(prefix.value == "D50");
}

TEST_CASE("base kernel reproduces the worked triple", "[icd_kernel]") {
  const auto lambda = LambdaSpec::identity();
  const auto j301 = parse_code("J301");
  const auto d50 = parse_code("D50");
  const auto d51 = parse_code("D51");
  CHECK(kappa0(j301, d50, lambda, 7) == 0.0);
  CHECK(kappa0(j301, d51, lambda, 7) == 0.0);
  CHECK(kappa0(d50, d51, lambda, 7) == 2.0);
  CHECK(kappa0(d50, d50, lambda, 7) == 7.0);
  CHECK(kappa0(d50, d51, lambda, 7) == kappa0(d51, d50, lambda, 7));

  const auto geometric = LambdaSpec::geometric(0.5);
  CHECK(kappa0(d50, d51, geometric, 7) == Approx(0.75).epsilon(1e-14));
}

TEST_CASE("scalar-diagonal weights key on the prefix value", "[icd_kernel]") {
  const auto lambda = LambdaSpec::scalar_diagonal({{"D", 3.0}, {"D5", 2.0}});
  const auto d50 = parse_code("D50");
  const auto d51 = parse_code("D51");
  // positions 1 and 2 match with weights 3 and 2, the rest default to 1
  CHECK(kappa0(d50, d51, lambda, 7) == Approx(5.0));
  CHECK(kappa0(d50, d50, lambda, 7) == Approx(3.0 + 2.0 + 5.0));
}

TEST_CASE("subset features count saturated prefixes", "[icd_kernel]") {
  CHECK(subset_feature({}, 7).empty());

  const std::vector<IcdCode> single = {parse_code("D50")};
  const auto feature = subset_feature(single, 7);
  CHECK(feature.entries.size() == 7);
  CHECK(feature.entries.at({"D", 1}) == 1);
  CHECK(feature.entries.at({"D5", 2}) == 1);
  for (int pos = 3; pos <= 7; ++pos) CHECK(feature.entries.at({"D50", pos}) == 1);

  const std::vector<IcdCode> pair = {parse_code("D50"), parse_code("D51")};
  const auto pair_feature = subset_feature(pair, 7);
  CHECK(pair_feature.entries.at({"D", 1}) == 2);
  CHECK(pair_feature.entries.at({"D5", 2}) == 2);
  CHECK(pair_feature.entries.at({"D50", 3}) == 1);
  CHECK(pair_feature.entries.at({"D51", 3}) == 1);
}

TEST_CASE("subset kernel sums base kernels over pairs", "[icd_kernel]") {
  const auto lambda = LambdaSpec::identity();
  const std::vector<IcdCode> d50 = {parse_code("D50")};
  const std::vector<IcdCode> d51 = {parse_code("D51")};
  const std::vector<IcdCode> both = {parse_code("D50"), parse_code("D51")};
  CHECK(kappa1(d50, d51, lambda, 7) == 2.0);
  CHECK(kappa1({}, d50, lambda, 7) == 0.0);
  CHECK(kappa1(both, both, lambda, 7) == 18.0);
}

namespace {

ConditionCatalog two_condition_catalog(std::vector<double> weights = {}) {
  std::vector<ConditionCatalog::Condition> conditions;
  conditions.push_back({"ANAEMIA", {parse_code("D50"), parse_code("D51")}});
  conditions.push_back({"ALLERGY", {parse_code("J301"), parse_code("J302")}});
  return ConditionCatalog(std::move(conditions), std::move(weights));
}

}  // namespace

TEST_CASE("condition-weighted kernel", "[icd_kernel]") {
  SECTION("single condition reduces to the base self-value") {
    ConditionCatalog catalog({{"ANAEMIA", {parse_code("D50")}}});
    const auto diagnosis = make_diagnosis(catalog, {{parse_code("D50")}});
    CHECK(kappa2(diagnosis, diagnosis, catalog, LambdaSpec::identity()) == 7.0);
  }
  SECTION("disjoint conditions give zero") {
    auto catalog = two_condition_catalog();
    const auto a = make_diagnosis(catalog, {{parse_code("D50")}, {}});
    const auto b = make_diagnosis(catalog, {{}, {parse_code("J301")}});
    CHECK(kappa2(a, b, catalog, LambdaSpec::identity()) == 0.0);
  }
  SECTION("weights scale per-condition contributions") {
    auto catalog = two_condition_catalog({2.0, 3.0});
    const auto a = make_diagnosis(
        catalog, {{parse_code("D50"), parse_code("D51")}, {parse_code("J301")}});
    const auto b = make_diagnosis(catalog, {{parse_code("D50")}, {parse_code("J302")}});
    const auto lambda = LambdaSpec::identity();
    const double expected =
        2.0 * kappa1(a.per_condition[0], b.per_condition[0], lambda, 7) +
        3.0 * kappa1(a.per_condition[1], b.per_condition[1], lambda, 7);
    CHECK(kappa2(a, b, catalog, lambda) == Approx(expected));
  }
}

TEST_CASE("normalized kernel and distance", "[icd_kernel]") {
  auto catalog = two_condition_catalog();
  const auto lambda = LambdaSpec::identity();
  const auto a = make_diagnosis(catalog, {{parse_code("D50")}, {}});
  const auto b = make_diagnosis(catalog, {{}, {parse_code("J301")}});
  const auto c = make_diagnosis(catalog, {{parse_code("D50"), parse_code("D51")}, {}});

  CHECK(kappa_norm(a, a, catalog, lambda) == 1.0);
  CHECK(kappa_norm(a, b, catalog, lambda) == 0.0);
  CHECK(distance(a, a, catalog, lambda) == 0.0);
  CHECK(distance(a, b, catalog, lambda) == Approx(std::sqrt(2.0)));

  SECTION("weight rescaling cancels") {
    auto scaled = two_condition_catalog({10.0, 10.0});
    CHECK(kappa_norm(a, c, catalog, lambda) ==
          Approx(kappa_norm(a, c, scaled, lambda)).epsilon(1e-12));
  }
  SECTION("empty diagnosis cannot be normalized") {
    const auto empty = make_diagnosis(catalog, {{}, {}});
    CHECK_THROWS_AS(kappa_norm(empty, a, catalog, lambda), ZeroSelfSimilarityError);
    CHECK_THROWS_AS(distance(empty, a, catalog, lambda), ZeroSelfSimilarityError);
  }
  SECTION("distance matches the explicit normalized-feature oracle") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 50; ++trial) {
      auto cohort = icdgp::testing::random_cohort(gen, 2);
      const auto& x = cohort.diagnoses[0];
      const auto& y = cohort.diagnoses[1];
      // oracle: concatenated per-condition features weighted by sqrt(w_c)
      auto normalized_dot = [&](const Diagnosis& s, const Diagnosis& t) {
        double dot = 0.0, ss = 0.0, tt = 0.0;
        for (std::size_t cc = 0; cc < cohort.catalog.size(); ++cc) {
          const double w = cohort.catalog.weights()[cc];
          dot += w * icdgp::testing::feature_dot_oracle(s.per_condition[cc],
                                                        t.per_condition[cc], lambda, 7);
          ss += w * icdgp::testing::feature_dot_oracle(s.per_condition[cc],
                                                       s.per_condition[cc], lambda, 7);
          tt += w * icdgp::testing::feature_dot_oracle(t.per_condition[cc],
                                                       t.per_condition[cc], lambda, 7);
        }
        return dot / std::sqrt(ss * tt);
      };
      const double expected = std::sqrt(
          std::max(0.0, 2.0 - 2.0 * normalized_dot(x, y)));
      CHECK(distance(x, y, cohort.catalog, lambda) == Approx(expected).margin(1e-12));
    }
  }
}

TEST_CASE("prefix-sum kernels equal sparse-feature dot products", "[icd_kernel]") {
  std::mt19937_64 gen(12345);
  const auto lambdas = {LambdaSpec::identity(), LambdaSpec::geometric(0.35),
                        LambdaSpec::scalar_diagonal({{"Q", 2.0}, {"Q0", 0.5}, {"R1", 4.0}})};
  for (int trial = 0; trial < 400; ++trial) {
    for (const auto& lambda : lambdas) {
      const auto a = icdgp::testing::random_code_set(gen, 10);
      const auto b = icdgp::testing::random_code_set(gen, 10);
      const double direct = kappa1(a, b, lambda, 7);
      const double oracle = icdgp::testing::feature_dot_oracle(a, b, lambda, 7);
      CHECK(direct == Approx(oracle).margin(1e-12 * std::max(1.0, std::abs(oracle))));
      if (!a.empty() && !b.empty()) {
        const double k0 = kappa0(a[0], b[0], lambda, 7);
        const std::vector<IcdCode> sa = {a[0]}, sb = {b[0]};
        const double k0_oracle = icdgp::testing::feature_dot_oracle(sa, sb, lambda, 7);
        CHECK(k0 == Approx(k0_oracle).margin(1e-12 * std::max(1.0, std::abs(k0_oracle))));
      }
    }
  }
}

TEST_CASE("kappa2 matches the weighted feature oracle on random cohorts", "[icd_kernel]") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto cohort = icdgp::testing::random_cohort(gen, 2);
    const auto lambda = trial % 2 == 0 ? LambdaSpec::identity() : LambdaSpec::geometric(0.6);
    const auto& a = cohort.diagnoses[0];
    const auto& b = cohort.diagnoses[1];
    double oracle = 0.0;
    for (std::size_t c = 0; c < cohort.catalog.size(); ++c) {
      oracle += cohort.catalog.weights()[c] *
                icdgp::testing::feature_dot_oracle(a.per_condition[c], b.per_condition[c],
                                                   lambda, 7);
    }
    const double direct = kappa2(a, b, cohort.catalog, lambda);
    CHECK(direct == Approx(oracle).margin(1e-12 * std::max(1.0, std::abs(oracle))));
    CHECK(direct == Approx(kappa2(b, a, cohort.catalog, lambda)).margin(1e-14));
  }
}

TEST_CASE("lambda rescaling leaves the normalized kernel invariant", "[icd_kernel]") {
  std::mt19937_64 gen(41);
  auto cohort = icdgp::testing::random_cohort(gen, 6);
  // weight every observed prefix 1 vs 3; the ratio must cancel
  std::map<std::string, double, std::less<>> base_map, scaled_map;
  for (const auto& diagnosis : cohort.diagnoses) {
    for (const auto& set : diagnosis.per_condition) {
      for (const auto& code : set) {
        for (int pos = 1; pos <= 7; ++pos) {
          base_map.emplace(std::string(code.saturated_prefix(pos)), 1.0);
          scaled_map.emplace(std::string(code.saturated_prefix(pos)), 3.0);
        }
      }
    }
  }
  const auto lambda_1 = LambdaSpec::scalar_diagonal(base_map);
  const auto lambda_3 = LambdaSpec::scalar_diagonal(scaled_map);
  for (std::size_t i = 0; i + 1 < cohort.diagnoses.size(); i += 2) {
    const auto& a = cohort.diagnoses[i];
    const auto& b = cohort.diagnoses[i + 1];
    CHECK(kappa_norm(a, b, cohort.catalog, lambda_1) ==
          Approx(kappa_norm(a, b, cohort.catalog, lambda_3)).epsilon(1e-12));
    CHECK(distance(a, b, cohort.catalog, lambda_1) ==
          Approx(distance(a, b, cohort.catalog, lambda_3)).margin(1e-12));
  }
}

TEST_CASE("kernel family evaluations", "[icd_kernel]") {
  auto catalog = two_condition_catalog();
  const auto a = make_diagnosis(catalog, {{parse_code("D50")}, {}});
  const auto b = make_diagnosis(catalog, {{}, {parse_code("J301")}});

  KernelSpec se = KernelSpec::squared_exponential(1.0, 1.0);
  CHECK(kernel_eval(a, a, se, catalog) == Approx(1.0));

  KernelSpec poly{LambdaSpec::identity(), PolynomialKernel{1, 1.0}};
  CHECK(kernel_eval(a, b, poly, catalog) == Approx(1.0));

  KernelSpec exp_kernel{LambdaSpec::identity(), GammaExponentialKernel{1.0, 2.0, 0.5}};
  CHECK(kernel_eval(a, b, exp_kernel, catalog) ==
        Approx(2.0 * std::exp(-0.5 * std::sqrt(2.0))).epsilon(1e-12));

  KernelSpec raw{LambdaSpec::identity(), Kappa2Raw{}};
  CHECK(kernel_eval(a, b, raw, catalog) == 0.0);

  KernelSpec matern_half{LambdaSpec::identity(), MaternKernel{0.5, 1.5, 2.0}};
  const double d = distance(a, b, catalog, LambdaSpec::identity());
  CHECK(kernel_eval(a, b, matern_half, catalog) ==
        Approx(1.5 * std::exp(-std::sqrt(2.0 * 0.5) * 2.0 * d)).epsilon(1e-12));

  KernelSpec bad{LambdaSpec::identity(), MaternKernel{2.0, 1.0, 1.0}};
  CHECK_THROWS_AS(kernel_eval(a, b, bad, catalog), InputError);
}

TEST_CASE("default weights are proportional to condition self-similarity", "[icd_kernel]") {
  SECTION("single condition normalizes to one") {
    ConditionCatalog catalog({{"ONLY", {parse_code("D50")}}});
    const auto weights = default_weights(catalog, LambdaSpec::identity());
    REQUIRE(weights.size() == 1);
    CHECK(weights[0] == Approx(1.0));
  }
  SECTION("self-values 18 and 36 rescale to sum two") {
    // {D50,D51} has self-value 18; {J301,J302} has 7+7+3+3+... compute directly
    auto catalog = two_condition_catalog();
    const auto lambda = LambdaSpec::identity();
    const double k1 = kappa1(catalog.condition(0).codes, catalog.condition(0).codes, lambda, 7);
    const double k2 = kappa1(catalog.condition(1).codes, catalog.condition(1).codes, lambda, 7);
    const auto weights = default_weights(catalog, lambda);
    CHECK(weights[0] == Approx(2.0 * k1 / (k1 + k2)));
    CHECK(weights[1] == Approx(2.0 * k2 / (k1 + k2)));
    CHECK(weights[0] + weights[1] == Approx(2.0));
  }
  SECTION("equal self-values give uniform weights") {
    ConditionCatalog catalog({{"A", {parse_code("D50")}}, {"B", {parse_code("E50")}}});
    const auto weights = default_weights(catalog, LambdaSpec::identity());
    CHECK(weights[0] == Approx(1.0));
    CHECK(weights[1] == Approx(1.0));
  }
}

TEST_CASE("gram matrices are symmetric and positive semi-definite", "[icd_kernel]") {
  SECTION("single diagnosis diagonal equals sigma2") {
    auto catalog = two_condition_catalog();
    const std::vector<Diagnosis> one = {make_diagnosis(catalog, {{parse_code("D50")}, {}})};
    const auto gram = gram_matrix(one, KernelSpec::squared_exponential(3.0, 1.0), catalog);
    REQUIRE(gram.rows() == 1);
    CHECK(gram(0, 0) == Approx(3.0));
  }
  SECTION("identical diagnoses give a constant matrix") {
    auto catalog = two_condition_catalog();
    const auto diagnosis = make_diagnosis(catalog, {{parse_code("D50")}, {}});
    const std::vector<Diagnosis> two = {diagnosis, diagnosis};
    const auto gram = gram_matrix(two, KernelSpec::squared_exponential(1.0, 1.0), catalog);
    CHECK(gram(0, 0) == Approx(1.0));
    CHECK(gram(0, 1) == Approx(1.0));
    CHECK(gram(1, 0) == Approx(1.0));
    CHECK(gram(1, 1) == Approx(1.0));
  }
  SECTION("random cohorts stay PSD across the family") {
    std::mt19937_64 gen(2024);
    const std::vector<KernelSpec> specs = {
        KernelSpec{LambdaSpec::identity(), Kappa2Raw{}},
        KernelSpec{LambdaSpec::identity(), KappaNormalized{}},
        KernelSpec{LambdaSpec::identity(), PolynomialKernel{3, 0.8}},
        KernelSpec{LambdaSpec::identity(), GammaExponentialKernel{1.0, 1.2, 0.7}},
        KernelSpec{LambdaSpec::identity(), GammaExponentialKernel{2.0, 1.0, 1.0}},
        KernelSpec{LambdaSpec::geometric(0.5), GammaExponentialKernel{1.5, 1.0, 1.0}},
        KernelSpec{LambdaSpec::identity(), MaternKernel{1.5, 1.0, 1.0}},
        KernelSpec{LambdaSpec::identity(), MaternKernel{2.5, 2.0, 0.5}}};
    for (int trial = 0; trial < 10; ++trial) {
      auto cohort = icdgp::testing::random_cohort(gen, 20);
      for (const auto& spec : specs) {
        const auto gram = gram_matrix(cohort.diagnoses, spec, cohort.catalog);
        CHECK(gram.isApprox(gram.transpose(), 0.0));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigs(gram);
        const double min_eig = eigs.eigenvalues().minCoeff();
        const double max_eig = eigs.eigenvalues().maxCoeff();
        CHECK(min_eig >= -1e-8 * std::max(max_eig, 1.0));
      }
    }
  }
}

TEST_CASE("metric axioms hold on sampled triples", "[icd_kernel]") {
  std::mt19937_64 gen(5150);
  for (int trial = 0; trial < 60; ++trial) {
    auto cohort = icdgp::testing::random_cohort(gen, 3);
    const auto& catalog = cohort.catalog;
    const auto lambda = LambdaSpec::identity();
    const auto& a = cohort.diagnoses[0];
    const auto& b = cohort.diagnoses[1];
    const auto& c = cohort.diagnoses[2];
    const double dab = distance(a, b, catalog, lambda);
    const double dbc = distance(b, c, catalog, lambda);
    const double dac = distance(a, c, catalog, lambda);
    CHECK(distance(a, a, catalog, lambda) == 0.0);
    CHECK(dab == Approx(distance(b, a, catalog, lambda)).margin(1e-14));
    CHECK(dac <= dab + dbc + 1e-12);
    CHECK(dab >= 0.0);
    CHECK(dab <= std::sqrt(2.0) + 1e-12);
    const double k = kappa_norm(a, b, catalog, lambda);
    CHECK(k >= 0.0);
    CHECK(k <= 1.0 + 1e-12);
  }
}

TEST_CASE("pairwise distance matrix agrees with the scalar route", "[icd_kernel]") {
  std::mt19937_64 gen(808);
  auto cohort = icdgp::testing::random_cohort(gen, 12);
  const auto lambda = LambdaSpec::identity();
  const auto dist = distance_matrix(cohort.diagnoses, cohort.catalog, lambda);
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    for (Eigen::Index j = 0; j < dist.cols(); ++j) {
      const double expected = distance(cohort.diagnoses[static_cast<std::size_t>(i)],
                                       cohort.diagnoses[static_cast<std::size_t>(j)],
                                       cohort.catalog, lambda);
      CHECK(dist(i, j) == Approx(expected).margin(1e-12));
    }
  }
}

TEST_CASE("condition assignment partitions and reports", "[icd_kernel]") {
  auto catalog = two_condition_catalog();
  SECTION("codes land in their conditions") {
    const std::vector<IcdCode> codes = {parse_code("D50"), parse_code("D51")};
    const auto result = assign_to_conditions(codes, catalog);
    CHECK(result.diagnosis.per_condition[0].size() == 2);
    CHECK(result.diagnosis.per_condition[1].empty());
    CHECK(result.unmatched.empty());
  }
  SECTION("overlapping catalogs duplicate the code") {
    ConditionCatalog overlap(
        {{"FIRST", {parse_code("D50")}}, {"SECOND", {parse_code("D50"), parse_code("D51")}}});
    const std::vector<IcdCode> codes = {parse_code("D50")};
    const auto result = assign_to_conditions(codes, overlap);
    CHECK(result.diagnosis.per_condition[0].size() == 1);
    CHECK(result.diagnosis.per_condition[1].size() == 1);
  }
  SECTION("unmatched codes are reported, not dropped") {
    const std::vector<IcdCode> codes = {parse_code("Z999")};
    const auto result = assign_to_conditions(codes, catalog);
    CHECK(result.diagnosis.per_condition[0].empty());
    CHECK(result.diagnosis.per_condition[1].empty());
    REQUIRE(result.unmatched.size() == 1);
    CHECK(result.unmatched[0].text() == "Z999");
  }
}

TEST_CASE("catalog CSV round trip preserves order and quoting", "[icd_kernel]") {
  std::vector<ConditionCatalog::Condition> conditions;
  conditions.push_back({"COPD, EMPHYSEMA, CHRONIC BRONCHITIS",
                        {parse_code("J44"), parse_code("J439")}});
  conditions.push_back({"ALLERGY", {parse_code("J301")}});
  ConditionCatalog catalog(std::move(conditions));
  std::stringstream buffer;
  catalog.write_csv(buffer);
  const auto parsed = ConditionCatalog::read_csv(buffer);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed.condition(0).name == "COPD, EMPHYSEMA, CHRONIC BRONCHITIS");
  CHECK(parsed.condition(0).codes.size() == 2);
  CHECK(parsed.condition(1).name == "ALLERGY");
}

TEST_CASE("gram CSV export uses identifiers and full precision", "[icd_kernel]") {
  Eigen::MatrixXd gram(2, 2);
  gram << 1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0;
  std::stringstream buffer;
  const std::vector<std::string> ids = {"p1", "p2"};
  write_gram_csv(buffer, gram, ids);
  std::string line;
  std::getline(buffer, line);
  CHECK(line == "p1,p2");
  std::getline(buffer, line);
  CHECK(line == "1,0.33333333333333331");
}
