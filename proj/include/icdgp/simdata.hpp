#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icdgp/catalog.hpp"
#include "icdgp/errors.hpp"
#include "icdgp/icd_code.hpp"
#include "icdgp/kernel.hpp"
#include "icdgp/rng.hpp"

namespace icdgp {

enum class ResponseKind { Classification, Regression };

struct SimulatedPatient {
  int id = 0;
  double y = 0.0;
  double x = 0.0;
  std::vector<IcdCode> codes;
  double linear_predictor = 0.0;
};

struct SyntheticCohort {
  std::vector<SimulatedPatient> patients;  // first n train, last m test
  int design = 0;
  ResponseKind kind = ResponseKind::Classification;
  std::uint64_t seed = 0;
  int n_train = 0;
  int n_test = 0;
  double tau0_sq = 0.0;
};

/// Four six-code chronic conditions built from letter pairs; conditions one
/// and three form the first group, two and four the second.
inline ConditionCatalog synthetic_catalog() {
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"A", "B"}, {"C", "D"}, {"E", "F"}, {"G", "H"}};
  std::vector<ConditionCatalog::Condition> conditions;
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    const auto& [first, second] = pairs[c];
    std::vector<IcdCode> codes;
    for (const std::string& text : {first, second, first + first, second + second,
                                    second + first, first + second}) {
      codes.push_back(IcdCode::parse(text));
    }
    conditions.push_back({"CONDITION_" + std::to_string(c + 1), std::move(codes)});
  }
  return ConditionCatalog(std::move(conditions));
}

namespace detail {

/// Pooled codes of the two condition groups, in dictionary order.
inline std::pair<std::vector<IcdCode>, std::vector<IcdCode>> synthetic_groups(
    const ConditionCatalog& catalog) {
  std::vector<IcdCode> group1, group2;
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    auto& group = (c % 2 == 0) ? group1 : group2;  // conditions 1,3 vs 2,4
    const auto& codes = catalog.condition(c).codes;
    group.insert(group.end(), codes.begin(), codes.end());
  }
  std::sort(group1.begin(), group1.end());
  std::sort(group2.begin(), group2.end());
  return {group1, group2};
}

inline std::vector<IcdCode> sample_without_replacement(std::span<const IcdCode> pool,
                                                       std::size_t k, RngStream& rng) {
  std::vector<IcdCode> working(pool.begin(), pool.end());
  std::vector<IcdCode> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(rng.integer(working.size() - i)) + i;
    std::swap(working[i], working[j]);
    out.push_back(working[i]);
  }
  return out;
}

}  // namespace detail

/// Linear predictor of the first design: codes in conditions one and three
/// each contribute -1, codes in two and four each +1, plus 0.1 + 0.2 x.
inline double sim1_linear_predictor(std::span<const IcdCode> codes, double x,
                                    const ConditionCatalog& catalog) {
  double total = 0.1 + 0.2 * x;
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    const double sign = (c % 2 == 0) ? -1.0 : 1.0;  // (-1)^c with 1-based c
    for (const auto& code : codes) {
      if (catalog.contains(c, code)) total += sign;
    }
  }
  return total;
}

/// Second design: interactions of the reversed-pair codes only, with weight
/// +2 on the {EF,FE} and {GH,HG} pairs and -1 on {AB,BA} and {CD,DC}.
inline double sim2_linear_predictor(std::span<const IcdCode> codes) {
  auto has = [&](const char* text) {
    for (const auto& code : codes) {
      if (code.text() == text) return true;
    }
    return false;
  };
  const double positive = (has("EF") && has("FE") ? 1.0 : 0.0) +
                          (has("GH") && has("HG") ? 1.0 : 0.0);
  const double negative = (has("AB") && has("BA") ? 1.0 : 0.0) +
                          (has("CD") && has("DC") ? 1.0 : 0.0);
  return 2.0 * positive - negative;
}

/// Third design: squared feature norm of the whole code set pushed through an
/// unclamped tangent, plus a cluster offset.
inline double sim3_linear_predictor(double squared_feature_norm, int cluster_label,
                                    double x) {
  return 0.1 + 0.2 * x + 3.0 * std::tan(squared_feature_norm) +
         3.0 * static_cast<double>(cluster_label);
}

/// Squared feature norm of a flat code set under the identity weighting.
inline double squared_feature_norm(std::span<const IcdCode> codes,
                                   int max_length = kDefaultMaxCodeLength) {
  return kappa1(codes, codes, LambdaSpec::identity(), max_length);
}

namespace detail {

/// Nine codes per patient: six sampled from the majority group's twelve
/// codes and three from the other group's, majority chosen by a fair coin.
inline std::vector<IcdCode> assign_patient_codes(const ConditionCatalog& catalog,
                                                 RngStream& rng) {
  const auto [group1, group2] = synthetic_groups(catalog);
  const bool majority_second = rng.uniform() < 0.5;
  const auto& major = majority_second ? group2 : group1;
  const auto& minor = majority_second ? group1 : group2;
  auto codes = sample_without_replacement(major, 6, rng);
  auto extra = sample_without_replacement(minor, 3, rng);
  codes.insert(codes.end(), extra.begin(), extra.end());
  std::sort(codes.begin(), codes.end());
  return codes;
}

}  // namespace detail

inline SyntheticCohort gen_sim1_class(int n, int m, std::uint64_t seed) {
  const auto catalog = synthetic_catalog();
  RngStream rng(seed, 101);
  SyntheticCohort cohort{{}, 1, ResponseKind::Classification, seed, n, m, 0.0};
  for (int i = 0; i < n + m; ++i) {
    SimulatedPatient patient;
    patient.id = i + 1;
    patient.codes = detail::assign_patient_codes(catalog, rng);
    patient.x = rng.normal();
    patient.linear_predictor = sim1_linear_predictor(patient.codes, patient.x, catalog);
    const double p = 1.0 / (1.0 + std::exp(-patient.linear_predictor));
    patient.y = rng.uniform() < p ? 1.0 : 0.0;
    cohort.patients.push_back(std::move(patient));
  }
  return cohort;
}

inline SyntheticCohort gen_sim2_class(int n, int m, std::uint64_t seed) {
  const auto catalog = synthetic_catalog();
  RngStream rng(seed, 102);
  SyntheticCohort cohort{{}, 2, ResponseKind::Classification, seed, n, m, 0.0};
  for (int i = 0; i < n + m; ++i) {
    SimulatedPatient patient;
    patient.id = i + 1;
    patient.codes = detail::assign_patient_codes(catalog, rng);
    patient.x = rng.normal();
    patient.linear_predictor = sim2_linear_predictor(patient.codes);
    const double p = 1.0 / (1.0 + std::exp(-patient.linear_predictor));
    patient.y = p > 0.5 ? 1.0 : 0.0;  // deterministic threshold
    cohort.patients.push_back(std::move(patient));
  }
  return cohort;
}

/// A corpus patient: raw codes plus the +/-1 cluster label.
struct CorpusPatient {
  std::vector<IcdCode> codes;
  int cluster = 1;
};

struct SurrogateCorpus {
  std::vector<CorpusPatient> patients;
  ConditionCatalog catalog;
};

/// Stand-in for the unavailable EHR code sets behind the third design: a
/// tight cluster (+1) whose diagnoses share long prefixes and reuse a small
/// pool of profiles, and a diffuse cluster (-1) spread over many conditions.
/// Profile reuse mirrors how real cohorts repeat diagnosis patterns.
inline SurrogateCorpus gen_surrogate_corpus(int n_patients, std::uint64_t seed) {
  if (n_patients < 2) throw InputError("surrogate corpus needs at least two patients");
  RngStream rng(seed, 103);

  std::vector<ConditionCatalog::Condition> conditions;
  std::vector<IcdCode> tight_pool;
  {
    std::vector<IcdCode> codes;
    for (int i = 0; i < 10; ++i) {
      codes.push_back(IcdCode::parse("C71" + std::to_string(i)));
      codes.push_back(IcdCode::parse("C72" + std::to_string(i)));
    }
    tight_pool = codes;
    conditions.push_back({"NERVOUS_SYSTEM", std::move(codes)});
  }
  std::vector<IcdCode> diffuse_pool;
  {
    const std::vector<std::string> stems = {"E11", "I10", "J45", "K21",
                                            "M54", "N39", "F32", "G47"};
    for (std::size_t s = 0; s < stems.size(); ++s) {
      std::vector<IcdCode> codes;
      for (int i = 0; i < 6; ++i)
        codes.push_back(IcdCode::parse(stems[s] + std::to_string(i)));
      diffuse_pool.insert(diffuse_pool.end(), codes.begin(), codes.end());
      conditions.push_back({"GENERAL_" + stems[s], std::move(codes)});
    }
  }
  std::vector<IcdCode> common_pool;
  {
    std::vector<IcdCode> codes;
    for (int i = 0; i < 4; ++i) codes.push_back(IcdCode::parse("Z79" + std::to_string(i)));
    common_pool = codes;
    conditions.push_back({"COMMON_CARE", std::move(codes)});
  }
  ConditionCatalog catalog(std::move(conditions));

  // Distinct diagnosis profiles per cluster, reused across patients.
  auto make_profiles = [&](std::span<const IcdCode> pool, int count, int lo, int hi) {
    std::vector<std::vector<IcdCode>> profiles;
    for (int k = 0; k < count; ++k) {
      const auto size = static_cast<std::size_t>(
          lo + static_cast<int>(rng.integer(static_cast<std::uint64_t>(hi - lo + 1))));
      auto codes = detail::sample_without_replacement(pool, size, rng);
      if (rng.uniform() < 0.5)
        codes.push_back(common_pool[static_cast<std::size_t>(rng.integer(common_pool.size()))]);
      std::sort(codes.begin(), codes.end());
      codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
      profiles.push_back(std::move(codes));
    }
    return profiles;
  };
  const auto tight_profiles = make_profiles(tight_pool, 40, 3, 8);
  const auto diffuse_profiles = make_profiles(diffuse_pool, 80, 5, 15);

  SurrogateCorpus corpus{{}, std::move(catalog)};
  for (int i = 0; i < n_patients; ++i) {
    CorpusPatient patient;
    patient.cluster = (i % 2 == 0) ? 1 : -1;  // exact balance
    const auto& profiles = patient.cluster == 1 ? tight_profiles : diffuse_profiles;
    patient.codes = profiles[static_cast<std::size_t>(rng.integer(profiles.size()))];
    corpus.patients.push_back(std::move(patient));
  }
  return corpus;
}

inline SyntheticCohort gen_sim3_class(int n, int m, std::uint64_t seed,
                                      const SurrogateCorpus& corpus) {
  if (corpus.patients.size() < static_cast<std::size_t>(n + m))
    throw CorpusTooSmallError(corpus.patients.size(), static_cast<std::size_t>(n + m));
  RngStream rng(seed, 104);
  std::vector<std::size_t> order(corpus.patients.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto j = static_cast<std::size_t>(rng.integer(order.size() - i)) + i;
    std::swap(order[i], order[j]);
  }
  SyntheticCohort cohort{{}, 3, ResponseKind::Classification, seed, n, m, 0.0};
  const int lmax = corpus.catalog.max_code_length();
  for (int i = 0; i < n + m; ++i) {
    const auto& source = corpus.patients[order[static_cast<std::size_t>(i)]];
    SimulatedPatient patient;
    patient.id = i + 1;
    patient.codes = source.codes;
    patient.x = rng.normal();
    const double z = squared_feature_norm(patient.codes, lmax);
    patient.linear_predictor = sim3_linear_predictor(z, source.cluster, patient.x);
    const double p = 1.0 / (1.0 + std::exp(-patient.linear_predictor));
    patient.y = rng.uniform() < p ? 1.0 : 0.0;
    cohort.patients.push_back(std::move(patient));
  }
  return cohort;
}

/// Regression twins: the classification linear predictors plus Gaussian
/// noise. Design 2 keeps no intercept or covariate term.
inline SyntheticCohort gen_sim_reg(int design, int n, int m, double tau0_sq,
                                   std::uint64_t seed,
                                   const SurrogateCorpus* corpus = nullptr) {
  if (design < 1 || design > 3) throw InputError("regression design must be 1, 2, or 3");
  if (design == 3 && corpus == nullptr)
    throw InputError("regression design 3 requires a corpus");
  SyntheticCohort cohort = design == 1   ? gen_sim1_class(n, m, seed)
                           : design == 2 ? gen_sim2_class(n, m, seed)
                                         : gen_sim3_class(n, m, seed, *corpus);
  cohort.kind = ResponseKind::Regression;
  cohort.tau0_sq = tau0_sq;
  RngStream noise(seed, 105);
  for (auto& patient : cohort.patients) {
    patient.y = patient.linear_predictor + std::sqrt(tau0_sq) * noise.normal();
  }
  return cohort;
}

/// True regression coefficients (intercept, x) of each design.
inline std::array<double, 2> design_truth_beta(int design) {
  if (design == 2) return {0.0, 0.0};
  return {0.1, 0.2};
}

}  // namespace icdgp
