#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "icdgp/catalog.hpp"
#include "icdgp/detail/csv.hpp"
#include "icdgp/errors.hpp"
#include "icdgp/icd_code.hpp"

namespace icdgp {

/// Diagonal prefix-weighting schemes for the base kernel: per-prefix scalar
/// weights (identity when the map is empty) or a geometric decay in the
/// prefix position.
class LambdaSpec {
 public:
  enum class Mode { ScalarDiagonal, Geometric };

  static LambdaSpec identity() { return LambdaSpec(); }

  static LambdaSpec scalar_diagonal(std::map<std::string, double, std::less<>> weights) {
    for (const auto& [prefix, w] : weights) {
      if (!(w > 0.0)) throw InputError("prefix weight for '" + prefix + "' must be positive");
    }
    LambdaSpec spec;
    spec.prefix_weights_ = std::move(weights);
    return spec;
  }

  static LambdaSpec geometric(double decay) {
    if (!(decay > 0.0 && decay < 1.0))
      throw InputError("geometric decay must lie in (0, 1)");
    LambdaSpec spec;
    spec.mode_ = Mode::Geometric;
    spec.decay_ = decay;
    return spec;
  }

  Mode mode() const { return mode_; }
  double decay() const { return decay_; }

  /// Diagonal weight attached to (prefix value, position). Unmapped prefixes
  /// default to 1 in scalar mode.
  double weight(std::string_view prefix, int position) const {
    if (mode_ == Mode::Geometric) return std::pow(decay_, position);
    if (prefix_weights_.empty()) return 1.0;
    auto it = prefix_weights_.find(prefix);
    return it == prefix_weights_.end() ? 1.0 : it->second;
  }

 private:
  Mode mode_ = Mode::ScalarDiagonal;
  std::map<std::string, double, std::less<>> prefix_weights_;
  double decay_ = 0.5;
};

/// Base kernel on a pair of codes: the prefix-weighted count of positions at
/// which the saturated prefixes agree.
inline double kappa0(const IcdCode& a, const IcdCode& b, const LambdaSpec& lambda,
                     int max_length = kDefaultMaxCodeLength) {
  double total = 0.0;
  for (int pos = 1; pos <= max_length; ++pos) {
    const auto pa = a.saturated_prefix(pos);
    if (pa == b.saturated_prefix(pos)) total += lambda.weight(pa, pos);
  }
  return total;
}

/// Sparse prefix-count feature of a code subset: (prefix value, position) ->
/// number of codes whose saturated prefix at that position equals the value.
/// The dense vector this represents is never materialized.
struct SparseFeature {
  std::map<std::pair<std::string, int>, std::int64_t> entries;

  bool empty() const { return entries.empty(); }

  /// Lambda-weighted dot product with another feature.
  double weighted_dot(const SparseFeature& other, const LambdaSpec& lambda) const {
    const auto& small = entries.size() <= other.entries.size() ? entries : other.entries;
    const auto& large = entries.size() <= other.entries.size() ? other.entries : entries;
    double total = 0.0;
    for (const auto& [key, count] : small) {
      auto it = large.find(key);
      if (it != large.end()) {
        total += lambda.weight(key.first, key.second) *
                 static_cast<double>(count) * static_cast<double>(it->second);
      }
    }
    return total;
  }
};

inline SparseFeature subset_feature(std::span<const IcdCode> codes,
                                    int max_length = kDefaultMaxCodeLength) {
  SparseFeature feature;
  for (const auto& code : codes) {
    for (int pos = 1; pos <= max_length; ++pos) {
      feature.entries[{std::string(code.saturated_prefix(pos)), pos}] += 1;
    }
  }
  return feature;
}

/// Derived subsets kernel: sum of the base kernel over all code pairs.
inline double kappa1(std::span<const IcdCode> a, std::span<const IcdCode> b,
                     const LambdaSpec& lambda, int max_length = kDefaultMaxCodeLength) {
  double total = 0.0;
  for (const auto& ca : a) {
    for (const auto& cb : b) total += kappa0(ca, cb, lambda, max_length);
  }
  return total;
}

/// Condition-weighted kernel on diagnoses.
inline double kappa2(const Diagnosis& a, const Diagnosis& b,
                     const ConditionCatalog& catalog, const LambdaSpec& lambda) {
  if (a.per_condition.size() != catalog.size() || b.per_condition.size() != catalog.size())
    throw DimensionMismatchError("diagnosis does not conform to the catalog");
  double total = 0.0;
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    total += catalog.weights()[c] *
             kappa1(a.per_condition[c], b.per_condition[c], lambda, catalog.max_code_length());
  }
  return total;
}

/// Cosine-normalized kernel, exactly 1 on identical diagnoses.
inline double kappa_norm(const Diagnosis& a, const Diagnosis& b,
                         const ConditionCatalog& catalog, const LambdaSpec& lambda) {
  const double self_a = kappa2(a, a, catalog, lambda);
  if (!(self_a > 0.0)) throw ZeroSelfSimilarityError();
  if (a == b) return 1.0;
  const double self_b = kappa2(b, b, catalog, lambda);
  if (!(self_b > 0.0)) throw ZeroSelfSimilarityError();
  return kappa2(a, b, catalog, lambda) / std::sqrt(self_a * self_b);
}

/// Euclidean distance between the normalized feature maps; lies in [0, sqrt 2].
inline double distance(const Diagnosis& a, const Diagnosis& b,
                       const ConditionCatalog& catalog, const LambdaSpec& lambda) {
  const double k = kappa_norm(a, b, catalog, lambda);
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * k));
}

// --- Kernel family -----------------------------------------------------

struct Kappa2Raw {};
struct KappaNormalized {};
struct PolynomialKernel {
  int order = 1;
  double sigma2 = 1.0;
};
struct GammaExponentialKernel {
  double gamma = 2.0;  // 1 = exponential, 2 = squared exponential
  double sigma2 = 1.0;
  double phi = 1.0;
};
struct MaternKernel {
  double nu = 2.5;  // one of 1/2, 3/2, 5/2
  double sigma2 = 1.0;
  double phi = 1.0;
};

using KernelFamily = std::variant<Kappa2Raw, KappaNormalized, PolynomialKernel,
                                  GammaExponentialKernel, MaternKernel>;

struct KernelSpec {
  LambdaSpec lambda = LambdaSpec::identity();
  KernelFamily family = KappaNormalized{};

  void validate() const {
    if (const auto* poly = std::get_if<PolynomialKernel>(&family)) {
      if (poly->order < 1) throw InputError("polynomial order must be a positive integer");
      if (!(poly->sigma2 > 0.0)) throw InputError("sigma2 must be positive");
    } else if (const auto* ge = std::get_if<GammaExponentialKernel>(&family)) {
      if (!(ge->gamma >= 1.0 && ge->gamma <= 2.0))
        throw InputError("gamma must lie in [1, 2]");
      if (!(ge->sigma2 > 0.0) || !(ge->phi > 0.0))
        throw InputError("sigma2 and phi must be positive");
    } else if (const auto* mat = std::get_if<MaternKernel>(&family)) {
      if (mat->nu != 0.5 && mat->nu != 1.5 && mat->nu != 2.5)
        throw InputError("Matern smoothness must be 1/2, 3/2, or 5/2");
      if (!(mat->sigma2 > 0.0) || !(mat->phi > 0.0))
        throw InputError("sigma2 and phi must be positive");
    }
  }

  static KernelSpec squared_exponential(double sigma2, double phi) {
    return KernelSpec{LambdaSpec::identity(), GammaExponentialKernel{2.0, sigma2, phi}};
  }
  static KernelSpec exponential(double sigma2, double phi) {
    return KernelSpec{LambdaSpec::identity(), GammaExponentialKernel{1.0, sigma2, phi}};
  }
};

/// Half-integer Matern correlation of a distance, range parameter phi.
inline double matern_correlation(double nu, double phi, double dist) {
  const double a = std::sqrt(2.0 * nu) * phi * dist;
  if (nu == 0.5) return std::exp(-a);
  if (nu == 1.5) return (1.0 + a) * std::exp(-a);
  if (nu == 2.5) return (1.0 + a + a * a / 3.0) * std::exp(-a);
  throw InputError("Matern smoothness must be 1/2, 3/2, or 5/2");
}

inline double kernel_eval(const Diagnosis& a, const Diagnosis& b,
                          const KernelSpec& spec, const ConditionCatalog& catalog) {
  spec.validate();
  if (std::holds_alternative<Kappa2Raw>(spec.family))
    return kappa2(a, b, catalog, spec.lambda);
  if (std::holds_alternative<KappaNormalized>(spec.family))
    return kappa_norm(a, b, catalog, spec.lambda);
  if (const auto* poly = std::get_if<PolynomialKernel>(&spec.family)) {
    const double k = kappa_norm(a, b, catalog, spec.lambda);
    return poly->sigma2 * std::pow(1.0 + k, poly->order);
  }
  const double d = distance(a, b, catalog, spec.lambda);
  if (const auto* ge = std::get_if<GammaExponentialKernel>(&spec.family))
    return ge->sigma2 * std::exp(-ge->phi * std::pow(d, ge->gamma));
  const auto& mat = std::get<MaternKernel>(spec.family);
  return mat.sigma2 * matern_correlation(mat.nu, mat.phi, d);
}

/// Condition weights proportional to the within-condition self-similarity
/// kappa1(T_c, T_c), rescaled to sum to C. Any positive rescaling is
/// equivalent inside the normalized kernel.
inline std::vector<double> default_weights(const ConditionCatalog& catalog,
                                           const LambdaSpec& lambda) {
  std::vector<double> weights(catalog.size());
  double total = 0.0;
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    const auto& codes = catalog.condition(c).codes;
    if (codes.empty()) throw EmptyConditionDefinitionError(catalog.condition(c).name);
    weights[c] = kappa1(codes, codes, lambda, catalog.max_code_length());
    total += weights[c];
  }
  const double scale = static_cast<double>(catalog.size()) / total;
  for (double& w : weights) w *= scale;
  return weights;
}

inline Eigen::MatrixXd gram_matrix(std::span<const Diagnosis> diagnoses,
                                   const KernelSpec& spec,
                                   const ConditionCatalog& catalog) {
  const auto n = static_cast<Eigen::Index>(diagnoses.size());
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double value;
      try {
        value = kernel_eval(diagnoses[i], diagnoses[j], spec, catalog);
      } catch (const Error& err) {
        throw InputError("kernel evaluation failed for patients (" + std::to_string(i) +
                         ", " + std::to_string(j) + "): " + err.what());
      }
      gram(i, j) = value;
      gram(j, i) = value;
    }
  }
  return gram;
}

/// CSV export with a header row of patient identifiers and full-precision values.
inline void write_gram_csv(std::ostream& out, const Eigen::MatrixXd& gram,
                           std::span<const std::string> ids) {
  if (static_cast<Eigen::Index>(ids.size()) != gram.rows())
    throw DimensionMismatchError("one identifier per Gram row required");
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (j) out << ',';
    out << detail::csv_quote(ids[j]);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    for (Eigen::Index j = 0; j < gram.cols(); ++j) {
      if (j) out << ',';
      out << detail::format_double(gram(i, j));
    }
    out << '\n';
  }
}

// --- Pairwise distance machinery for the samplers ----------------------

/// Normalized, condition- and lambda-weighted sparse feature vectors over an
/// interned key space, shared across a cohort so pairwise normalized kernels
/// reduce to sparse dot products.
class NormalizedFeatureSet {
 public:
  NormalizedFeatureSet(std::span<const Diagnosis> diagnoses,
                       const ConditionCatalog& catalog, const LambdaSpec& lambda) {
    std::map<std::tuple<int, int, std::string>, int> key_ids;
    features_.reserve(diagnoses.size());
    for (const auto& diagnosis : diagnoses) {
      if (diagnosis.per_condition.size() != catalog.size())
        throw DimensionMismatchError("diagnosis does not conform to the catalog");
      std::map<int, double> accum;
      for (std::size_t c = 0; c < catalog.size(); ++c) {
        const double wc = catalog.weights()[c];
        for (const auto& code : diagnosis.per_condition[c]) {
          for (int pos = 1; pos <= catalog.max_code_length(); ++pos) {
            const auto prefix = code.saturated_prefix(pos);
            const double weight =
                std::sqrt(wc * lambda.weight(prefix, pos));
            auto key = std::make_tuple(static_cast<int>(c), pos, std::string(prefix));
            auto [it, inserted] = key_ids.try_emplace(std::move(key),
                                                      static_cast<int>(key_ids.size()));
            accum[it->second] += weight;
          }
        }
      }
      std::vector<std::pair<int, double>> entries(accum.begin(), accum.end());
      double norm2 = 0.0;
      for (const auto& [id, v] : entries) norm2 += v * v;
      if (!(norm2 > 0.0)) throw ZeroSelfSimilarityError();
      const double inv_norm = 1.0 / std::sqrt(norm2);
      for (auto& [id, v] : entries) v *= inv_norm;
      features_.push_back(std::move(entries));
    }
  }

  std::size_t size() const { return features_.size(); }

  /// Normalized kernel between members i and j.
  double normalized_kernel(std::size_t i, std::size_t j) const {
    if (i == j) return 1.0;
    const auto& a = features_[i];
    const auto& b = features_[j];
    double dot = 0.0;
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
      if (a[ia].first < b[ib].first) ++ia;
      else if (b[ib].first < a[ia].first) ++ib;
      else dot += a[ia++].second * b[ib++].second;
    }
    return dot;
  }

  double feature_distance(std::size_t i, std::size_t j) const {
    return std::sqrt(std::max(0.0, 2.0 - 2.0 * normalized_kernel(i, j)));
  }

 private:
  std::vector<std::vector<std::pair<int, double>>> features_;
};

/// Full pairwise feature-space distance matrix of a cohort.
inline Eigen::MatrixXd distance_matrix(std::span<const Diagnosis> diagnoses,
                                       const ConditionCatalog& catalog,
                                       const LambdaSpec& lambda) {
  NormalizedFeatureSet features(diagnoses, catalog, lambda);
  const auto n = static_cast<Eigen::Index>(diagnoses.size());
  Eigen::MatrixXd dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = features.feature_distance(static_cast<std::size_t>(i),
                                                 static_cast<std::size_t>(j));
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

}  // namespace icdgp
