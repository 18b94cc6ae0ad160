#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "icdgp/gp_classification.hpp"
#include "icdgp/gp_regression.hpp"
#include "icdgp/metrics.hpp"
#include "icdgp/rng.hpp"
#include "icdgp/simdata.hpp"

namespace icdgp {

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return detail::splitmix64(base ^ detail::splitmix64(tag + 1));
}

inline int default_thread_count() {
  if (const char* env = std::getenv("ICDGP_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// --- Cohort -> model data -------------------------------------------------

struct CohortSplit {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // intercept prepended
  std::vector<Diagnosis> diagnoses;
  std::vector<IcdCode> unmatched;
};

inline CohortSplit cohort_rows_to_data(std::span<const SimulatedPatient> patients,
                                       const ConditionCatalog& catalog) {
  CohortSplit split;
  const auto n = static_cast<Eigen::Index>(patients.size());
  split.y.resize(n);
  split.X.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& patient = patients[static_cast<std::size_t>(i)];
    split.y[i] = patient.y;
    split.X(i, 0) = 1.0;
    split.X(i, 1) = patient.x;
    auto assigned = assign_to_conditions(patient.codes, catalog);
    split.diagnoses.push_back(std::move(assigned.diagnosis));
    split.unmatched.insert(split.unmatched.end(), assigned.unmatched.begin(),
                           assigned.unmatched.end());
  }
  return split;
}

// --- Per-replicate metrics --------------------------------------------------

struct ClassificationOutcome {
  double auc = 0.0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double cutoff = 0.5;
};

struct RegressionOutcome {
  double mse_beta = 0.0;
  double mse_tau2 = 0.0;
  double mspe = 0.0;
  double coverage = 0.0;
};

/// Scores the test block of a classification fit: AUC from the posterior
/// mean probabilities, cutoff from the training probabilities by Youden's J.
inline ClassificationOutcome score_classification(const ClassificationDraws& draws,
                                                  const Eigen::VectorXi& y_train,
                                                  const Eigen::VectorXi& y_test) {
  ClassificationOutcome out;
  const auto m = y_test.size();
  std::vector<double> scores(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j)
    scores[static_cast<std::size_t>(j)] = draws.pstar.col(j).mean();
  std::vector<int> labels(y_test.data(), y_test.data() + m);
  out.auc = roc_auc(scores, labels).auc;

  std::vector<double> train_scores(draws.train_probability.data(),
                                   draws.train_probability.data() +
                                       draws.train_probability.size());
  std::vector<int> train_labels(y_train.data(), y_train.data() + y_train.size());
  out.cutoff = youden_cutoff(roc_auc(train_scores, train_labels));

  std::vector<int> predicted(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j)
    predicted[static_cast<std::size_t>(j)] = scores[static_cast<std::size_t>(j)] >= out.cutoff;
  const auto confusion = confusion_metrics(predicted, labels);
  out.accuracy = confusion.accuracy;
  out.sensitivity = confusion.sensitivity;
  out.specificity = confusion.specificity;
  return out;
}

inline RegressionOutcome score_regression(const RegressionDraws& draws,
                                          std::span<const double> truth_beta,
                                          double truth_tau2,
                                          const Eigen::VectorXd& y_test) {
  const auto m = y_test.size();
  std::vector<double> beta_mean;
  for (Eigen::Index j = 0; j < draws.beta.cols(); ++j)
    beta_mean.push_back(draws.beta.col(j).mean());
  std::vector<double> y_pred(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j)
    y_pred[static_cast<std::size_t>(j)] = draws.ystar.col(j).mean();
  const auto intervals = prediction_intervals(draws.ystar, 0.95);
  const std::vector<double> truths(y_test.data(), y_test.data() + m);
  const auto metrics =
      regression_metrics(truth_beta, truth_tau2, beta_mean, draws.tau2.mean(), truths,
                         y_pred, intervals);
  return RegressionOutcome{metrics.mse_beta, metrics.mse_tau2, metrics.mspe,
                           metrics.coverage};
}

// --- Protocol driver ---------------------------------------------------------

struct ProtocolOptions {
  int design = 1;  // 1..3
  ResponseKind kind = ResponseKind::Classification;
  int n = 1000;
  int m = 100;
  int reps = 10;
  int iterations = 10000;
  int burn_in = 5000;
  int thin = 5;
  double tau0_sq = 0.01;
  double gamma = 2.0;
  std::uint64_t seed = 2023;
  int threads = 0;          // 0 = default_thread_count()
  int corpus_size = 1500;   // surrogate corpus behind design 3
};

struct ProtocolResult {
  ProtocolOptions options;
  std::vector<ClassificationOutcome> classification;  // per replicate
  std::vector<RegressionOutcome> regression;
  ClassificationOutcome classification_mean;
  RegressionOutcome regression_mean;
};

namespace detail {

inline SyntheticCohort generate_design(const ProtocolOptions& opts, int rep,
                                       const SurrogateCorpus* corpus) {
  const std::uint64_t seed = derive_seed(opts.seed, static_cast<std::uint64_t>(rep));
  if (opts.kind == ResponseKind::Regression)
    return gen_sim_reg(opts.design, opts.n, opts.m, opts.tau0_sq, seed, corpus);
  switch (opts.design) {
    case 1: return gen_sim1_class(opts.n, opts.m, seed);
    case 2: return gen_sim2_class(opts.n, opts.m, seed);
    case 3: return gen_sim3_class(opts.n, opts.m, seed, *corpus);
    default: throw InputError("design must be 1, 2, or 3");
  }
}

inline void run_one_replicate(const ProtocolOptions& opts, int rep,
                              const ConditionCatalog& catalog,
                              const SurrogateCorpus* corpus, ProtocolResult& result) {
  const auto cohort = generate_design(opts, rep, corpus);
  const std::span<const SimulatedPatient> all(cohort.patients);
  const auto train = cohort_rows_to_data(all.subspan(0, static_cast<std::size_t>(opts.n)),
                                         catalog);
  const auto test = cohort_rows_to_data(all.subspan(static_cast<std::size_t>(opts.n)),
                                        catalog);

  RegressionConfig config;
  config.iterations = opts.iterations;
  config.burn_in = opts.burn_in;
  config.thin = opts.thin;
  config.gamma = opts.gamma;
  config.seed = derive_seed(opts.seed, 40000 + static_cast<std::uint64_t>(rep));

  if (opts.kind == ResponseKind::Classification) {
    ClassificationData data;
    data.y = train.y.cast<int>();
    data.X = train.X;
    data.diagnoses = train.diagnoses;
    data.test_X = test.X;
    data.test_diagnoses = test.diagnoses;
    const auto draws = run_classification_mcmc(data, catalog, config);
    result.classification[static_cast<std::size_t>(rep)] =
        score_classification(draws, data.y, test.y.cast<int>());
  } else {
    RegressionData data;
    data.y = train.y;
    data.X = train.X;
    data.diagnoses = train.diagnoses;
    data.test_X = test.X;
    data.test_diagnoses = test.diagnoses;
    const auto draws = run_regression_mcmc(data, catalog, config);
    const auto truth = design_truth_beta(opts.design);
    result.regression[static_cast<std::size_t>(rep)] =
        score_regression(draws, truth, opts.tau0_sq, test.y);
  }
}

}  // namespace detail

/// Runs simulate -> fit -> metrics for every replicate, in parallel across
/// worker threads, with per-replicate seeds derived from the base seed so
/// results do not depend on scheduling.
inline ProtocolResult run_design_replicates(const ProtocolOptions& opts) {
  ProtocolResult result;
  result.options = opts;
  result.classification.resize(static_cast<std::size_t>(opts.reps));
  result.regression.resize(static_cast<std::size_t>(opts.reps));

  std::optional<SurrogateCorpus> corpus;
  std::optional<ConditionCatalog> catalog;
  if (opts.design == 3) {
    corpus = gen_surrogate_corpus(opts.corpus_size, derive_seed(opts.seed, 777));
    catalog = corpus->catalog;
  } else {
    catalog = synthetic_catalog();
  }

  const int workers =
      std::min(opts.threads > 0 ? opts.threads : default_thread_count(), opts.reps);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(opts.reps));
  auto worker = [&]() {
    while (true) {
      const int rep = next.fetch_add(1);
      if (rep >= opts.reps) return;
      try {
        detail::run_one_replicate(opts, rep, *catalog,
                                  corpus ? &*corpus : nullptr, result);
      } catch (...) {
        failures[static_cast<std::size_t>(rep)] = std::current_exception();
      }
    }
  };
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& thread : pool) thread.join();
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  for (const auto& outcome : result.classification) {
    result.classification_mean.auc += outcome.auc / opts.reps;
    result.classification_mean.accuracy += outcome.accuracy / opts.reps;
    result.classification_mean.sensitivity += outcome.sensitivity / opts.reps;
    result.classification_mean.specificity += outcome.specificity / opts.reps;
    result.classification_mean.cutoff += outcome.cutoff / opts.reps;
  }
  for (const auto& outcome : result.regression) {
    result.regression_mean.mse_beta += outcome.mse_beta / opts.reps;
    result.regression_mean.mse_tau2 += outcome.mse_tau2 / opts.reps;
    result.regression_mean.mspe += outcome.mspe / opts.reps;
    result.regression_mean.coverage += outcome.coverage / opts.reps;
  }
  return result;
}

// --- Published reference rows and tolerance gates ---------------------------

struct PaperClassificationRow {
  double auc, accuracy, sensitivity, specificity;
  bool comparable;  // surrogate-backed designs are not number-comparable
};
struct PaperRegressionRow {
  double mse_beta, mse_tau2, mspe, coverage;
  bool comparable;
};

inline PaperClassificationRow paper_classification_row(int design) {
  switch (design) {
    case 1: return {0.96, 0.96, 0.96, 0.96, true};
    case 2: return {1.00, 0.99, 1.00, 0.98, true};
    default: return {0.94, 0.91, 0.90, 0.92, false};
  }
}

inline PaperRegressionRow paper_regression_row(int design) {
  switch (design) {
    case 1: return {0.40, 0.00, 0.13, 0.95, true};
    case 2: return {1.10, 0.00, 0.15, 0.95, true};
    default: return {0.32, 1.12, 2.43, 0.97, false};
  }
}

/// Acceptance gate for a design's averaged metrics. Designs backed by the
/// surrogate corpus use the property-based substitute gate.
inline bool design_gate_passes(int design, ResponseKind kind,
                               const ClassificationOutcome& clf,
                               const RegressionOutcome& reg, bool fast_mode) {
  if (kind == ResponseKind::Classification) {
    if (design == 1)
      return fast_mode ? clf.auc >= 0.90
                       : std::abs(clf.auc - 0.96) <= 0.03 &&
                             std::abs(clf.accuracy - 0.96) <= 0.03;
    if (design == 2) return clf.auc >= 0.97 && clf.accuracy >= 0.96;
    return clf.auc >= 0.85;
  }
  if (design == 1)
    return std::abs(reg.coverage - 0.95) <= 0.03 && reg.mspe <= 0.20;
  if (design == 2)
    return std::abs(reg.coverage - 0.95) <= 0.03 && reg.mspe <= 0.25;
  return true;  // regression design 3 is reported, not gated
}

}  // namespace icdgp
