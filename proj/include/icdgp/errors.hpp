#pragma once

#include <stdexcept>
#include <string>

namespace icdgp {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- ICD code parsing ---
struct EmptyCodeError : Error {
  EmptyCodeError() : Error("ICD code is empty") {}
};
struct InvalidFirstCharacterError : Error {
  explicit InvalidFirstCharacterError(const std::string& raw)
      : Error("ICD code must start with a letter: '" + raw + "'") {}
};
struct InvalidCharacterError : Error {
  explicit InvalidCharacterError(const std::string& raw)
      : Error("ICD code contains a non-alphanumeric character: '" + raw + "'") {}
};
struct CodeTooLongError : Error {
  CodeTooLongError(const std::string& raw, int max_length)
      : Error("ICD code '" + raw + "' exceeds the maximum length " +
              std::to_string(max_length)),
        max_length(max_length) {}
  int max_length;
};

// --- Catalogs and kernels ---
struct EmptyConditionDefinitionError : Error {
  explicit EmptyConditionDefinitionError(const std::string& name)
      : Error("condition '" + name + "' has no codes") {}
};
struct ZeroSelfSimilarityError : Error {
  ZeroSelfSimilarityError()
      : Error("diagnosis has no weighted codes; normalized kernel undefined") {}
};

// --- Numerics ---
struct NotPositiveDefiniteError : Error {
  NotPositiveDefiniteError()
      : Error("matrix is not positive definite after jitter escalation") {}
};
struct RankDeficientDesignError : Error {
  RankDeficientDesignError() : Error("whitened design matrix is rank deficient") {}
};
struct DegenerateResidualError : Error {
  DegenerateResidualError()
      : Error("residual sum of squares is zero; flat-prior conditional is improper") {}
};

// --- Samplers ---
struct NonFiniteLikelihoodAtCurrentError : Error {
  NonFiniteLikelihoodAtCurrentError()
      : Error("log-likelihood is not finite at the current state") {}
};
struct SliceShrinkLimitError : Error {
  SliceShrinkLimitError()
      : Error("elliptical slice bracket shrank 1000 times without acceptance") {}
};

// --- MCMC chains ---
struct ChainError : Error {
  ChainError(int iteration, const std::string& what)
      : Error("MCMC iteration " + std::to_string(iteration) + ": " + what),
        iteration(iteration) {}
  int iteration;
};
struct TooFewDrawsError : Error {
  TooFewDrawsError() : Error("at least two retained draws are required") {}
};

// --- Metrics ---
struct SingleClassLabelsError : Error {
  SingleClassLabelsError() : Error("labels contain a single class") {}
};
struct DimensionMismatchError : Error {
  explicit DimensionMismatchError(const std::string& what)
      : Error("dimension mismatch: " + what) {}
};

// --- Simulation data ---
struct CorpusTooSmallError : Error {
  CorpusTooSmallError(std::size_t have, std::size_t need)
      : Error("corpus holds " + std::to_string(have) + " patients but " +
              std::to_string(need) + " are required") {}
};

// --- File I/O ---
struct InputError : Error {
  using Error::Error;
};

}  // namespace icdgp
