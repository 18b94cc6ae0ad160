#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "icdgp/errors.hpp"

namespace icdgp {

struct RocPoint {
  double threshold;  // classify positive when score >= threshold
  double fpr;
  double tpr;
};

/// Empirical ROC curve swept from +inf down through the unique scores, with
/// tied scores crossing simultaneously, and its trapezoidal area.
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

inline RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw DimensionMismatchError("scores and labels sizes differ");
  std::size_t positives = 0;
  for (int label : labels) positives += label != 0;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw SingleClassLabelsError();

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve curve;
  curve.points.push_back(RocPoint{std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0.0, fp = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    double tied_tp = 0.0, tied_fp = 0.0;
    while (i < order.size() && scores[order[i]] == threshold) {
      if (labels[order[i]] != 0) tied_tp += 1.0;
      else tied_fp += 1.0;
      ++i;
    }
    // trapezoid across the simultaneous crossing handles ties
    area += tied_fp * (tp + 0.5 * tied_tp);
    tp += tied_tp;
    fp += tied_fp;
    curve.points.push_back(RocPoint{threshold,
                                    fp / static_cast<double>(negatives),
                                    tp / static_cast<double>(positives)});
  }
  curve.auc = area / (static_cast<double>(positives) * static_cast<double>(negatives));
  return curve;
}

/// Threshold maximizing Youden's J = TPR - FPR; ties resolved toward the
/// smaller threshold.
inline double youden_cutoff(const RocCurve& curve) {
  double best_j = -std::numeric_limits<double>::infinity();
  double best_threshold = std::numeric_limits<double>::infinity();
  for (const auto& point : curve.points) {
    const double j = point.tpr - point.fpr;
    if (j > best_j || (j == best_j && point.threshold < best_threshold)) {
      best_j = j;
      best_threshold = point.threshold;
    }
  }
  return best_threshold;
}

struct ConfusionMetrics {
  double accuracy;
  double sensitivity;
  double specificity;
};

inline ConfusionMetrics confusion_metrics(std::span<const int> predicted,
                                          std::span<const int> labels) {
  if (predicted.size() != labels.size())
    throw DimensionMismatchError("predictions and labels sizes differ");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool truth = labels[i] != 0;
    const bool guess = predicted[i] != 0;
    if (truth && guess) ++tp;
    else if (truth) ++fn;
    else if (guess) ++fp;
    else ++tn;
  }
  if (tp + fn == 0 || tn + fp == 0) throw SingleClassLabelsError();
  return ConfusionMetrics{(tp + tn) / static_cast<double>(labels.size()),
                          tp / (tp + fn), tn / (tn + fp)};
}

/// Type-7 (linear interpolation) quantile of already sorted values.
inline double quantile_type7(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw TooFewDrawsError();
  if (sorted.size() == 1) return sorted[0];
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct RegressionMetrics {
  double mse_beta;
  double mse_tau2;
  double mspe;
  double coverage;
};

struct PredictionInterval {
  double lower;
  double upper;
};

/// Squared errors of the posterior summaries against simulation truths plus
/// predictive interval coverage on the test responses.
inline RegressionMetrics regression_metrics(std::span<const double> truth_beta,
                                            double truth_tau2,
                                            std::span<const double> beta_post_mean,
                                            double tau2_post_mean,
                                            std::span<const double> y_true,
                                            std::span<const double> y_pred_mean,
                                            std::span<const PredictionInterval> intervals) {
  if (truth_beta.size() != beta_post_mean.size())
    throw DimensionMismatchError("beta truth and estimate sizes differ");
  if (y_true.size() != y_pred_mean.size() || y_true.size() != intervals.size())
    throw DimensionMismatchError("test truths, predictions, and intervals sizes differ");
  RegressionMetrics metrics{};
  for (std::size_t j = 0; j < truth_beta.size(); ++j) {
    const double diff = beta_post_mean[j] - truth_beta[j];
    metrics.mse_beta += diff * diff;
  }
  const double tau_diff = tau2_post_mean - truth_tau2;
  metrics.mse_tau2 = tau_diff * tau_diff;
  double covered = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double diff = y_pred_mean[i] - y_true[i];
    metrics.mspe += diff * diff;
    if (y_true[i] >= intervals[i].lower && y_true[i] <= intervals[i].upper) covered += 1.0;
  }
  metrics.mspe /= static_cast<double>(y_true.size());
  metrics.coverage = covered / static_cast<double>(y_true.size());
  return metrics;
}

}  // namespace icdgp
