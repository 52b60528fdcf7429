#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hifm/errors.hpp"

namespace hifm {

// Metric cannot be computed on this input (e.g. single-class labels).
// cmd_evaluate marks the cell undefined and keeps going.
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double mse(const std::vector<double>& predicted, const std::vector<double>& actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    throw ParameterError("mse: vectors must have equal nonzero length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    s += d * d;
  }
  return s / static_cast<double>(predicted.size());
}

inline double coefficient_mse(const std::vector<double>& estimated,
                              const std::vector<double>& truth) {
  return mse(estimated, truth);
}

namespace detail {

inline void check_two_classes(const std::vector<int>& labels) {
  bool pos = false, neg = false;
  for (int v : labels) (v != 0 ? pos : neg) = true;
  if (!pos || !neg) throw UndefinedMetricError("metric undefined: single-class labels");
}

}  // namespace detail

// Rank-statistic AUC: P(score+ > score-) + P(tie)/2, via mid-ranks.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ParameterError("auc: scores/labels must have equal nonzero length");
  }
  detail::check_two_classes(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] != 0) {
        rank_sum_pos += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  return (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ROC points from (0,0) to (1,1), one step per distinct score, ties collapsed.
// The trapezoidal area under these points equals the rank AUC.
inline std::vector<std::pair<double, double>> roc_curve(const std::vector<double>& scores,
                                                        const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ParameterError("roc_curve: scores/labels must have equal nonzero length");
  }
  detail::check_two_classes(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double n_pos = 0, n_neg = 0;
  for (int v : labels) (v != 0 ? n_pos : n_neg) += 1.0;
  std::vector<std::pair<double, double>> points;
  points.emplace_back(0.0, 0.0);
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t t = i; t < j; ++t) (labels[order[t]] != 0 ? tp : fp) += 1.0;
    points.emplace_back(fp / n_neg, tp / n_pos);
    i = j;
  }
  return points;
}

inline double trapezoid_area(const std::vector<std::pair<double, double>>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += 0.5 * (points[i].second + points[i - 1].second) *
            (points[i].first - points[i - 1].first);
  }
  return area;
}

// Precision-recall points at decreasing thresholds, ties collapsed.
inline std::vector<std::pair<double, double>> pr_curve(const std::vector<double>& scores,
                                                       const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ParameterError("pr_curve: scores/labels must have equal nonzero length");
  }
  double n_pos = 0;
  for (int v : labels) {
    if (v != 0) n_pos += 1.0;
  }
  if (n_pos == 0.0) throw UndefinedMetricError("metric undefined: no positive labels");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t t = i; t < j; ++t) (labels[order[t]] != 0 ? tp : fp) += 1.0;
    points.emplace_back(tp / n_pos, tp / (tp + fp));
    i = j;
  }
  return points;
}

// Step-interpolated area under the precision-recall points.
inline double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto points = pr_curve(scores, labels);
  double area = 0.0;
  double prev_recall = 0.0;
  for (const auto& [recall, precision] : points) {
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

// Sensitivity/specificity with "positive" meaning score >= threshold.
inline std::pair<double, double> sens_spec_at(const std::vector<double>& scores,
                                              const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ParameterError("sens_spec_at: scores/labels must have equal nonzero length");
  }
  detail::check_two_classes(labels);
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] != 0) {
      (predicted ? tp : fn) += 1.0;
    } else {
      (predicted ? fp : tn) += 1.0;
    }
  }
  return {tp / (tp + fn), tn / (tn + fp)};
}

}  // namespace hifm
