#pragma once

// Glass-detection metrics: pixel accuracy, IoU, max F-measure (beta^2 = 0.3),
// MAE and balanced error rate, plus the dataset-level aggregation used by the
// eval tooling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "glasskit/error.hpp"
#include "glasskit/grid.hpp"

namespace glasskit {

/// Predicted glass probability per pixel, values in [0,1].
using PredictionMap = Grid<double>;

inline constexpr double kFBetaSquared = 0.3;
inline constexpr int kThresholdCount = 256;
inline constexpr double kBinarizeThreshold = 0.5;

struct ConfusionCounts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::int64_t np() const { return tp + fn; }  // glass pixels
  std::int64_t nn() const { return tn + fp; }  // non-glass pixels
  std::int64_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct ImageMetrics {
  std::string name;
  double acc = 0, iou = 0, f_beta = 0, mae = 0, ber = 0;
};

struct MetricsReport {
  double acc = 0, iou = 0, f_beta = 0, mae = 0, ber = 0;
  std::size_t image_count = 0;
  std::vector<ImageMetrics> per_image;
};

namespace detail {
template <class P>
void require_same_shape(const Grid<P>& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt) || pred.size() != gt.size())
    throw InvalidInput("prediction is " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                       " but ground truth is " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
}

inline double threshold_value(int k) { return static_cast<double>(k) / 255.0; }

// Number of sweep thresholds k/255 that p meets, minus one: the largest k with
// k/255 <= p, or -1 when p is below every threshold.
inline int threshold_bucket(double p) {
  int k = static_cast<int>(std::floor(p * 255.0));
  k = std::clamp(k, -1, kThresholdCount - 1);
  while (k + 1 < kThresholdCount && threshold_value(k + 1) <= p) ++k;
  while (k >= 0 && threshold_value(k) > p) --k;
  return k;
}

inline double f_from(double precision, double recall) {
  const double den = kFBetaSquared * precision + recall;
  return den > 0 ? (1.0 + kFBetaSquared) * precision * recall / den : 0.0;
}

// Precision/recall at each of the 256 thresholds. Zero denominators give 0.
inline std::pair<std::array<double, kThresholdCount>, std::array<double, kThresholdCount>> pr_curve(
    const PredictionMap& pred, const BinaryMask& gt) {
  std::array<std::int64_t, kThresholdCount + 1> pos{}, all{};
  std::int64_t glass = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int b = threshold_bucket(pred.values[i]) + 1;
    ++all[b];
    if (gt.values[i]) {
      ++pos[b];
      ++glass;
    }
  }
  std::array<double, kThresholdCount> precision{}, recall{};
  // Pixels in bucket b meet thresholds 0..b-1; accumulate from the top.
  std::int64_t tp = 0, predicted = 0;
  for (int k = kThresholdCount - 1; k >= 0; --k) {
    tp += pos[k + 1];
    predicted += all[k + 1];
    precision[k] = predicted ? static_cast<double>(tp) / predicted : 0.0;
    recall[k] = glass ? static_cast<double>(tp) / glass : 0.0;
  }
  return {precision, recall};
}
}  // namespace detail

inline ConfusionCounts confusion_counts(const PredictionMap& pred, const BinaryMask& gt,
                                        double threshold = kBinarizeThreshold) {
  detail::require_same_shape(pred, gt);
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidInput("threshold must lie in [0,1]");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool fg = pred.values[i] >= threshold;
    if (gt.values[i]) {
      fg ? ++c.tp : ++c.fn;
    } else {
      fg ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

inline double pixel_accuracy(const ConfusionCounts& c) {
  return c.total() ? static_cast<double>(c.tp + c.tn) / c.total() : 1.0;
}

inline double iou(const ConfusionCounts& c) {
  const auto den = c.tp + c.fp + c.fn;
  return den ? static_cast<double>(c.tp) / den : 1.0;
}

/// Balanced error rate in percent; a class absent from the ground truth scores as perfect.
inline double ber(const ConfusionCounts& c) {
  const double pos = c.np() ? static_cast<double>(c.tp) / c.np() : 1.0;
  const double neg = c.nn() ? static_cast<double>(c.tn) / c.nn() : 1.0;
  return 100.0 * (1.0 - 0.5 * (pos + neg));
}

inline double f_measure_max(const PredictionMap& pred, const BinaryMask& gt) {
  detail::require_same_shape(pred, gt);
  const auto [precision, recall] = detail::pr_curve(pred, gt);
  double best = 0.0;
  for (int k = 0; k < kThresholdCount; ++k) best = std::max(best, detail::f_from(precision[k], recall[k]));
  return best;
}

inline double mae(const PredictionMap& pred, const BinaryMask& gt) {
  detail::require_same_shape(pred, gt);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred.values[i] - gt.values[i]);
  return pred.empty() ? 0.0 : sum / static_cast<double>(pred.size());
}

/// Per-image acc/IoU/BER at threshold 0.5 and MAE, averaged over images. The
/// max F-measure is taken over the mean precision/recall curve.
inline MetricsReport evaluate_dataset(const std::vector<std::pair<PredictionMap, BinaryMask>>& pairs,
                                      const std::vector<std::string>& names = {}) {
  if (pairs.empty()) throw InvalidInput("evaluate_dataset needs at least one image");
  MetricsReport report;
  report.image_count = pairs.size();
  std::array<double, kThresholdCount> mean_p{}, mean_r{};
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto& [pred, gt] = pairs[n];
    const auto c = confusion_counts(pred, gt);
    ImageMetrics row;
    row.name = n < names.size() ? names[n] : std::to_string(n);
    row.acc = pixel_accuracy(c);
    row.iou = iou(c);
    row.ber = ber(c);
    row.mae = mae(pred, gt);
    const auto [precision, recall] = detail::pr_curve(pred, gt);
    for (int k = 0; k < kThresholdCount; ++k) {
      row.f_beta = std::max(row.f_beta, detail::f_from(precision[k], recall[k]));
      mean_p[k] += precision[k];
      mean_r[k] += recall[k];
    }
    report.acc += row.acc;
    report.iou += row.iou;
    report.ber += row.ber;
    report.mae += row.mae;
    report.per_image.push_back(std::move(row));
  }
  const double n = static_cast<double>(pairs.size());
  report.acc /= n;
  report.iou /= n;
  report.ber /= n;
  report.mae /= n;
  for (int k = 0; k < kThresholdCount; ++k)
    report.f_beta = std::max(report.f_beta, detail::f_from(mean_p[k] / n, mean_r[k] / n));
  return report;
}

}  // namespace glasskit
