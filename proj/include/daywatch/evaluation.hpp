// Confusion counts, rate metrics, ROC/AUC with tie grouping, and
// multi-seed stability summaries over labeled scored days.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "daywatch/detection.hpp"

namespace daywatch::evaluation {

struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
};

// A 0/0 rate stays unset instead of propagating NaN.
struct Metrics {
  std::optional<double> fpr;
  std::optional<double> recall;
  std::optional<double> tnr;
  std::optional<double> accuracy;
};

// Positive = labeled malicious, predicted positive = flagged.
// Any unlabeled day is an error naming the (user, day).
ConfusionMatrix confusion(std::span<const detection::ScoredDay> scored);

Metrics metrics(const ConfusionMatrix& m);

struct RocPoint {
  double threshold = 0.0;  // flagged = ratio > threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) at the max ratio down to (1,1) at -inf
  double auc = 0.0;
};

// Thresholds sweep the distinct ratio values descending in anomalousness;
// equal ratios collapse into one step so the trapezoidal AUC equals the
// pairwise probability P(pos > neg) + 0.5 P(tie). Needs both classes.
RocCurve roc_from_scores(const std::vector<double>& ratios, const std::vector<bool>& labels);
RocCurve roc_curve(std::span<const detection::ScoredDay> scored);

struct MetricSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double stddev = 0.0;  // population
  int count = 0;
};

MetricSummary summarize_series(std::span<const double> values);

// One pipeline run's headline numbers.
struct RunMetrics {
  std::optional<double> fpr;
  std::optional<double> recall;
  std::optional<double> tnr;
  std::optional<double> accuracy;
  std::optional<double> auc;
};

// Keyed fpr/recall/tnr/accuracy/auc; runs with an unset metric are skipped
// in that metric's series.
std::map<std::string, MetricSummary> stability_report(std::span<const RunMetrics> runs);

// {tp,fp,tn,fn,fpr,recall,tnr,accuracy,auc,threshold,seed}; unset values are null.
void write_metrics_json(const std::string& path, const ConfusionMatrix& cm, const Metrics& m,
                        std::optional<double> auc, double threshold, std::uint64_t seed);

// ROC CSV "threshold,fpr,tpr"; the final threshold serializes as "-inf".
void write_roc_csv(const std::string& path, const RocCurve& roc);
RocCurve read_roc_csv(const std::string& path);  // auc recomputed from the points

void write_stability_json(const std::string& path,
                          const std::map<std::string, MetricSummary>& report);

}  // namespace daywatch::evaluation
