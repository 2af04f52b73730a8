#include "daywatch/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "daywatch/csv.hpp"
#include "daywatch/ingest.hpp"
#include "daywatch/numformat.hpp"
#include "json.hpp"

namespace daywatch::evaluation {

ConfusionMatrix confusion(std::span<const detection::ScoredDay> scored) {
  ConfusionMatrix m;
  for (const auto& d : scored) {
    if (!d.label.has_value()) {
      throw std::invalid_argument("confusion needs labels on every day; missing for user \"" +
                                  d.user_id + "\" day " + d.day.to_string());
    }
    if (*d.label) {
      (d.flagged ? m.tp : m.fn) += 1;
    } else {
      (d.flagged ? m.fp : m.tn) += 1;
    }
  }
  return m;
}

namespace {

std::optional<double> rate(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metrics metrics(const ConfusionMatrix& m) {
  Metrics out;
  out.fpr = rate(m.fp, m.tn + m.fp);
  out.recall = rate(m.tp, m.tp + m.fn);
  out.tnr = rate(m.tn, m.tn + m.fp);
  out.accuracy = rate(m.tp + m.tn, m.total());
  return out;
}

RocCurve roc_from_scores(const std::vector<double>& ratios, const std::vector<bool>& labels) {
  if (ratios.size() != labels.size()) {
    throw std::invalid_argument("roc_from_scores got mismatched lengths");
  }
  std::int64_t pos = 0;
  std::int64_t neg = 0;
  for (bool l : labels) (l ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("ROC needs at least one positive and one negative day");
  }

  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ratios[a] > ratios[b]; });

  RocCurve roc;
  roc.points.push_back({ratios[order.front()], 0.0, 0.0});
  std::int64_t cum_tp = 0;
  std::int64_t cum_fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double value = ratios[order[i]];
    std::size_t j = i;
    while (j < order.size() && ratios[order[j]] == value) {
      (labels[order[j]] ? cum_tp : cum_fp) += 1;
      ++j;
    }
    const double next_threshold =
        j < order.size() ? ratios[order[j]] : -std::numeric_limits<double>::infinity();
    roc.points.push_back({next_threshold, static_cast<double>(cum_fp) / static_cast<double>(neg),
                          static_cast<double>(cum_tp) / static_cast<double>(pos)});
    i = j;
  }

  double auc = 0.0;
  for (std::size_t k = 1; k < roc.points.size(); ++k) {
    const auto& a = roc.points[k - 1];
    const auto& b = roc.points[k];
    auc += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
  }
  roc.auc = auc;
  return roc;
}

RocCurve roc_curve(std::span<const detection::ScoredDay> scored) {
  std::vector<double> ratios;
  std::vector<bool> labels;
  ratios.reserve(scored.size());
  labels.reserve(scored.size());
  for (const auto& d : scored) {
    if (!d.label.has_value()) {
      throw std::invalid_argument("roc_curve needs labels on every day; missing for user \"" +
                                  d.user_id + "\" day " + d.day.to_string());
    }
    ratios.push_back(d.ratio);
    labels.push_back(*d.label);
  }
  return roc_from_scores(ratios, labels);
}

MetricSummary summarize_series(std::span<const double> values) {
  MetricSummary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

std::map<std::string, MetricSummary> stability_report(std::span<const RunMetrics> runs) {
  std::map<std::string, std::vector<double>> series;
  for (const RunMetrics& r : runs) {
    if (r.fpr) series["fpr"].push_back(*r.fpr);
    if (r.recall) series["recall"].push_back(*r.recall);
    if (r.tnr) series["tnr"].push_back(*r.tnr);
    if (r.accuracy) series["accuracy"].push_back(*r.accuracy);
    if (r.auc) series["auc"].push_back(*r.auc);
  }
  std::map<std::string, MetricSummary> out;
  for (const auto& [name, values] : series) out[name] = summarize_series(values);
  return out;
}

namespace {

nlohmann::json optional_json(std::optional<double> v) {
  if (v) return *v;
  return nullptr;
}

}  // namespace

void write_metrics_json(const std::string& path, const ConfusionMatrix& cm, const Metrics& m,
                        std::optional<double> auc, double threshold, std::uint64_t seed) {
  nlohmann::json j;
  j["tp"] = cm.tp;
  j["fp"] = cm.fp;
  j["tn"] = cm.tn;
  j["fn"] = cm.fn;
  j["fpr"] = optional_json(m.fpr);
  j["recall"] = optional_json(m.recall);
  j["tnr"] = optional_json(m.tnr);
  j["accuracy"] = optional_json(m.accuracy);
  j["auc"] = optional_json(auc);
  j["threshold"] = threshold;
  j["seed"] = seed;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void write_roc_csv(const std::string& path, const RocCurve& roc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "threshold,fpr,tpr\n";
  for (const RocPoint& p : roc.points) {
    csv::write_row(out, {format_double(p.threshold), format_double(p.fpr), format_double(p.tpr)});
  }
}

RocCurve read_roc_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  csv::Reader reader(in);

  std::vector<std::string> header;
  const std::vector<std::string> expected = {"threshold", "fpr", "tpr"};
  if (!reader.next(header) || header != expected) {
    throw ingest::SchemaError("ROC header must be threshold,fpr,tpr: " + path);
  }
  RocCurve roc;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    const std::size_t line = reader.line();
    if (row.size() != 3) {
      throw ingest::RowError("row width disagrees with header (" + path + ":" +
                                 std::to_string(line) + ")",
                             line);
    }
    try {
      roc.points.push_back({parse_double(row[0]), parse_double(row[1]), parse_double(row[2])});
    } catch (const std::invalid_argument& e) {
      throw ingest::RowError(std::string(e.what()) + " (" + path + ":" + std::to_string(line) +
                                 ")",
                             line);
    }
  }
  for (std::size_t k = 1; k < roc.points.size(); ++k) {
    const auto& a = roc.points[k - 1];
    const auto& b = roc.points[k];
    roc.auc += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
  }
  return roc;
}

void write_stability_json(const std::string& path,
                          const std::map<std::string, MetricSummary>& report) {
  nlohmann::json j;
  for (const auto& [name, s] : report) {
    j[name] = {{"mean", s.mean}, {"min", s.min}, {"max", s.max}, {"stddev", s.stddev},
               {"count", s.count}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace daywatch::evaluation
