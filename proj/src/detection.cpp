#include "daywatch/detection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "daywatch/csv.hpp"
#include "daywatch/ingest.hpp"
#include "daywatch/numformat.hpp"

namespace daywatch::detection {

std::vector<ScoredDay> score_user_days(std::span<const embedding::DaySummary> summaries,
                                       const mixture::MixtureModel& model) {
  std::vector<ScoredDay> out;
  out.reserve(summaries.size());
  if (summaries.empty()) return out;

  const std::string& user = summaries.front().user_id;
  mixture::MixtureScorer scorer(model);
  for (const auto& s : summaries) {
    if (s.user_id != user) {
      throw std::invalid_argument("score_user_days got summaries for users \"" + user +
                                  "\" and \"" + s.user_id + "\"");
    }
    if (s.vector.size() != model.dim()) {
      throw std::invalid_argument("summary dimension " + std::to_string(s.vector.size()) +
                                  " does not match model dimension " +
                                  std::to_string(model.dim()));
    }
    ScoredDay day;
    day.user_id = s.user_id;
    day.day = s.day;
    day.log_likelihood = scorer.log_likelihood(s.vector);
    day.label = s.label;
    out.push_back(std::move(day));
  }
  return out;
}

std::vector<ScoredDay> normalize_scores(std::vector<ScoredDay> scored, std::string* warning) {
  if (scored.empty()) throw std::invalid_argument("normalize_scores got an empty list");

  double mean = 0.0;
  for (const ScoredDay& d : scored) mean += d.log_likelihood;
  mean /= static_cast<double>(scored.size());

  if (std::abs(mean) >= kNearZeroMean) {
    for (ScoredDay& d : scored) d.ratio = d.log_likelihood / mean;
    return scored;
  }

  // Rank surrogate: F = averaged-tie empirical CDF, ratio = 2*(1 - F), so the
  // most negative raw scores (the anomalies) approach 2.
  const std::size_t n = scored.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scored[a].log_likelihood < scored[b].log_likelihood;
  });
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           scored[order[j + 1]].log_likelihood == scored[order[i]].log_likelihood) {
      ++j;
    }
    // Ranks i+1 .. j+1 share the value; use their average.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    const double f = avg_rank / static_cast<double>(n);
    for (std::size_t k = i; k <= j; ++k) scored[order[k]].ratio = 2.0 * (1.0 - f);
    i = j + 1;
  }
  if (warning) {
    *warning = "user \"" + scored.front().user_id + "\": |mean log-likelihood| = " +
               format_double(std::abs(mean)) +
               " < 1e-9, ratios fall back to the rank surrogate";
  }
  return scored;
}

std::vector<ScoredDay> flag_anomalies(std::vector<ScoredDay> scored, double threshold) {
  for (ScoredDay& d : scored) d.flagged = d.ratio > threshold;
  return scored;
}

void write_scored_csv(const std::string& path, std::span<const ScoredDay> scored) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "user,day,log_likelihood,ratio,flagged,label\n";
  for (const ScoredDay& d : scored) {
    csv::write_row(out, {d.user_id, d.day.to_string(), format_double(d.log_likelihood),
                         format_double(d.ratio), d.flagged ? "1" : "0",
                         d.label.has_value() ? (*d.label ? "1" : "0") : ""});
  }
}

std::vector<ScoredDay> read_scored_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  csv::Reader reader(in);

  std::vector<std::string> header;
  const std::vector<std::string> expected = {"user",  "day",     "log_likelihood",
                                             "ratio", "flagged", "label"};
  if (!reader.next(header) || header != expected) {
    throw ingest::SchemaError("scored file header must be user,day,log_likelihood,ratio,flagged,label: " +
                              path);
  }

  std::vector<ScoredDay> out;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    const std::size_t line = reader.line();
    if (row.size() != expected.size()) {
      throw ingest::RowError("row width disagrees with header (" + path + ":" +
                                 std::to_string(line) + ")",
                             line);
    }
    ScoredDay d;
    d.user_id = row[0];
    try {
      d.day = Date::parse(row[1]);
      d.log_likelihood = parse_double(row[2]);
      d.ratio = parse_double(row[3]);
      if (row[4] != "0" && row[4] != "1") throw std::invalid_argument("flagged must be 0 or 1");
      d.flagged = row[4] == "1";
      if (row[5] == "1") {
        d.label = true;
      } else if (row[5] == "0") {
        d.label = false;
      } else if (!row[5].empty()) {
        throw std::invalid_argument("label must be 1, 0 or empty");
      }
    } catch (const std::invalid_argument& e) {
      throw ingest::RowError(std::string(e.what()) + " (" + path + ":" + std::to_string(line) +
                                 ")",
                             line);
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace daywatch::detection
