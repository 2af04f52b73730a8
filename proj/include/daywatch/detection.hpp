// Per-day scoring under a user's mixture model, mean-normalized ratios,
// and threshold flagging.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "daywatch/calendar.hpp"
#include "daywatch/embedding.hpp"
#include "daywatch/mixture.hpp"

namespace daywatch::detection {

struct ScoredDay {
  std::string user_id;
  Date day;
  double log_likelihood = 0.0;
  double ratio = 0.0;
  bool flagged = false;
  std::optional<bool> label;
};

// Mixture log-likelihood per summary; order preserved, ratios left unset.
// All summaries must belong to one user and match the model dimension.
std::vector<ScoredDay> score_user_days(std::span<const embedding::DaySummary> summaries,
                                       const mixture::MixtureModel& model);

// ratio = log_likelihood / mean(log_likelihood) over this user's days.
// When |mean| < 1e-9 the ratio is ill-defined; days then get a rank-based
// surrogate ratio 2*(1 - F) (F: averaged-tie empirical CDF of the raw score,
// so the lowest raw scores approach 2) and a warning is recorded.
std::vector<ScoredDay> normalize_scores(std::vector<ScoredDay> scored,
                                        std::string* warning = nullptr);

inline constexpr double kNearZeroMean = 1e-9;
inline constexpr double kDefaultThreshold = 1.5;

// flagged = (ratio > threshold), strictly.
std::vector<ScoredDay> flag_anomalies(std::vector<ScoredDay> scored, double threshold);

// Scored CSV: "user,day,log_likelihood,ratio,flagged,label", flagged 1/0,
// label 1/0 or empty, doubles in shortest round-trip form.
void write_scored_csv(const std::string& path, std::span<const ScoredDay> scored);
std::vector<ScoredDay> read_scored_csv(const std::string& path);

}  // namespace daywatch::detection
