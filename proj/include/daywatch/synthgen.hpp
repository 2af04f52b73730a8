// Seeded generator of a small synthetic organization's audit CSVs with
// injected exfiltration-style days and full ground truth, used as the
// end-to-end test bed.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "daywatch/calendar.hpp"
#include "daywatch/detection.hpp"
#include "daywatch/ingest.hpp"

namespace daywatch::synthgen {

struct SynthConfig {
  int n_users = 50;
  int n_days = 200;  // calendar span; events land on weekdays only
  int behaviors_per_user = 2;
  int anomaly_users = 5;
  int anomaly_days_per_user = 3;
  std::uint64_t seed = 0;
  double separation = 6.0;  // regime spacing in within-regime sigmas

  void validate() const;
};

// Activity volume channels; device pairs emit Connect+Disconnect each.
inline constexpr int kChannels = 4;
enum Channel { kHttp = 0, kEmail = 1, kFile = 2, kDevicePairs = 3 };

using CountVector = std::array<double, kChannels>;

struct DayTruth {
  Date day;
  int regime = 0;  // index into the user's regimes, -1 for injected days
  std::array<int, kChannels> counts{};
  bool label = false;
};

struct UserTruth {
  std::string user_id;
  std::vector<CountVector> regime_means;
  std::vector<DayTruth> days;  // dated ascending
};

struct OrgTruth {
  SynthConfig config;
  std::vector<UserTruth> users;

  ingest::LabelSet labels() const;
  int positive_days() const;
};

// Count noise around every regime mean; injected days use twice this spread.
inline constexpr double kCountSigma = 1.0;

// Pure draw of the whole organization: per-user behavior regimes (distinct
// activity-channel archetypes spaced `separation` sigmas apart), weekday
// activity from the configured start of 2020, and the configured number of
// injected high-File/Email/device days.
OrgTruth draw_org(const SynthConfig& config);

struct SynthManifest {
  std::string out_dir;
  std::string logon_csv;
  std::string device_csv;
  std::string http_csv;
  std::string email_csv;
  std::string file_csv;
  std::string label_sidecar;
  std::string ground_truth_json;
  std::string manifest_json;
};

// Draws the org and writes the five domain CSVs (schemas the ingest module
// consumes), the label sidecar, ground truth and a manifest under out_dir.
// Identical config -> byte-identical files.
SynthManifest generate_org(const SynthConfig& config, const std::string& out_dir);

void write_ground_truth(const std::string& path, const OrgTruth& truth);
OrgTruth read_ground_truth(const std::string& path);

SynthManifest read_manifest(const std::string& path);

// Log-likelihood of every day's count vector under its user's true
// equal-weight regime mixture: the count-space reference detector the
// embedding pipeline is measured against.
std::vector<detection::ScoredDay> oracle_scores(const OrgTruth& truth);

}  // namespace daywatch::synthgen
