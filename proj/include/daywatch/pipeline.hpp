// End-to-end orchestration: ingest (or synthesize) audit logs, train one
// embedding and one mixture model per user, score and flag every user-day,
// evaluate against labels, and persist every intermediate artifact.

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "daywatch/detection.hpp"
#include "daywatch/embedding.hpp"
#include "daywatch/evaluation.hpp"
#include "daywatch/ingest.hpp"
#include "daywatch/mixture.hpp"
#include "daywatch/synthgen.hpp"

namespace daywatch::pipeline {

// External audit input: the five domain CSVs plus an optional label sidecar.
struct InputPaths {
  std::string logon_csv;
  std::string device_csv;
  std::string http_csv;
  std::string email_csv;
  std::string file_csv;
  std::optional<std::string> label_sidecar;
};

enum class ModelKind { kBgmm, kGmmFixedK };

struct ModelVariant {
  ModelKind kind = ModelKind::kBgmm;
  int fixed_k = 1;  // used by kGmmFixedK only
};

// "bgmm" or "gmm-fixed-<K>".
std::string variant_to_string(const ModelVariant& variant);
ModelVariant variant_from_string(const std::string& text);

struct RunConfig {
  // Exactly one of input / synth. A synthetic corpus is regenerated per run
  // seed (the SynthConfig seed field is overridden with the run seed).
  std::optional<InputPaths> input;
  std::optional<synthgen::SynthConfig> synth;

  embedding::EmbeddingConfig embedding;
  mixture::FitConfig fit;
  double threshold = detection::kDefaultThreshold;
  ModelVariant variant;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir;
  int threads = 1;  // 1 guarantees bitwise-reproducible artifacts

  void validate() const;
};

// One entry of a flat key=value config file; unknown keys are errors.
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

// Flat key=value file, '#' comments and blank lines allowed. Keys mirror the
// CLI flags: input.logon, synth.users, embedding.dim, fit.k_max, threshold,
// variant, seeds (comma list or A..B range), output_dir, threads, ...
RunConfig read_config_file(const std::string& path);

// Any stage failure, carrying the stage name and (when per-user) the user id.
struct StageError : std::runtime_error {
  StageError(std::string stage_name, std::string user, const std::string& message);

  std::string stage;
  std::string user_id;  // empty for corpus-level stages
};

// Per-user sub-seeds derived from the run seed. Shared by run() and the
// stage-level CLI commands so separately trained artifacts match a full
// run bitwise.
std::uint64_t user_embed_seed(std::uint64_t run_seed, const std::string& user_id);
std::uint64_t user_fit_seed(std::uint64_t run_seed, const std::string& user_id);

struct UserArtifacts {
  std::string user_id;
  std::string table_json;
  std::string summaries_csv;
  std::string model_json;
};

struct SeedArtifacts {
  std::uint64_t seed = 0;
  std::string seed_dir;
  std::string corpus_dir;     // synthetic runs only
  std::string sequences_csv;
  std::string scored_csv;
  std::string metrics_json;   // empty without labels
  std::string roc_csv;        // empty without labels or with a single class
  std::vector<UserArtifacts> users;
};

struct RunManifest {
  std::string output_dir;
  std::string manifest_json;
  std::string stability_json;  // empty when no seed produced metrics
  std::vector<SeedArtifacts> seeds;
};

void write_run_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_run_manifest(const std::string& path);

// Executes every stage for every configured seed, persists all artifacts
// under output_dir/seed-<seed>/, logs per-stage timing to stderr, and writes
// the run manifest plus (when labels exist) a cross-seed stability report.
RunManifest run(const RunConfig& config);

struct ThresholdMetrics {
  double threshold = 0.0;
  evaluation::ConfusionMatrix confusion;
  evaluation::Metrics metrics;
};

struct SweepResult {
  std::string sweep_dir;
  std::string roc_csv;       // empty with a single class
  std::string metrics_json;
  std::optional<double> auc;
  std::vector<ThresholdMetrics> rows;
};

// Trains and scores once on config.seeds.front(), then recomputes only
// flagging and evaluation per threshold. Requires a labeled corpus.
SweepResult sweep_thresholds(const RunConfig& config, const std::vector<double>& thresholds);

}  // namespace daywatch::pipeline
