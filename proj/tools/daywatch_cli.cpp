// Command line front end: corpus synthesis, ingestion, per-user training,
// scoring, evaluation, full pipeline runs and threshold sweeps.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "daywatch/detection.hpp"
#include "daywatch/embedding.hpp"
#include "daywatch/evaluation.hpp"
#include "daywatch/hash.hpp"
#include "daywatch/ingest.hpp"
#include "daywatch/mixture.hpp"
#include "daywatch/numformat.hpp"
#include "daywatch/pipeline.hpp"
#include "daywatch/synthgen.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using namespace daywatch;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// run/sweep configuration: an optional config file plus key=value overrides
// collected in flag order and funneled through apply_config_entry, so the
// flags accept exactly the config file syntax for every field.
struct RunFlags {
  std::string config_file;
  bool synth_defaults = false;
  std::vector<std::pair<std::string, std::string>> entries;
};

auto entry_adder(CLI::App* cmd, RunFlags& st) {
  return [cmd, &st](const std::string& flag, std::string key, const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&st, key = std::move(key)](const std::string& v) { st.entries.emplace_back(key, v); },
        desc);
  };
}

// Embedding, fit and variant flags: shared by train, run and sweep.
void add_model_flags(CLI::App* cmd, RunFlags& st) {
  cmd->add_option("--config", st.config_file,
                  "flat key=value config file, applied before any flag");
  auto kv = entry_adder(cmd, st);
  kv("--dim", "embedding.dim", "embedding dimension");
  kv("--window", "embedding.window", "skip-gram context radius");
  kv("--negatives", "embedding.negatives", "negative samples per pair");
  kv("--epochs", "embedding.epochs", "training epochs");
  kv("--learning-rate", "embedding.learning_rate", "initial learning rate");
  kv("--learning-rate-min", "embedding.learning_rate_min", "final learning rate");
  kv("--k-max", "fit.k_max", "mixture components (upper bound for bgmm)");
  kv("--reg-covar", "fit.reg_covar", "covariance regularization");
  kv("--tol", "fit.tol", "convergence tolerance");
  kv("--max-iter", "fit.max_iter", "iteration cap");
  kv("--n-init", "fit.n_init", "restarts per fit");
  kv("--weight-concentration", "fit.weight_concentration", "Dirichlet concentration prior");
  kv("--variant", "variant", "bgmm or gmm-fixed-<K>");
}

// Corpus source and run-level flags: run and sweep only.
void add_source_flags(CLI::App* cmd, RunFlags& st) {
  cmd->add_flag("--synth", st.synth_defaults,
                "use the synthetic corpus source (required only when no synth.* flag is given)");
  auto kv = entry_adder(cmd, st);
  kv("--logon", "input.logon", "logon domain CSV");
  kv("--device", "input.device", "device domain CSV");
  kv("--http", "input.http", "http domain CSV");
  kv("--email", "input.email", "email domain CSV");
  kv("--file", "input.file", "file domain CSV");
  kv("--labels", "input.labels", "label sidecar CSV (user,day)");
  kv("--users", "synth.users", "synthetic users");
  kv("--days", "synth.days", "synthetic calendar span in days");
  kv("--behaviors", "synth.behaviors", "behavior regimes per user");
  kv("--anomaly-users", "synth.anomaly_users", "users with injected days");
  kv("--anomaly-days", "synth.anomaly_days", "injected days per anomalous user");
  kv("--separation", "synth.separation", "regime spacing in sigmas");
  kv("--threshold", "threshold", "flagging threshold on the likelihood ratio");
  kv("--seeds", "seeds", "comma list or A..B range of run seeds");
  kv("--out", "output_dir", "output directory");
  kv("--threads", "threads", "worker threads (1 = bitwise reproducible)");
}

pipeline::RunConfig build_config(const RunFlags& st) {
  pipeline::RunConfig config;
  if (!st.config_file.empty()) config = pipeline::read_config_file(st.config_file);
  if (st.synth_defaults && !config.synth) config.synth.emplace();
  for (const auto& [key, value] : st.entries) pipeline::apply_config_entry(config, key, value);
  return config;
}

std::string json_metric(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return "n/a";
  return format_double(v.get<double>());
}

int cmd_synth(const synthgen::SynthConfig& config, const std::string& out_dir) {
  config.validate();
  const auto t0 = Clock::now();
  const synthgen::SynthManifest m = synthgen::generate_org(config, out_dir);
  std::cerr << "[synth] corpus written in " << format_double(ms_since(t0)) << " ms\n";
  std::cout << m.manifest_json << "\n";
  return 0;
}

int cmd_ingest(const pipeline::InputPaths& input, const std::string& out_csv) {
  const auto t0 = Clock::now();
  std::vector<ingest::AuditEvent> events;
  const std::pair<const std::string*, ingest::Domain> sources[] = {
      {&input.logon_csv, ingest::Domain::Logon}, {&input.device_csv, ingest::Domain::Device},
      {&input.http_csv, ingest::Domain::Http},   {&input.email_csv, ingest::Domain::Email},
      {&input.file_csv, ingest::Domain::File},
  };
  for (const auto& [path, domain] : sources) {
    std::vector<ingest::AuditEvent> part = ingest::parse_domain_csv(*path, domain);
    events.insert(events.end(), std::make_move_iterator(part.begin()),
                  std::make_move_iterator(part.end()));
  }
  ingest::LabelSet labels;
  const ingest::LabelSet* label_ptr = nullptr;
  if (input.label_sidecar) {
    labels = ingest::read_label_sidecar(*input.label_sidecar);
    label_ptr = &labels;
  }
  const auto sequences = ingest::aggregate_user_days(events, label_ptr);
  ingest::write_sequences_csv(out_csv, sequences);
  std::cerr << "[ingest] " << events.size() << " events -> " << sequences.size()
            << " user-days in " << format_double(ms_since(t0)) << " ms\n";
  std::cout << out_csv << "\n";
  return 0;
}

struct TrainOptions {
  std::string sequences_csv;
  std::string labels_csv;  // sequence files carry no labels; reattach here
  std::string out_dir;
  std::uint64_t seed = 0;
  RunFlags flags;  // embedding.*, fit.* and variant reuse the run keys
};

int cmd_train(const TrainOptions& opt) {
  pipeline::RunConfig config = build_config(opt.flags);
  auto sequences = ingest::read_sequences_csv(opt.sequences_csv);
  if (sequences.empty()) throw std::runtime_error("no user-days in " + opt.sequences_csv);
  if (!opt.labels_csv.empty()) {
    ingest::apply_labels(sequences, ingest::read_label_sidecar(opt.labels_csv));
  }
  fs::create_directories(opt.out_dir);

  double embed_ms = 0.0;
  double fit_ms = 0.0;
  int users = 0;
  std::vector<std::string> seen;
  std::size_t i = 0;
  while (i < sequences.size()) {
    const std::string& user = sequences[i].user_id;
    if (std::find(seen.begin(), seen.end(), user) != seen.end()) {
      throw std::runtime_error("sequences are not grouped by user: \"" + user +
                               "\" appears in two blocks");
    }
    seen.push_back(user);
    std::size_t j = i;
    while (j < sequences.size() && sequences[j].user_id == user) ++j;
    const std::span<const ingest::UserDaySequence> days(&sequences[i], j - i);

    const std::string dir = opt.out_dir + "/" + user_file_tag(user);
    fs::create_directories(dir);

    auto t0 = Clock::now();
    embedding::EmbeddingConfig ec = config.embedding;
    ec.seed = pipeline::user_embed_seed(opt.seed, user);
    const embedding::EmbeddingTable table = embedding::train_skipgram(days, ec);
    embedding::save_table_json(dir + "/table.json", table, ec);
    const std::vector<embedding::DaySummary> summaries = embedding::summarize_all(days, table);
    embedding::write_summaries_csv(dir + "/summaries.csv", summaries);
    embed_ms += ms_since(t0);

    t0 = Clock::now();
    mixture::FitConfig fc = config.fit;
    fc.seed = pipeline::user_fit_seed(opt.seed, user);
    const Eigen::MatrixXd X = embedding::summary_matrix(summaries);
    mixture::MixtureModel model;
    mixture::FitReport report;
    if (config.variant.kind == pipeline::ModelKind::kBgmm) {
      std::tie(model, report) = mixture::fit_bgmm(X, fc);
    } else {
      fc.k = std::min(config.variant.fixed_k, static_cast<int>(X.rows()));
      std::tie(model, report) = mixture::fit_gmm_em(X, fc);
    }
    mixture::save_model_json(dir + "/model.json", user, model, fc, report);
    fit_ms += ms_since(t0);

    ++users;
    i = j;
  }
  std::cerr << "[train] embed " << format_double(embed_ms) << " ms | fit "
            << format_double(fit_ms) << " ms (" << users << " users)\n";
  std::cout << opt.out_dir << "\n";
  return 0;
}

int cmd_score(const std::string& models_dir, const std::string& out_csv, double threshold) {
  const auto t0 = Clock::now();
  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(models_dir)) {
    if (entry.is_directory()) dirs.push_back(entry.path().string());
  }
  if (dirs.empty()) throw std::runtime_error("no per-user directories under " + models_dir);
  std::sort(dirs.begin(), dirs.end());

  std::vector<detection::ScoredDay> all;
  for (const std::string& dir : dirs) {
    const auto summaries = embedding::read_summaries_csv(dir + "/summaries.csv");
    const mixture::SavedModel saved = mixture::load_model_json(dir + "/model.json");
    std::string warning;
    auto scored = detection::normalize_scores(detection::score_user_days(summaries, saved.model),
                                              &warning);
    if (!warning.empty()) std::cerr << "[score] " << warning << "\n";
    scored = detection::flag_anomalies(std::move(scored), threshold);
    all.insert(all.end(), std::make_move_iterator(scored.begin()),
               std::make_move_iterator(scored.end()));
  }
  std::sort(all.begin(), all.end(), [](const detection::ScoredDay& a, const detection::ScoredDay& b) {
    return a.user_id != b.user_id ? a.user_id < b.user_id : a.day < b.day;
  });
  detection::write_scored_csv(out_csv, all);
  std::cerr << "[score] " << all.size() << " user-days in " << format_double(ms_since(t0))
            << " ms\n";
  std::cout << out_csv << "\n";
  return 0;
}

int cmd_evaluate(const std::string& scored_csv, const std::string& out_dir, double threshold,
                 std::uint64_t seed) {
  const auto t0 = Clock::now();
  auto scored = detection::read_scored_csv(scored_csv);
  scored = detection::flag_anomalies(std::move(scored), threshold);
  fs::create_directories(out_dir);

  const evaluation::ConfusionMatrix cm = evaluation::confusion(scored);
  const evaluation::Metrics m = evaluation::metrics(cm);
  std::optional<double> auc;
  if (cm.tp + cm.fn > 0 && cm.tn + cm.fp > 0) {
    const evaluation::RocCurve roc = evaluation::roc_curve(scored);
    evaluation::write_roc_csv(out_dir + "/roc.csv", roc);
    auc = roc.auc;
  } else {
    std::cerr << "[evaluate] single-class labels, roc skipped\n";
  }
  evaluation::write_metrics_json(out_dir + "/metrics.json", cm, m, auc, threshold, seed);
  std::cerr << "[evaluate] " << scored.size() << " rows in " << format_double(ms_since(t0))
            << " ms\n";

  std::cout << "tp " << cm.tp << " fp " << cm.fp << " tn " << cm.tn << " fn " << cm.fn;
  if (m.recall) std::cout << " recall " << format_double(*m.recall);
  if (m.fpr) std::cout << " fpr " << format_double(*m.fpr);
  if (auc) std::cout << " auc " << format_double(*auc);
  std::cout << "\n";
  return 0;
}

int cmd_run(const RunFlags& flags) {
  const pipeline::RunConfig config = build_config(flags);
  const pipeline::RunManifest manifest = pipeline::run(config);
  for (const pipeline::SeedArtifacts& sa : manifest.seeds) {
    std::cout << "seed " << sa.seed << ": ";
    if (sa.metrics_json.empty()) {
      std::cout << sa.scored_csv << "\n";
      continue;
    }
    std::ifstream in(sa.metrics_json);
    const nlohmann::json j = nlohmann::json::parse(in);
    std::cout << "recall " << json_metric(j, "recall") << " fpr " << json_metric(j, "fpr")
              << " auc " << json_metric(j, "auc") << "\n";
  }
  std::cout << manifest.manifest_json << "\n";
  return 0;
}

int cmd_sweep(const RunFlags& flags, const std::string& list, const std::string& grid) {
  std::vector<double> thresholds;
  if (!grid.empty()) {
    const auto c1 = grid.find(':');
    const auto c2 = grid.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw std::runtime_error("--grid wants lo:hi:count");
    }
    const double lo = parse_double(grid.substr(0, c1));
    const double hi = parse_double(grid.substr(c1 + 1, c2 - c1 - 1));
    const long count = std::stol(grid.substr(c2 + 1));
    if (count < 1) throw std::runtime_error("--grid count must be >= 1");
    for (long i = 0; i < count; ++i) {
      thresholds.push_back(count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) /
                                                      static_cast<double>(count - 1));
    }
  }
  if (!list.empty()) {
    std::size_t start = 0;
    while (start <= list.size()) {
      const auto comma = list.find(',', start);
      const std::string token =
          list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      thresholds.push_back(parse_double(token));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (thresholds.empty()) throw std::runtime_error("sweep wants --thresholds or --grid");

  const pipeline::RunConfig config = build_config(flags);
  const pipeline::SweepResult sweep = pipeline::sweep_thresholds(config, thresholds);
  if (sweep.auc) std::cout << "auc " << format_double(*sweep.auc) << "\n";
  std::cout << sweep.metrics_json << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"per-user daily-activity anomaly detection over audit CSVs"};
  app.require_subcommand(1);

  synthgen::SynthConfig synth_config;
  std::string synth_out;
  CLI::App* synth = app.add_subcommand("synth", "generate a labeled synthetic audit corpus");
  synth->add_option("--out", synth_out, "corpus directory")->required();
  synth->add_option("--users", synth_config.n_users, "number of users");
  synth->add_option("--days", synth_config.n_days, "calendar span in days");
  synth->add_option("--behaviors", synth_config.behaviors_per_user, "behavior regimes per user");
  synth->add_option("--anomaly-users", synth_config.anomaly_users, "users with injected days");
  synth->add_option("--anomaly-days", synth_config.anomaly_days_per_user,
                    "injected days per anomalous user");
  synth->add_option("--separation", synth_config.separation, "regime spacing in sigmas");
  synth->add_option("--seed", synth_config.seed, "generator seed");
  synth->callback([&] { cmd_synth(synth_config, synth_out); });

  pipeline::InputPaths ingest_input;
  std::string ingest_labels;
  std::string ingest_out;
  CLI::App* ing = app.add_subcommand("ingest", "parse domain CSVs into per-user day sequences");
  ing->add_option("--logon", ingest_input.logon_csv, "logon domain CSV")->required();
  ing->add_option("--device", ingest_input.device_csv, "device domain CSV")->required();
  ing->add_option("--http", ingest_input.http_csv, "http domain CSV")->required();
  ing->add_option("--email", ingest_input.email_csv, "email domain CSV")->required();
  ing->add_option("--file", ingest_input.file_csv, "file domain CSV")->required();
  ing->add_option("--labels", ingest_labels, "label sidecar CSV (user,day)");
  ing->add_option("--out", ingest_out, "output sequences CSV")->required();
  ing->callback([&] {
    if (!ingest_labels.empty()) ingest_input.label_sidecar = ingest_labels;
    cmd_ingest(ingest_input, ingest_out);
  });

  TrainOptions train_options;
  CLI::App* train =
      app.add_subcommand("train", "train one embedding table and one mixture model per user");
  train->add_option("--sequences", train_options.sequences_csv, "sequences CSV from ingest")
      ->required();
  train->add_option("--labels", train_options.labels_csv,
                    "label sidecar to attach (sequence files carry no labels)");
  train->add_option("--out", train_options.out_dir, "per-user artifact directory")->required();
  train->add_option("--seed", train_options.seed, "run seed (per-user sub-seeds derive from it)");
  add_model_flags(train, train_options.flags);
  train->callback([&] { cmd_train(train_options); });

  std::string score_models;
  std::string score_out;
  double score_threshold = detection::kDefaultThreshold;
  CLI::App* score =
      app.add_subcommand("score", "score persisted per-user artifacts into one flagged CSV");
  score->add_option("--models", score_models, "per-user artifact directory from train")
      ->required();
  score->add_option("--out", score_out, "output scored CSV")->required();
  score->add_option("--threshold", score_threshold, "flagging threshold on the ratio");
  score->callback([&] { cmd_score(score_models, score_out, score_threshold); });

  std::string eval_scored;
  std::string eval_out;
  double eval_threshold = detection::kDefaultThreshold;
  std::uint64_t eval_seed = 0;
  CLI::App* eval =
      app.add_subcommand("evaluate", "confusion, rate metrics and ROC from a labeled scored CSV");
  eval->add_option("--scored", eval_scored, "scored CSV with labels")->required();
  eval->add_option("--out", eval_out, "output directory for metrics.json and roc.csv")
      ->required();
  eval->add_option("--threshold", eval_threshold,
                   "flags are recomputed from the stored ratios at this threshold");
  eval->add_option("--seed", eval_seed, "seed echoed into metrics.json");
  eval->callback([&] { cmd_evaluate(eval_scored, eval_out, eval_threshold, eval_seed); });

  RunFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "full pipeline over one or many seeds");
  add_model_flags(run, run_flags);
  add_source_flags(run, run_flags);
  run->callback([&] { cmd_run(run_flags); });

  RunFlags sweep_flags;
  std::string sweep_list;
  std::string sweep_grid;
  CLI::App* sweep =
      app.add_subcommand("sweep", "train once, then flag and evaluate at many thresholds");
  add_model_flags(sweep, sweep_flags);
  add_source_flags(sweep, sweep_flags);
  sweep->add_option("--thresholds", sweep_list, "comma-separated thresholds (inf allowed)");
  sweep->add_option("--grid", sweep_grid, "linear grid lo:hi:count");
  sweep->callback([&] { cmd_sweep(sweep_flags, sweep_list, sweep_grid); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
