#include "daywatch/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "daywatch/hash.hpp"
#include "daywatch/numformat.hpp"
#include "json.hpp"

namespace daywatch::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t user_embed_seed(std::uint64_t run_seed, const std::string& user_id) {
  return mix_seed(run_seed, fnv1a64(user_id + "#embed"));
}

std::uint64_t user_fit_seed(std::uint64_t run_seed, const std::string& user_id) {
  return mix_seed(run_seed, fnv1a64(user_id + "#fit"));
}

std::string variant_to_string(const ModelVariant& variant) {
  if (variant.kind == ModelKind::kBgmm) return "bgmm";
  return "gmm-fixed-" + std::to_string(variant.fixed_k);
}

ModelVariant variant_from_string(const std::string& text) {
  if (text == "bgmm") return {ModelKind::kBgmm, 1};
  const std::string prefix = "gmm-fixed-";
  if (text.rfind(prefix, 0) == 0) {
    const std::string digits = text.substr(prefix.size());
    if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
      const int k = std::stoi(digits);
      if (k >= 1) return {ModelKind::kGmmFixedK, k};
    }
  }
  throw std::invalid_argument("unknown model variant \"" + text +
                              "\" (expected \"bgmm\" or \"gmm-fixed-<K>\")");
}

void RunConfig::validate() const {
  if (input.has_value() == synth.has_value()) {
    throw std::invalid_argument("exactly one input source required: csv paths or synth");
  }
  if (synth) synth->validate();
  if (input) {
    for (const std::string* p : {&input->logon_csv, &input->device_csv, &input->http_csv,
                                 &input->email_csv, &input->file_csv}) {
      if (p->empty()) throw std::invalid_argument("all five domain csv paths are required");
    }
  }
  embedding.validate();
  fit.validate();
  if (std::isnan(threshold)) throw std::invalid_argument("threshold must not be NaN");
  if (variant.kind == ModelKind::kGmmFixedK && variant.fixed_k < 1) {
    throw std::invalid_argument("gmm-fixed-K requires K >= 1");
  }
  if (seeds.empty()) throw std::invalid_argument("at least one seed required");
  if (output_dir.empty()) throw std::invalid_argument("output_dir required");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

StageError::StageError(std::string stage_name, std::string user, const std::string& message)
    : std::runtime_error(user.empty()
                             ? "stage " + stage_name + ": " + message
                             : "stage " + stage_name + " (user " + user + "): " + message),
      stage(std::move(stage_name)),
      user_id(std::move(user)) {}

namespace {

template <typename F>
auto guard(const char* stage, const std::string& user, F&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, user, e.what());
  }
}

long parse_long(const std::string& value) {
  std::size_t used = 0;
  const long v = std::stol(value, &used);
  if (used != value.size()) throw std::invalid_argument("trailing characters in \"" + value + "\"");
  return v;
}

std::uint64_t parse_u64(const std::string& value) {
  if (value.find('-') != std::string::npos) {
    throw std::invalid_argument("seed must be nonnegative: \"" + value + "\"");
  }
  std::size_t used = 0;
  const unsigned long long v = std::stoull(value, &used);
  if (used != value.size()) throw std::invalid_argument("trailing characters in \"" + value + "\"");
  return v;
}

// "7", "1,2,3", or inclusive "100..199".
std::vector<std::uint64_t> parse_seed_list(const std::string& value) {
  std::vector<std::uint64_t> seeds;
  const auto range = value.find("..");
  if (range != std::string::npos) {
    const std::uint64_t lo = parse_u64(value.substr(0, range));
    const std::uint64_t hi = parse_u64(value.substr(range + 2));
    if (hi < lo) throw std::invalid_argument("seed range is empty");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) seeds.push_back(parse_u64(item));
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value) {
  auto input = [&]() -> InputPaths& {
    if (!config.input) config.input.emplace();
    return *config.input;
  };
  auto synth = [&]() -> synthgen::SynthConfig& {
    if (!config.synth) config.synth.emplace();
    return *config.synth;
  };
  try {
    if (key == "input.logon") input().logon_csv = value;
    else if (key == "input.device") input().device_csv = value;
    else if (key == "input.http") input().http_csv = value;
    else if (key == "input.email") input().email_csv = value;
    else if (key == "input.file") input().file_csv = value;
    else if (key == "input.labels") input().label_sidecar = value;
    else if (key == "synth.users") synth().n_users = static_cast<int>(parse_long(value));
    else if (key == "synth.days") synth().n_days = static_cast<int>(parse_long(value));
    else if (key == "synth.behaviors") synth().behaviors_per_user = static_cast<int>(parse_long(value));
    else if (key == "synth.anomaly_users") synth().anomaly_users = static_cast<int>(parse_long(value));
    else if (key == "synth.anomaly_days") synth().anomaly_days_per_user = static_cast<int>(parse_long(value));
    else if (key == "synth.separation") synth().separation = parse_double(value);
    else if (key == "embedding.dim") config.embedding.dim = static_cast<int>(parse_long(value));
    else if (key == "embedding.window") config.embedding.window = static_cast<int>(parse_long(value));
    else if (key == "embedding.negatives") config.embedding.negatives = static_cast<int>(parse_long(value));
    else if (key == "embedding.epochs") config.embedding.epochs = static_cast<int>(parse_long(value));
    else if (key == "embedding.learning_rate") config.embedding.learning_rate = parse_double(value);
    else if (key == "embedding.learning_rate_min") config.embedding.learning_rate_min = parse_double(value);
    else if (key == "fit.k_max") config.fit.k = static_cast<int>(parse_long(value));
    else if (key == "fit.reg_covar") config.fit.reg_covar = parse_double(value);
    else if (key == "fit.tol") config.fit.tol = parse_double(value);
    else if (key == "fit.max_iter") config.fit.max_iter = static_cast<int>(parse_long(value));
    else if (key == "fit.n_init") config.fit.n_init = static_cast<int>(parse_long(value));
    else if (key == "fit.weight_concentration") config.fit.weight_concentration = parse_double(value);
    else if (key == "threshold") config.threshold = parse_double(value);
    else if (key == "variant") config.variant = variant_from_string(value);
    else if (key == "seeds") config.seeds = parse_seed_list(value);
    else if (key == "output_dir") config.output_dir = value;
    else if (key == "threads") config.threads = static_cast<int>(parse_long(value));
    else throw std::invalid_argument("unknown config key");
  } catch (const std::exception& e) {
    throw std::invalid_argument("config key \"" + key + "\" = \"" + value + "\": " + e.what());
  }
}

RunConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_config_entry(config, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct UserWork {
  std::string user_id;
  std::vector<ingest::UserDaySequence> sequences;
  UserArtifacts artifacts;
  std::vector<detection::ScoredDay> scored;  // normalized, not yet flagged
  std::string warning;
};

// Everything a seed produces before flagging/evaluation; sweep reuses this.
struct SeedComputation {
  SeedArtifacts artifacts;
  std::vector<detection::ScoredDay> scored;  // pooled over users, (user, day) order
  bool labeled = false;
  double embed_ms = 0.0;
  double fit_ms = 0.0;
  double score_ms = 0.0;
};

void process_user(const RunConfig& config, std::uint64_t seed, const std::string& users_dir,
                  UserWork& work, double& embed_ms, double& fit_ms, double& score_ms) {
  const std::string& user = work.user_id;
  const std::string dir = users_dir + "/" + user_file_tag(user);
  fs::create_directories(dir);

  auto t0 = Clock::now();
  embedding::EmbeddingTable table;
  std::vector<embedding::DaySummary> summaries;
  guard("embed", user, [&] {
    embedding::EmbeddingConfig ec = config.embedding;
    ec.seed = user_embed_seed(seed, user);
    table = embedding::train_skipgram(work.sequences, ec);
    work.artifacts.table_json = dir + "/table.json";
    embedding::save_table_json(work.artifacts.table_json, table, ec);
    summaries = embedding::summarize_all(work.sequences, table);
    work.artifacts.summaries_csv = dir + "/summaries.csv";
    embedding::write_summaries_csv(work.artifacts.summaries_csv, summaries);
  });
  embed_ms += ms_since(t0);

  t0 = Clock::now();
  mixture::MixtureModel model;
  guard("fit", user, [&] {
    mixture::FitConfig fc = config.fit;
    fc.seed = user_fit_seed(seed, user);
    const Eigen::MatrixXd X = embedding::summary_matrix(summaries);
    mixture::FitReport report;
    if (config.variant.kind == ModelKind::kBgmm) {
      std::tie(model, report) = mixture::fit_bgmm(X, fc);
    } else {
      // EM cannot place more components than rows; short users get K capped.
      fc.k = std::min(config.variant.fixed_k, static_cast<int>(X.rows()));
      std::tie(model, report) = mixture::fit_gmm_em(X, fc);
    }
    work.artifacts.model_json = dir + "/model.json";
    mixture::save_model_json(work.artifacts.model_json, user, model, fc, report);
  });
  fit_ms += ms_since(t0);

  t0 = Clock::now();
  guard("score", user, [&] {
    work.scored = detection::normalize_scores(detection::score_user_days(summaries, model),
                                              &work.warning);
  });
  score_ms += ms_since(t0);
}

SeedComputation compute_seed(const RunConfig& config, std::uint64_t seed) {
  SeedComputation out;
  SeedArtifacts& sa = out.artifacts;
  sa.seed = seed;
  sa.seed_dir = config.output_dir + "/seed-" + std::to_string(seed);
  fs::create_directories(sa.seed_dir);

  // Resolve the input source; a synthetic corpus is drawn from the run seed.
  InputPaths paths;
  auto t0 = Clock::now();
  if (config.synth) {
    guard("synth", "", [&] {
      synthgen::SynthConfig sc = *config.synth;
      sc.seed = seed;
      sa.corpus_dir = sa.seed_dir + "/corpus";
      const synthgen::SynthManifest m = synthgen::generate_org(sc, sa.corpus_dir);
      paths = InputPaths{m.logon_csv, m.device_csv, m.http_csv,
                         m.email_csv, m.file_csv,  m.label_sidecar};
    });
  } else {
    paths = *config.input;
  }
  const double synth_ms = ms_since(t0);

  t0 = Clock::now();
  std::vector<ingest::UserDaySequence> sequences;
  guard("ingest", "", [&] {
    std::vector<ingest::AuditEvent> events;
    const std::pair<const std::string*, ingest::Domain> domains[] = {
        {&paths.logon_csv, ingest::Domain::Logon}, {&paths.device_csv, ingest::Domain::Device},
        {&paths.http_csv, ingest::Domain::Http},   {&paths.email_csv, ingest::Domain::Email},
        {&paths.file_csv, ingest::Domain::File},
    };
    for (const auto& [path, domain] : domains) {
      std::vector<ingest::AuditEvent> part = ingest::parse_domain_csv(*path, domain);
      events.insert(events.end(), part.begin(), part.end());
    }
    if (paths.label_sidecar) {
      const ingest::LabelSet labels = ingest::read_label_sidecar(*paths.label_sidecar);
      sequences = ingest::aggregate_user_days(events, &labels);
      out.labeled = true;
    } else {
      sequences = ingest::aggregate_user_days(events, nullptr);
    }
    sa.sequences_csv = sa.seed_dir + "/sequences.csv";
    ingest::write_sequences_csv(sa.sequences_csv, sequences);
  });
  const double ingest_ms = ms_since(t0);

  // Sequences arrive sorted by (user, day); split into contiguous user runs.
  std::vector<UserWork> users;
  for (auto& seq : sequences) {
    if (users.empty() || users.back().user_id != seq.user_id) {
      users.emplace_back();
      users.back().user_id = seq.user_id;
      users.back().artifacts.user_id = seq.user_id;
    }
    users.back().sequences.push_back(std::move(seq));
  }

  const std::string users_dir = sa.seed_dir + "/users";
  if (config.threads <= 1) {
    for (UserWork& work : users) {
      process_user(config, seed, users_dir, work, out.embed_ms, out.fit_ms, out.score_ms);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(users.size());
    std::vector<double> embed(users.size(), 0.0), fit(users.size(), 0.0), score(users.size(), 0.0);
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < users.size(); i = next.fetch_add(1)) {
        try {
          process_user(config, seed, users_dir, users[i], embed[i], fit[i], score[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(config.threads, static_cast<int>(users.size()));
    for (int i = 0; i < std::max(n, 1); ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    for (std::size_t i = 0; i < users.size(); ++i) {
      if (errors[i]) std::rethrow_exception(errors[i]);  // first user in order wins
      out.embed_ms += embed[i];
      out.fit_ms += fit[i];
      out.score_ms += score[i];
    }
  }

  for (UserWork& work : users) {
    if (!work.warning.empty()) {
      std::cerr << "[seed " << seed << "] warning: " << work.warning << "\n";
    }
    sa.users.push_back(std::move(work.artifacts));
    out.scored.insert(out.scored.end(), work.scored.begin(), work.scored.end());
  }

  std::cerr << "[seed " << seed << "] "
            << (config.synth ? "synth " + std::to_string(static_cast<long>(synth_ms)) + " ms | "
                             : std::string())
            << "ingest " << static_cast<long>(ingest_ms) << " ms | embed "
            << static_cast<long>(out.embed_ms) << " ms | fit " << static_cast<long>(out.fit_ms)
            << " ms | score " << static_cast<long>(out.score_ms) << " ms (" << users.size()
            << " users)\n";
  return out;
}

// Metrics at one threshold plus the ROC/AUC when both classes are present.
struct Evaluation {
  evaluation::ConfusionMatrix cm;
  evaluation::Metrics metrics;
  std::optional<evaluation::RocCurve> roc;
};

Evaluation evaluate_scored(const std::vector<detection::ScoredDay>& scored) {
  Evaluation ev;
  ev.cm = evaluation::confusion(scored);
  ev.metrics = evaluation::metrics(ev.cm);
  const bool both_classes = (ev.cm.tp + ev.cm.fn) > 0 && (ev.cm.tn + ev.cm.fp) > 0;
  if (both_classes) ev.roc = evaluation::roc_curve(scored);
  return ev;
}

json artifacts_to_json(const SeedArtifacts& sa) {
  json users = json::array();
  for (const UserArtifacts& u : sa.users) {
    users.push_back({{"user", u.user_id},
                     {"table_json", u.table_json},
                     {"summaries_csv", u.summaries_csv},
                     {"model_json", u.model_json}});
  }
  auto path_or_null = [](const std::string& p) { return p.empty() ? json() : json(p); };
  return {{"seed", sa.seed},
          {"seed_dir", sa.seed_dir},
          {"corpus_dir", path_or_null(sa.corpus_dir)},
          {"sequences_csv", sa.sequences_csv},
          {"scored_csv", sa.scored_csv},
          {"metrics_json", path_or_null(sa.metrics_json)},
          {"roc_csv", path_or_null(sa.roc_csv)},
          {"users", users}};
}

SeedArtifacts artifacts_from_json(const json& j) {
  SeedArtifacts sa;
  sa.seed = j.at("seed").get<std::uint64_t>();
  sa.seed_dir = j.at("seed_dir").get<std::string>();
  if (!j.at("corpus_dir").is_null()) sa.corpus_dir = j.at("corpus_dir").get<std::string>();
  sa.sequences_csv = j.at("sequences_csv").get<std::string>();
  sa.scored_csv = j.at("scored_csv").get<std::string>();
  if (!j.at("metrics_json").is_null()) sa.metrics_json = j.at("metrics_json").get<std::string>();
  if (!j.at("roc_csv").is_null()) sa.roc_csv = j.at("roc_csv").get<std::string>();
  for (const json& u : j.at("users")) {
    sa.users.push_back({u.at("user").get<std::string>(), u.at("table_json").get<std::string>(),
                        u.at("summaries_csv").get<std::string>(),
                        u.at("model_json").get<std::string>()});
  }
  return sa;
}

}  // namespace

void write_run_manifest(const std::string& path, const RunManifest& manifest) {
  json seeds = json::array();
  for (const SeedArtifacts& sa : manifest.seeds) seeds.push_back(artifacts_to_json(sa));
  const json j = {{"output_dir", manifest.output_dir},
                  {"stability_json",
                   manifest.stability_json.empty() ? json() : json(manifest.stability_json)},
                  {"seeds", seeds}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

RunManifest read_run_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j = json::parse(in);
  RunManifest m;
  m.output_dir = j.at("output_dir").get<std::string>();
  m.manifest_json = path;
  if (!j.at("stability_json").is_null()) m.stability_json = j.at("stability_json").get<std::string>();
  for (const json& s : j.at("seeds")) m.seeds.push_back(artifacts_from_json(s));
  return m;
}

RunManifest run(const RunConfig& config) {
  config.validate();
  fs::create_directories(config.output_dir);

  RunManifest manifest;
  manifest.output_dir = config.output_dir;
  std::vector<evaluation::RunMetrics> per_seed_metrics;

  for (const std::uint64_t seed : config.seeds) {
    SeedComputation c = compute_seed(config, seed);
    SeedArtifacts& sa = c.artifacts;

    auto t0 = Clock::now();
    std::vector<detection::ScoredDay> scored =
        guard("flag", "", [&] { return detection::flag_anomalies(std::move(c.scored), config.threshold); });
    sa.scored_csv = sa.seed_dir + "/scored.csv";
    guard("flag", "", [&] { detection::write_scored_csv(sa.scored_csv, scored); });
    const double flag_ms = ms_since(t0);

    double evaluate_ms = 0.0;
    if (c.labeled) {
      t0 = Clock::now();
      guard("evaluate", "", [&] {
        const Evaluation ev = evaluate_scored(scored);
        std::optional<double> auc;
        if (ev.roc) {
          sa.roc_csv = sa.seed_dir + "/roc.csv";
          evaluation::write_roc_csv(sa.roc_csv, *ev.roc);
          auc = ev.roc->auc;
        } else {
          std::cerr << "[seed " << seed << "] single-class labels, roc skipped\n";
        }
        sa.metrics_json = sa.seed_dir + "/metrics.json";
        evaluation::write_metrics_json(sa.metrics_json, ev.cm, ev.metrics, auc, config.threshold,
                                       seed);
        per_seed_metrics.push_back({ev.metrics.fpr, ev.metrics.recall, ev.metrics.tnr,
                                    ev.metrics.accuracy, auc});
      });
      evaluate_ms = ms_since(t0);
    }
    std::cerr << "[seed " << seed << "] flag " << static_cast<long>(flag_ms) << " ms | evaluate "
              << static_cast<long>(evaluate_ms) << " ms\n";
    manifest.seeds.push_back(std::move(sa));
  }

  if (!per_seed_metrics.empty()) {
    manifest.stability_json = config.output_dir + "/stability.json";
    guard("evaluate", "", [&] {
      evaluation::write_stability_json(manifest.stability_json,
                                       evaluation::stability_report(per_seed_metrics));
    });
  }

  manifest.manifest_json = config.output_dir + "/manifest.json";
  write_run_manifest(manifest.manifest_json, manifest);
  return manifest;
}

SweepResult sweep_thresholds(const RunConfig& config, const std::vector<double>& thresholds) {
  config.validate();
  if (thresholds.empty()) throw std::invalid_argument("at least one threshold required");
  fs::create_directories(config.output_dir);

  SeedComputation c = compute_seed(config, config.seeds.front());
  if (!c.labeled) {
    throw StageError("evaluate", "", "threshold sweep requires a labeled corpus");
  }

  SweepResult result;
  result.sweep_dir = config.output_dir + "/sweep";
  fs::create_directories(result.sweep_dir);

  // The scored csv is persisted with flags at the configured threshold; the
  // ratios it carries are what every sweep point reuses.
  c.artifacts.scored_csv = c.artifacts.seed_dir + "/scored.csv";
  std::vector<detection::ScoredDay> scored =
      detection::flag_anomalies(std::move(c.scored), config.threshold);
  guard("flag", "", [&] { detection::write_scored_csv(c.artifacts.scored_csv, scored); });

  guard("evaluate", "", [&] {
    const evaluation::ConfusionMatrix base = evaluation::confusion(scored);
    if ((base.tp + base.fn) > 0 && (base.tn + base.fp) > 0) {
      const evaluation::RocCurve roc = evaluation::roc_curve(scored);
      result.roc_csv = result.sweep_dir + "/roc.csv";
      evaluation::write_roc_csv(result.roc_csv, roc);
      result.auc = roc.auc;
    }
    json rows = json::array();
    auto opt = [](std::optional<double> v) { return v ? json(*v) : json(); };
    for (const double t : thresholds) {
      ThresholdMetrics tm;
      tm.threshold = t;
      const std::vector<detection::ScoredDay> flagged = detection::flag_anomalies(scored, t);
      tm.confusion = evaluation::confusion(flagged);
      tm.metrics = evaluation::metrics(tm.confusion);
      rows.push_back({{"threshold", t},
                      {"tp", tm.confusion.tp},
                      {"fp", tm.confusion.fp},
                      {"tn", tm.confusion.tn},
                      {"fn", tm.confusion.fn},
                      {"fpr", opt(tm.metrics.fpr)},
                      {"recall", opt(tm.metrics.recall)},
                      {"tnr", opt(tm.metrics.tnr)},
                      {"accuracy", opt(tm.metrics.accuracy)}});
      result.rows.push_back(std::move(tm));
    }
    const json j = {{"seed", config.seeds.front()},
                    {"auc", opt(result.auc)},
                    {"thresholds", rows}};
    result.metrics_json = result.sweep_dir + "/sweep_metrics.json";
    std::ofstream out(result.metrics_json, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + result.metrics_json);
    out << j.dump(2) << "\n";
  });
  return result;
}

}  // namespace daywatch::pipeline
