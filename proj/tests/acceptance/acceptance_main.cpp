// Acceptance checks, one printed line per criterion, nonzero exit when any
// fails. Optional arguments select criterion numbers (default: all). The
// external-dataset integration check (criterion 9) runs from its own binary
// and is reported here as skipped.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "daywatch/detection.hpp"
#include "daywatch/embedding.hpp"
#include "daywatch/evaluation.hpp"
#include "daywatch/hash.hpp"
#include "daywatch/mixture.hpp"
#include "daywatch/pipeline.hpp"
#include "daywatch/synthgen.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using namespace daywatch;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  bool skipped = false;
  std::string detail;
};

bool nearly(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

// 1. Rate metrics against hand-evaluated closed forms on pinned counts.
Outcome criterion1() {
  evaluation::ConfusionMatrix cm;
  cm.tp = 863;
  cm.fn = 106;
  cm.fp = 22960;
  cm.tn = 306526;
  const evaluation::Metrics m = evaluation::metrics(cm);

  const double recall = 863.0 / (863.0 + 106.0);
  const double fpr = 22960.0 / (306526.0 + 22960.0);
  const double tnr = 306526.0 / (306526.0 + 22960.0);
  const double accuracy = (863.0 + 306526.0) / (863.0 + 106.0 + 22960.0 + 306526.0);

  bool ok = m.recall && m.fpr && m.tnr && m.accuracy;
  ok = ok && nearly(*m.recall, recall, 1e-6) && nearly(*m.recall, 0.890608875128999, 1e-6);
  ok = ok && nearly(*m.fpr, fpr, 1e-6) && nearly(*m.fpr, 0.069684296146118, 1e-6);
  ok = ok && nearly(*m.tnr, tnr, 1e-6) && nearly(*m.tnr, 0.930315703853882, 1e-6);
  ok = ok && nearly(*m.accuracy, accuracy, 1e-6) && nearly(*m.accuracy, 0.930199270702516, 1e-6);
  return {ok, false,
          fmt("recall %.6f fpr %.6f tnr %.6f accuracy %.6f", m.recall.value_or(-1),
              m.fpr.value_or(-1), m.tnr.value_or(-1), m.accuracy.value_or(-1))};
}

Eigen::MatrixXd three_cluster_data(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> spread(-10.0, 10.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::MatrixXd X(300, 2);
  for (int c = 0; c < 3; ++c) {
    const double mx = spread(rng);
    const double my = spread(rng);
    for (int i = 0; i < 100; ++i) {
      X(c * 100 + i, 0) = mx + noise(rng);
      X(c * 100 + i, 1) = my + noise(rng);
    }
  }
  return X;
}

// Shared by criteria 2 and 3: every objective trace nondecreasing within 1e-8.
template <typename Fit>
Outcome monotone_traces(int k, Fit fit) {
  int bad = 0;
  double worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    const Eigen::MatrixXd X = three_cluster_data(200 + static_cast<std::uint64_t>(seed));
    mixture::FitConfig fc;
    fc.k = k;
    fc.seed = static_cast<std::uint64_t>(seed);
    const auto [model, report] = fit(X, fc);
    bool violated = false;
    for (std::size_t i = 0; i + 1 < report.objective_trace.size(); ++i) {
      const double step = report.objective_trace[i + 1] - report.objective_trace[i];
      worst = std::min(worst, step);
      if (step < -1e-8) violated = true;
    }
    if (violated) ++bad;
  }
  return {bad == 0, false, fmt("%d/100 monotone traces, worst step %.3g", 100 - bad, worst)};
}

Outcome criterion2() {
  return monotone_traces(3, [](const Eigen::MatrixXd& X, const mixture::FitConfig& fc) {
    return mixture::fit_gmm_em(X, fc);
  });
}

Outcome criterion3() {
  return monotone_traces(10, [](const Eigen::MatrixXd& X, const mixture::FitConfig& fc) {
    return mixture::fit_bgmm(X, fc);
  });
}

// 4. Effective component count recovers the true k on well-separated data.
Outcome criterion4() {
  const double centers[5][2] = {{0, 0}, {6, 0}, {0, 6}, {6, 6}, {12, 6}};
  bool ok = true;
  std::string detail;
  for (int k = 1; k <= 5; ++k) {
    int hits = 0;
    for (int seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(splitmix64(mix_seed(40000 + static_cast<std::uint64_t>(k),
                                              static_cast<std::uint64_t>(seed))));
      std::normal_distribution<double> noise(0.0, 1.0);
      Eigen::MatrixXd X(200 * k, 2);
      for (int c = 0; c < k; ++c) {
        for (int i = 0; i < 200; ++i) {
          X(c * 200 + i, 0) = centers[c][0] + noise(rng);
          X(c * 200 + i, 1) = centers[c][1] + noise(rng);
        }
      }
      mixture::FitConfig fc;
      fc.k = 10;
      fc.tol = 1e-6;
      fc.max_iter = 500;
      fc.n_init = 8;
      fc.seed = static_cast<std::uint64_t>(seed);
      const auto [model, report] = mixture::fit_bgmm(X, fc);
      if (mixture::effective_components(model) == k) ++hits;
    }
    ok = ok && hits >= 95;
    detail += fmt("k=%d:%d/100 ", k, hits);
  }
  detail.pop_back();
  return {ok, false, detail};
}

// 5. Analytic pair gradients against central finite differences.
Outcome criterion5() {
  std::mt19937_64 rng(splitmix64(555));
  std::normal_distribution<double> g(0.0, 0.7);
  const int d = 8;
  Eigen::VectorXd center(d), context(d);
  std::vector<Eigen::VectorXd> negatives(1, Eigen::VectorXd(d));
  for (int i = 0; i < d; ++i) {
    center[i] = g(rng);
    context[i] = g(rng);
    negatives[0][i] = g(rng);
  }

  const embedding::SgnsPairGradients grad =
      embedding::sgns_pair_gradients(center, context, negatives);
  const double h = 1e-5;
  double worst = 0.0;
  auto probe = [&](Eigen::VectorXd& v, int i, double analytic) {
    const double saved = v[i];
    v[i] = saved + h;
    const double up = embedding::sgns_pair_loss(center, context, negatives);
    v[i] = saved - h;
    const double dn = embedding::sgns_pair_loss(center, context, negatives);
    v[i] = saved;
    const double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(1e-8, std::abs(fd)));
  };
  for (int i = 0; i < d; ++i) probe(center, i, grad.center[i]);
  for (int i = 0; i < d; ++i) probe(context, i, grad.context[i]);
  for (int i = 0; i < d; ++i) probe(negatives[0], i, grad.negatives[0][i]);
  return {worst < 1e-4, false, fmt("worst relative error %.3g over %d parameters", worst, 3 * d)};
}

// 6. Trapezoidal AUC equals the brute-force pairwise probability.
Outcome criterion6() {
  double worst = 0.0;
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(splitmix64(6000 + static_cast<std::uint64_t>(seed)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = 50 + static_cast<int>(rng() % 951);
    std::vector<double> ratios(static_cast<std::size_t>(n));
    std::vector<bool> labels(static_cast<std::size_t>(n));
    int positives = 0;
    for (int i = 0; i < n; ++i) {
      // Half the scores land on a five-value grid so ties are common.
      ratios[static_cast<std::size_t>(i)] =
          unit(rng) < 0.5 ? 0.5 * static_cast<double>(rng() % 5) : 3.0 * unit(rng);
      const bool pos = unit(rng) < 0.3;
      labels[static_cast<std::size_t>(i)] = pos;
      positives += pos ? 1 : 0;
    }
    if (positives == 0) labels[0] = true;
    if (positives == n) labels[0] = false;

    const double auc = evaluation::roc_from_scores(ratios, labels).auc;
    double wins = 0.0;
    long pairs = 0;
    for (int i = 0; i < n; ++i) {
      if (!labels[static_cast<std::size_t>(i)]) continue;
      for (int j = 0; j < n; ++j) {
        if (labels[static_cast<std::size_t>(j)]) continue;
        ++pairs;
        const double a = ratios[static_cast<std::size_t>(i)];
        const double b = ratios[static_cast<std::size_t>(j)];
        wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
      }
    }
    worst = std::max(worst, std::abs(auc - wins / static_cast<double>(pairs)));
  }
  return {worst <= 1e-9, false, fmt("worst |auc - pairwise| = %.3g over 50 score sets", worst)};
}

// 7. Full pipeline with defaults on the 50-user corpus, 100 seeds.
Outcome criterion7(const std::string& work) {
  pipeline::RunConfig config;
  config.synth.emplace();
  config.seeds.clear();
  for (int s = 0; s < 100; ++s) config.seeds.push_back(1000 + static_cast<std::uint64_t>(s));
  config.output_dir = work + "/e2e";
  const pipeline::RunManifest manifest = pipeline::run(config);

  int passing = 0;
  double min_auc = 1.0, min_recall = 1.0, min_oracle = 1.0;
  for (const pipeline::SeedArtifacts& sa : manifest.seeds) {
    const double auc = parse_json_file(sa.metrics_json).at("auc").get<double>();
    const evaluation::RocCurve roc = evaluation::read_roc_csv(sa.roc_csv);
    double recall = 0.0;
    for (const evaluation::RocPoint& p : roc.points) {
      if (p.fpr <= 0.1) recall = std::max(recall, p.tpr);
    }
    const synthgen::SynthManifest sm = synthgen::read_manifest(sa.corpus_dir + "/manifest.json");
    const synthgen::OrgTruth truth = synthgen::read_ground_truth(sm.ground_truth_json);
    const double oracle = evaluation::roc_curve(synthgen::oracle_scores(truth)).auc;

    if (auc >= 0.9 && recall >= 0.8) ++passing;
    min_auc = std::min(min_auc, auc);
    min_recall = std::min(min_recall, recall);
    min_oracle = std::min(min_oracle, oracle);
  }
  const bool ok = passing >= 90 && min_oracle >= 0.99;
  return {ok, false,
          fmt("%d/100 seeds with auc >= 0.9 and recall@fpr<=0.1 >= 0.8 "
              "(min auc %.4f, min recall %.3f, min oracle auc %.4f)",
              passing, min_auc, min_recall, min_oracle)};
}

// 8. Mean recall over 20 seeds: adaptive component count vs one component.
Outcome criterion8(const std::string& work) {
  auto mean_recall = [&work](const std::string& variant) {
    pipeline::RunConfig config;
    config.synth.emplace();
    config.variant = pipeline::variant_from_string(variant);
    config.seeds.clear();
    for (int s = 0; s < 20; ++s) config.seeds.push_back(2000 + static_cast<std::uint64_t>(s));
    config.output_dir = work + "/variant-" + variant;
    const pipeline::RunManifest manifest = pipeline::run(config);
    double total = 0.0;
    for (const pipeline::SeedArtifacts& sa : manifest.seeds) {
      total += parse_json_file(sa.metrics_json).at("recall").get<double>();
    }
    return total / static_cast<double>(manifest.seeds.size());
  };
  const double bgmm = mean_recall("bgmm");
  const double gmm1 = mean_recall("gmm-fixed-1");
  return {bgmm >= gmm1, false, fmt("mean recall bgmm %.4f vs gmm-fixed-1 %.4f", bgmm, gmm1)};
}

Outcome criterion9() {
  return {true, true,
          "optional external-dataset integration; build target daywatch_cert and run it with "
          "CERT_R42_DIR set"};
}

// 10. Repeated single-threaded run is byte-identical.
Outcome criterion10(const std::string& work) {
  auto one_run = [&work](const std::string& tag) {
    pipeline::RunConfig config;
    synthgen::SynthConfig sc;
    sc.n_users = 1;
    sc.n_days = 10;
    sc.behaviors_per_user = 1;
    sc.anomaly_users = 1;
    sc.anomaly_days_per_user = 2;
    config.synth = sc;
    config.variant = pipeline::variant_from_string("gmm-fixed-1");
    config.seeds = {7};
    config.threads = 1;
    config.output_dir = work + "/determinism-" + tag;
    return pipeline::run(config);
  };
  const pipeline::RunManifest a = one_run("a");
  const pipeline::RunManifest b = one_run("b");
  const bool scored_equal = slurp(a.seeds[0].scored_csv) == slurp(b.seeds[0].scored_csv);
  const bool metrics_equal = slurp(a.seeds[0].metrics_json) == slurp(b.seeds[0].metrics_json);
  return {scored_equal && metrics_equal, false,
          fmt("scored csv %s, metrics json %s", scored_equal ? "identical" : "differs",
              metrics_equal ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  const std::string work = (fs::temp_directory_path() / "daywatch-acceptance").string();
  fs::remove_all(work);
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "metric arithmetic", [] { return criterion1(); }},
      {2, "EM objective monotonicity", [] { return criterion2(); }},
      {3, "variational lower bound monotonicity", [] { return criterion3(); }},
      {4, "component-count recovery", [] { return criterion4(); }},
      {5, "skip-gram gradient check", [] { return criterion5(); }},
      {6, "AUC pairwise-oracle equality", [] { return criterion6(); }},
      {7, "end-to-end synthetic detection", [&work] { return criterion7(work); }},
      {8, "adaptive vs fixed single component", [&work] { return criterion8(work); }},
      {9, "external dataset integration", [] { return criterion9(); }},
      {10, "single-threaded determinism", [&work] { return criterion10(work); }},
  };

  bool all_pass = true;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && selected.find(c.id) == selected.end()) continue;
    const auto t0 = Clock::now();
    Outcome outcome;
    try {
      outcome = c.fn();
    } catch (const std::exception& e) {
      outcome = {false, false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("criterion %2d (%s): %s [%.1fs] %s\n", c.id, c.title,
                outcome.skipped ? "SKIP" : (outcome.pass ? "PASS" : "FAIL"), secs,
                outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.skipped && !outcome.pass) all_pass = false;
  }

  fs::remove_all(work);
  return all_pass ? 0 : 1;
}
